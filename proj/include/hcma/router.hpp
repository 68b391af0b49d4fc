#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcma/chain.hpp"
#include "hcma/records.hpp"

namespace hcma {

enum class EndpointMode { multiple_choice, free_form_ptrue };
std::string_view to_string(EndpointMode m);
EndpointMode parse_endpoint_mode(std::string_view name);

/// What to do when some configured choice tokens are absent from the
/// returned top log-probabilities.
enum class MissingChoicePolicy { error, renormalize };
/// What to do when an endpoint call fails.
enum class FailurePolicy { fail, skip };

inline constexpr std::string_view kDefaultVerificationTemplate =
    "Question: {question}\nProposed answer: {answer}\nIs the proposed answer correct? Reply with Y or N only.";

struct EndpointSpec {
  std::string model_id;
  std::string base_url;      ///< e.g. https://api.example.com/v1
  std::string api_key_env;   ///< environment variable holding the bearer token; empty: none
  std::string api_model;     ///< model name sent upstream; defaults to model_id
  EndpointMode mode = EndpointMode::multiple_choice;
  std::vector<std::string> choice_tokens{"A", "B", "C", "D"};  ///< labels; matched after trimming whitespace
  std::vector<std::string> yes_tokens{"Y", "Yes"};
  std::vector<std::string> no_tokens{"N", "No"};
  std::string prompt_template = "{question}";
  std::string verification_prompt_template{kDefaultVerificationTemplate};
  int timeout_ms = 30000;
  int max_answer_tokens = 256;

  /// ConfigError on an inconsistent endpoint (free-form without a verification
  /// template, empty choice set, nonpositive timeout).
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct Confidence {
  double raw_prob = 0.0;
  std::string label;     ///< argmax choice (multiple choice) or Y/N
  bool warning = false;  ///< some tokens were missing and the rest renormalized
};

/// Softmax over the labels' total probability mass, returning the maximum.
/// Tokens map to a label when equal after trimming whitespace.
Confidence choice_confidence(const std::vector<TokenLogprob>& top, const std::vector<std::string>& labels,
                             MissingChoicePolicy policy);
/// Normalized mass of yes over {yes, no}.
Confidence ptrue_confidence(const std::vector<TokenLogprob>& top, const std::vector<std::string>& yes,
                            const std::vector<std::string>& no, MissingChoicePolicy policy);

/// Reads chat-completions `choices[0].logprobs.content[*].top_logprobs`,
/// using the first position that carries any relevant token. ProviderError
/// when the provider returned no log-probabilities.
Confidence extract_confidence(const nlohmann::json& response, const EndpointSpec& spec, EndpointMode mode,
                              MissingChoicePolicy policy);

// ---------------------------------------------------------------------------

struct RouteRequest {
  std::string query;
  std::optional<std::string> query_id;
};

struct HopResult {
  double raw_prob = 0.0;
  std::string answer;
  bool warning = false;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::optional<double> latency_ms;  ///< measured or recorded call latency
  std::optional<bool> correct;       ///< known in replay only
};

/// One upstream model. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual HopResult query(const ModelProfile& model, const RouteRequest& request) = 0;
};

/// Serves recorded raw probabilities. The lookup key is the request's
/// query_id, or its query text when no id is given.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(Dataset records);
  HopResult query(const ModelProfile& model, const RouteRequest& request) override;
  const Dataset& records() const { return records_; }

 private:
  Dataset records_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Chat-completions client. Multiple-choice endpoints make one call with
/// max_tokens = 1; free-form endpoints answer first and then ask the
/// verification prompt.
class OpenAIChatBackend : public Backend {
 public:
  OpenAIChatBackend(std::vector<EndpointSpec> endpoints, MissingChoicePolicy policy);
  HopResult query(const ModelProfile& model, const RouteRequest& request) override;
  const EndpointSpec& endpoint(const std::string& model_id) const;

 private:
  nlohmann::json post(const EndpointSpec& spec, const nlohmann::json& body, double& elapsed_ms) const;
  std::vector<EndpointSpec> endpoints_;
  MissingChoicePolicy policy_;
};

std::string render_template(std::string_view tmpl, std::string_view question, std::string_view answer = {});

// ---------------------------------------------------------------------------

struct RouterConfig {
  ChainConfig chain;
  std::vector<EndpointSpec> endpoints;
  FailurePolicy on_failure = FailurePolicy::fail;
  MissingChoicePolicy missing_choice = MissingChoicePolicy::error;
  std::optional<CostAccounting> accounting;  ///< unset: tokens for live calls, resolved from records in replay
};

/// Chain fields as in chain_from_json plus "endpoints", "on_failure"
/// (fail|skip), "missing_choice" (error|renormalize) and "cost_accounting"
/// (flat|tokens|latency).
RouterConfig router_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RouterConfig load_router_config(const std::filesystem::path& path);

struct HopReport {
  std::string model_id;
  std::optional<double> raw_prob;
  std::optional<double> p_hat;
  Decision decision = Decision::delegate;
  bool skipped = false;
  bool warning = false;
  std::string error;
  double latency_ms = 0.0;
  std::int64_t cost_units = 0;
};

enum class RouteStatus { answered, abstained };
std::string_view to_string(RouteStatus s);

struct RouteResponse {
  RouteStatus status = RouteStatus::abstained;
  std::string answer;
  std::string terminal_model_id;
  std::vector<HopReport> hops;
  ChainTrace trace;
  double effective_cost = 0.0;
  double total_latency_ms = 0.0;
  std::string error;  ///< set when the chain was exhausted by failures
};

nlohmann::ordered_json to_json(const RouteResponse& r, bool include_latency = true);

struct ModelCounters {
  std::atomic<std::int64_t> accept{0}, delegate{0}, reject{0}, skipped{0}, terminal{0}, cost_units{0};
};

/// Executes the chain per request; immutable after construction apart from
/// the atomic counters.
class Router {
 public:
  Router(RouterConfig config, std::shared_ptr<Backend> backend, CostAccounting accounting);

  /// ProviderError when a member fails under the fail policy.
  RouteResponse route(const RouteRequest& request);

  const RouterConfig& config() const { return config_; }
  CostAccounting accounting() const { return accounting_; }
  nlohmann::ordered_json stats() const;

 private:
  RouterConfig config_;
  std::shared_ptr<Backend> backend_;
  CostAccounting accounting_;
  std::vector<std::unique_ptr<ModelCounters>> counters_;
  std::atomic<std::int64_t> answered_{0}, abstained_{0}, failed_{0};
};

/// HTTP front end: POST /v1/route, GET /healthz, GET /stats.
class RouterService {
 public:
  explicit RouterService(Router& router);
  ~RouterService();
  RouterService(const RouterService&) = delete;
  RouterService& operator=(const RouterService&) = delete;

  /// Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  void listen();  ///< blocks until stop()
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hcma
