#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hcma/calibration.hpp"
#include "hcma/records.hpp"

namespace hcma {

/// A chain member's identity, price and (once fitted) calibrator.
struct ModelProfile {
  std::string model_id;
  double cost_per_mtok = 0.0;  ///< dollars per million tokens
  double latency_ms = 0.0;     ///< fallback when records carry no latency
  std::optional<Calibrator> calibrator;

  /// Calibrated correctness estimate; StateError without a fitted calibrator.
  double p_hat(double raw_prob) const;
};

enum class Decision { reject, delegate, accept };
std::string_view to_string(Decision d);

/// Ordered chain M1 -> ... -> Mk with reject thresholds r and accept
/// thresholds a. The last member has no delegate band: a_k == r_k.
struct ChainMember {
  ModelProfile profile;
  double reject_threshold = 0.0;
  double accept_threshold = 0.0;
};

class ChainConfig {
 public:
  ChainConfig() = default;
  /// Validates finite r <= a per member and forces a_k = r_k.
  explicit ChainConfig(std::vector<ChainMember> members);

  const std::vector<ChainMember>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  const ChainMember& operator[](std::size_t i) const { return members_[i]; }
  std::vector<std::string> model_ids() const;
  std::vector<ModelProfile> profiles() const;

  /// Copy with new thresholds; `accept` may hold k-1 or k values.
  ChainConfig with_thresholds(const std::vector<double>& reject, const std::vector<double>& accept) const;

 private:
  std::vector<ChainMember> members_;
};

/// Decision rule of one member. REJECT if p < r, DELEGATE if r <= p < a,
/// ACCEPT if p >= a; the last member accepts iff p >= r. ConfigError if r > a.
Decision policy_step(double p_hat, double r, double a, bool is_last);

// ---------------------------------------------------------------------------
// Cost accounting.

enum class CostKind { dollars, latency };
std::string_view to_string(CostKind kind);
CostKind parse_cost_kind(std::string_view name);

/// How one model visit is charged. Each visit is measured in integer units so
/// sums are exact and independent of summation order:
///   flat    1 unit per visit, worth cost_per_mtok           (no token counts)
///   tokens  tokens_in + tokens_out, worth cost_per_mtok / 1e6 dollars
///   latency nanoseconds, worth 1e-6 ms (record latency, else profile latency)
enum class CostAccounting { flat, tokens, latency };
std::string_view to_string(CostAccounting a);

/// dollars -> tokens when any chain member has a nonzero token count in the
/// dataset, flat otherwise; latency -> latency.
CostAccounting resolve_accounting(CostKind kind, const Dataset& dataset, const std::vector<std::string>& model_ids);

std::int64_t cost_units(CostAccounting accounting, const ModelProfile& profile, std::int64_t tokens_in,
                        std::int64_t tokens_out, std::optional<double> latency_ms);
double unit_value(CostAccounting accounting, const ModelProfile& profile);

// ---------------------------------------------------------------------------
// Walking the chain.

/// What one chain member reports when queried.
struct HopObservation {
  double raw_prob = 0.0;
  std::int64_t cost_units = 0;
  bool correct = false;  ///< label, when known (simulation only)
};

struct ChainTrace {
  std::size_t terminal_index = 0;
  Decision decision = Decision::reject;  ///< ACCEPT or REJECT
  std::vector<double> p_hat;             ///< per visited member, NaN when skipped
  std::vector<Decision> decisions;       ///< per visited member
  std::vector<std::int64_t> cost_units;  ///< per visited member
  std::vector<bool> skipped;             ///< member produced no observation
  double effective_cost = 0.0;           ///< C_j of the terminal member
  bool exhausted = false;                ///< last member skipped: chain ran out
  bool terminal_correct = false;
};

/// Generic walk shared by simulation and live routing. `observe(j)` returns
/// the observation of member j, or std::nullopt when the member failed and
/// should be passed over (treated as DELEGATE; a failing last member ends
/// the walk with REJECT and `exhausted` set). Members after the terminal one
/// are never observed.
template <typename Observe>
ChainTrace walk_chain(const ChainConfig& config, CostAccounting accounting, Observe&& observe);

/// Simulates one record through the chain.
ChainTrace trace_query(const ChainConfig& config, const QueryRecord& record, CostAccounting accounting);

enum class ErrorMode { plugin, empirical };
std::string_view to_string(ErrorMode m);
ErrorMode parse_error_mode(std::string_view name);

struct PerformancePoint {
  double error = 0.0;
  double abstention = 0.0;
  double expected_cost = 0.0;

  friend bool operator==(const PerformancePoint&, const PerformancePoint&) = default;
};

/// Exact integer sums behind the Monte Carlo estimators. Plug-in error is
/// kept in units of 2^-53: every double 1 - p with p in [0,1] is an integer
/// multiple of 2^-53, so the sum is exact. Converting to a PerformancePoint
/// rounds once per field, so any two evaluation paths that agree on the
/// sums agree bit for bit.
struct PerformanceSums {
  std::int64_t n = 0;
  std::int64_t rejected = 0;
  __int128 plugin_error = 0;        ///< sum of (1 - p_hat) over accepts, 2^-53 units
  std::int64_t empirical_error = 0;  ///< incorrect accepts
  std::vector<__int128> visit_units;  ///< per member: cost units of all visits

  explicit PerformanceSums(std::size_t k = 0) : visit_units(k, 0) {}
  void add(const ChainTrace& trace);
};

/// Converts 1 - p_hat to 2^-53 units (exact).
__int128 plugin_error_units(double p_hat);

PerformancePoint finalize(const PerformanceSums& sums, const std::vector<ModelProfile>& members,
                          CostAccounting accounting, ErrorMode mode);

/// The rounding step behind finalize(), shared with the histogram evaluator.
/// `unit_values[j]` is unit_value() of member j.
inline PerformancePoint finalize_counts(std::int64_t n, std::int64_t rejected, __int128 plugin_error,
                                        std::int64_t empirical_error, std::span<const __int128> visit_units,
                                        std::span<const double> unit_values, ErrorMode mode) {
  const double dn = static_cast<double>(n);
  PerformancePoint p;
  if (mode == ErrorMode::plugin)
    p.error = std::ldexp(static_cast<double>(plugin_error), -53) / dn;
  else
    p.error = static_cast<double>(empirical_error) / dn;
  p.abstention = static_cast<double>(rejected) / dn;
  double cost = 0.0;
  for (std::size_t j = 0; j < unit_values.size() && j < visit_units.size(); ++j)
    cost += unit_values[j] * static_cast<double>(visit_units[j]);
  p.expected_cost = cost / dn;
  return p;
}

/// Monte Carlo estimates of error, abstention and expected cost. The plug-in
/// mode accumulates 1 - p_hat on accepted queries; the empirical mode counts
/// incorrect accepted answers instead.
PerformancePoint estimate_performance(const ChainConfig& config, const Dataset& dataset, ErrorMode mode,
                                      CostAccounting accounting);
PerformancePoint estimate_performance(const ChainConfig& config, const Dataset& dataset, ErrorMode mode,
                                      CostKind kind = CostKind::dollars);

struct DelegationGain {
  double delta_error = 0.0;  ///< cov_large - cov_small; negative means delegation beats random
  double cov_small = 0.0;
  double cov_large = 0.0;
};

/// Population (1/n) covariances between the delegation indicator and each
/// model's error indicator. With q = mean(D), delta_error equals
///   mean(D e_lg + (1-D) e_sm) - (q mean(e_lg) + (1-q) mean(e_sm)).
DelegationGain delegation_gain(const std::vector<bool>& delegate, const std::vector<bool>& err_small,
                               const std::vector<bool>& err_large);

// ---------------------------------------------------------------------------
// Config documents.

/// {"members": [{"model_id", "cost_per_mtok", "latency_ms", "calibrator", "r", "a"}]}
/// where "calibrator" is an inline calibrator object or a path relative to
/// `base_dir`. Thresholds default to 0 (accept everything).
ChainConfig chain_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json to_json(const ChainConfig& config);
ChainConfig load_chain_config(const std::filesystem::path& path);

}  // namespace hcma

#include "hcma/chain_walk.inl"
