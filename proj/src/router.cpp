#include "hcma/router.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>

#include <httplib.h>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(EndpointMode m) {
  return m == EndpointMode::multiple_choice ? "multiple_choice" : "free_form_ptrue";
}

EndpointMode parse_endpoint_mode(std::string_view name) {
  if (name == "multiple_choice") return EndpointMode::multiple_choice;
  if (name == "free_form_ptrue") return EndpointMode::free_form_ptrue;
  throw ConfigError("unknown endpoint mode '" + std::string(name) + "' (expected multiple_choice or free_form_ptrue)");
}

void EndpointSpec::validate() const {
  if (model_id.empty()) throw ConfigError("endpoint without model_id");
  if (timeout_ms <= 0) throw ConfigError("endpoint '" + model_id + "': timeout_ms must be positive");
  if (mode == EndpointMode::multiple_choice && choice_tokens.empty())
    throw ConfigError("endpoint '" + model_id + "': multiple_choice needs choice_tokens");
  if (mode == EndpointMode::free_form_ptrue) {
    if (verification_prompt_template.empty())
      throw ConfigError("endpoint '" + model_id + "': free_form_ptrue needs a verification_prompt_template");
    if (yes_tokens.empty() || no_tokens.empty())
      throw ConfigError("endpoint '" + model_id + "': free_form_ptrue needs yes_tokens and no_tokens");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

/// Probability mass per label (sum over tokens mapping to it); NaN when no
/// token maps to the label.
std::vector<double> label_mass(const std::vector<TokenLogprob>& top, const std::vector<std::string>& labels) {
  std::vector<double> mass(labels.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& t : top) {
    const auto tok = trim(t.token);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (tok == labels[i]) {
        const double p = std::exp(t.logprob);
        mass[i] = std::isnan(mass[i]) ? p : mass[i] + p;
      }
  }
  return mass;
}

std::size_t present(const std::vector<double>& mass) {
  std::size_t c = 0;
  for (double m : mass) c += !std::isnan(m);
  return c;
}

}  // namespace

Confidence choice_confidence(const std::vector<TokenLogprob>& top, const std::vector<std::string>& labels,
                             MissingChoicePolicy policy) {
  const auto mass = label_mass(top, labels);
  const std::size_t found = present(mass);
  if (found == 0) throw ProviderError("none of the choice tokens appear in the top log-probabilities");
  Confidence c;
  if (found < labels.size()) {
    if (policy == MissingChoicePolicy::error)
      throw ProviderError("only " + std::to_string(found) + " of " + std::to_string(labels.size()) +
                          " choice tokens appear in the top log-probabilities");
    c.warning = true;
  }
  double total = 0.0, best = -1.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::isnan(mass[i])) continue;
    total += mass[i];
    if (mass[i] > best) {
      best = mass[i];
      c.label = labels[i];
    }
  }
  if (!(total > 0.0)) throw ProviderError("choice tokens carry no probability mass");
  c.raw_prob = best / total;
  return c;
}

Confidence ptrue_confidence(const std::vector<TokenLogprob>& top, const std::vector<std::string>& yes,
                            const std::vector<std::string>& no, MissingChoicePolicy policy) {
  const auto my = label_mass(top, yes);
  const auto mn = label_mass(top, no);
  double y = 0.0, n = 0.0;
  for (double m : my) y += std::isnan(m) ? 0.0 : m;
  for (double m : mn) n += std::isnan(m) ? 0.0 : m;
  const bool has_y = present(my) > 0, has_n = present(mn) > 0;
  if (!has_y && !has_n) throw ProviderError("neither yes nor no tokens appear in the top log-probabilities");
  Confidence c;
  if (!has_y || !has_n) {
    if (policy == MissingChoicePolicy::error)
      throw ProviderError(std::string(has_y ? "no" : "yes") + " token missing from the top log-probabilities");
    c.warning = true;
  }
  if (!(y + n > 0.0)) throw ProviderError("verification tokens carry no probability mass");
  c.raw_prob = y / (y + n);
  c.label = y >= n ? "Y" : "N";
  return c;
}

Confidence extract_confidence(const json& response, const EndpointSpec& spec, EndpointMode mode,
                              MissingChoicePolicy policy) {
  const json* content = nullptr;
  try {
    const json& choice = response.at("choices").at(0);
    if (auto it = choice.find("logprobs"); it != choice.end() && it->is_object())
      if (auto c = it->find("content"); c != it->end() && c->is_array() && !c->empty()) content = &*c;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed completion response: ") + e.what());
  }
  if (!content) throw ProviderError("provider does not expose logprobs");

  std::vector<std::string> wanted = mode == EndpointMode::multiple_choice ? spec.choice_tokens : spec.yes_tokens;
  if (mode == EndpointMode::free_form_ptrue) wanted.insert(wanted.end(), spec.no_tokens.begin(), spec.no_tokens.end());

  std::vector<TokenLogprob> chosen;
  for (const auto& pos : *content) {
    std::vector<TokenLogprob> top;
    if (pos.contains("token") && pos.contains("logprob"))
      top.push_back({pos.at("token").get<std::string>(), pos.at("logprob").get<double>()});
    if (auto t = pos.find("top_logprobs"); t != pos.end() && t->is_array())
      for (const auto& e : *t) {
        TokenLogprob tl{e.at("token").get<std::string>(), e.at("logprob").get<double>()};
        bool dup = false;
        for (const auto& x : top) dup = dup || x.token == tl.token;
        if (!dup) top.push_back(std::move(tl));
      }
    const bool relevant = std::any_of(top.begin(), top.end(), [&](const TokenLogprob& t) {
      return std::find(wanted.begin(), wanted.end(), std::string(trim(t.token))) != wanted.end();
    });
    if (relevant || chosen.empty()) chosen = std::move(top);
    if (relevant) break;
  }
  return mode == EndpointMode::multiple_choice ? choice_confidence(chosen, spec.choice_tokens, policy)
                                               : ptrue_confidence(chosen, spec.yes_tokens, spec.no_tokens, policy);
}

std::string render_template(std::string_view tmpl, std::string_view question, std::string_view answer) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 10, "{question}") == 0) {
      out += question;
      i += 10;
    } else if (tmpl.compare(i, 8, "{answer}") == 0) {
      out += answer;
      i += 8;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ReplayBackend::ReplayBackend(Dataset records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].query_id, i);
}

HopResult ReplayBackend::query(const ModelProfile& model, const RouteRequest& request) {
  const std::string& key = request.query_id ? *request.query_id : request.query;
  auto it = index_.find(key);
  if (it == index_.end()) throw ProviderError("replay: no recorded query '" + key + "'");
  const ModelEntry* e = records_[it->second].find(model.model_id);
  if (!e) throw ProviderError("replay: query '" + key + "' has no record for model '" + model.model_id + "'");
  HopResult h;
  h.raw_prob = e->raw_prob;
  h.tokens_in = e->tokens_in;
  h.tokens_out = e->tokens_out;
  h.latency_ms = e->latency_ms;
  h.correct = e->correct;
  return h;
}

OpenAIChatBackend::OpenAIChatBackend(std::vector<EndpointSpec> endpoints, MissingChoicePolicy policy)
    : endpoints_(std::move(endpoints)), policy_(policy) {
  for (const auto& e : endpoints_) {
    e.validate();
    if (e.base_url.empty()) throw ConfigError("endpoint '" + e.model_id + "' has no base_url");
  }
}

const EndpointSpec& OpenAIChatBackend::endpoint(const std::string& model_id) const {
  for (const auto& e : endpoints_)
    if (e.model_id == model_id) return e;
  throw ConfigError("no endpoint configured for model '" + model_id + "'");
}

json OpenAIChatBackend::post(const EndpointSpec& spec, const json& body, double& elapsed_ms) const {
  // base_url = scheme://host[:port][/prefix]
  const auto scheme_end = spec.base_url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_begin = spec.base_url.find('/', host_begin);
  const std::string origin = spec.base_url.substr(0, path_begin);
  std::string prefix = path_begin == std::string::npos ? "" : spec.base_url.substr(path_begin);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  const auto timeout = std::chrono::milliseconds(spec.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!spec.api_key_env.empty()) {
    const char* key = std::getenv(spec.api_key_env.c_str());
    if (!key || !*key) throw ProviderError("environment variable " + spec.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!res) throw ProviderError("model '" + spec.model_id + "': request failed (" + httplib::to_string(res.error()) + ")");
  if (res->status != 200)
    throw ProviderError("model '" + spec.model_id + "': HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 200));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProviderError("model '" + spec.model_id + "': unparseable response: " + e.what());
  }
}

HopResult OpenAIChatBackend::query(const ModelProfile& model, const RouteRequest& request) {
  const EndpointSpec& spec = endpoint(model.model_id);
  const std::string api_model = spec.api_model.empty() ? spec.model_id : spec.api_model;
  auto make_body = [&](const std::string& prompt, int max_tokens, bool logprobs) {
    json body = {{"model", api_model},
                 {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                 {"max_tokens", max_tokens},
                 {"temperature", 0}};
    if (logprobs) {
      body["logprobs"] = true;
      body["top_logprobs"] = 20;
    }
    return body;
  };
  auto usage = [](const json& r, HopResult& h) {
    if (auto u = r.find("usage"); u != r.end() && u->is_object()) {
      h.tokens_in += u->value("prompt_tokens", std::int64_t{0});
      h.tokens_out += u->value("completion_tokens", std::int64_t{0});
    }
  };
  HopResult h;
  double elapsed = 0.0;
  const std::string prompt = render_template(spec.prompt_template, request.query);
  if (spec.mode == EndpointMode::multiple_choice) {
    const json r = post(spec, make_body(prompt, 1, true), elapsed);
    const Confidence c = extract_confidence(r, spec, spec.mode, policy_);
    h.raw_prob = c.raw_prob;
    h.answer = c.label;
    h.warning = c.warning;
    usage(r, h);
  } else {
    const json first = post(spec, make_body(prompt, spec.max_answer_tokens, false), elapsed);
    try {
      h.answer = first.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ProviderError("model '" + spec.model_id + "': response has no answer text: " + e.what());
    }
    usage(first, h);
    const json second =
        post(spec, make_body(render_template(spec.verification_prompt_template, request.query, h.answer), 1, true),
             elapsed);
    const Confidence c = extract_confidence(second, spec, spec.mode, policy_);
    h.raw_prob = c.raw_prob;
    h.warning = c.warning;
    usage(second, h);
  }
  h.latency_ms = elapsed;
  return h;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> string_list(const json& j, const char* key, std::vector<std::string> fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<std::vector<std::string>>();
}

bool looks_like_chain_of_thought(std::string_view t) {
  for (std::string_view needle : {"step by step", "step-by-step", "think", "reason"})
    if (t.find(needle) != std::string_view::npos) return true;
  return false;
}

}  // namespace

RouterConfig router_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  RouterConfig cfg;
  cfg.chain = chain_from_json(doc, base_dir);
  try {
    if (auto it = doc.find("endpoints"); it != doc.end() && !it->is_null()) {
      for (const auto& e : *it) {
        EndpointSpec s;
        s.model_id = e.at("model_id").get<std::string>();
        s.base_url = e.value("base_url", std::string{});
        s.api_key_env = e.value("api_key_env", std::string{});
        s.api_model = e.value("api_model", e.value("model", std::string{}));
        s.mode = parse_endpoint_mode(e.value("mode", std::string("multiple_choice")));
        s.choice_tokens = string_list(e, "choice_tokens", s.choice_tokens);
        s.yes_tokens = string_list(e, "yes_tokens", s.yes_tokens);
        s.no_tokens = string_list(e, "no_tokens", s.no_tokens);
        s.prompt_template = e.value("prompt_template", s.prompt_template);
        s.verification_prompt_template = e.value("verification_prompt_template", s.verification_prompt_template);
        s.timeout_ms = e.value("timeout_ms", s.timeout_ms);
        s.max_answer_tokens = e.value("max_answer_tokens", s.max_answer_tokens);
        s.validate();
        if (s.mode == EndpointMode::free_form_ptrue && looks_like_chain_of_thought(s.verification_prompt_template))
          std::cerr << "warning: endpoint '" << s.model_id
                    << "': verification prompt looks like chain-of-thought; such probabilities tend to cluster near 0 "
                       "and 1 and make poor abstention signals\n";
        cfg.endpoints.push_back(std::move(s));
      }
    }
    const std::string fail = doc.value("on_failure", std::string("fail"));
    if (fail == "fail")
      cfg.on_failure = FailurePolicy::fail;
    else if (fail == "skip")
      cfg.on_failure = FailurePolicy::skip;
    else
      throw ConfigError("on_failure must be 'fail' or 'skip'");
    const std::string missing = doc.value("missing_choice", std::string("error"));
    if (missing == "error")
      cfg.missing_choice = MissingChoicePolicy::error;
    else if (missing == "renormalize")
      cfg.missing_choice = MissingChoicePolicy::renormalize;
    else
      throw ConfigError("missing_choice must be 'error' or 'renormalize'");
    if (auto it = doc.find("cost_accounting"); it != doc.end() && !it->is_null()) {
      const auto name = it->get<std::string>();
      if (name == "flat")
        cfg.accounting = CostAccounting::flat;
      else if (name == "tokens")
        cfg.accounting = CostAccounting::tokens;
      else if (name == "latency")
        cfg.accounting = CostAccounting::latency;
      else
        throw ConfigError("cost_accounting must be flat, tokens or latency");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid router config: ") + e.what());
  }
  return cfg;
}

RouterConfig load_router_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return router_config_from_json(doc, path.parent_path());
}

std::string_view to_string(RouteStatus s) { return s == RouteStatus::answered ? "ANSWERED" : "ABSTAINED"; }

ojson to_json(const RouteResponse& r, bool include_latency) {
  auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
  ojson hops = ojson::array();
  for (const auto& h : r.hops) {
    ojson o;
    o["model_id"] = h.model_id;
    o["raw_prob"] = opt(h.raw_prob);
    o["p_hat"] = opt(h.p_hat);
    o["decision"] = std::string(to_string(h.decision));
    o["skipped"] = h.skipped;
    if (h.warning) o["warning"] = true;
    if (!h.error.empty()) o["error"] = h.error;
    o["cost_units"] = h.cost_units;
    if (include_latency) o["latency_ms"] = h.latency_ms;
    hops.push_back(std::move(o));
  }
  ojson o;
  o["status"] = std::string(to_string(r.status));
  o["answer"] = r.answer;
  o["terminal_model_id"] = r.terminal_model_id;
  ojson p = ojson::array();
  for (const auto& h : r.hops) p.push_back(opt(h.p_hat));
  o["p_hat"] = std::move(p);
  o["effective_cost"] = r.effective_cost;
  if (include_latency) o["total_latency_ms"] = r.total_latency_ms;
  o["hops"] = std::move(hops);
  if (!r.error.empty()) o["error"] = r.error;
  return o;
}

Router::Router(RouterConfig config, std::shared_ptr<Backend> backend, CostAccounting accounting)
    : config_(std::move(config)), backend_(std::move(backend)), accounting_(accounting) {
  if (!backend_) throw ConfigError("router needs a backend");
  for (const auto& m : config_.chain.members())
    if (!m.profile.calibrator || !m.profile.calibrator->fitted())
      throw ConfigError("model '" + m.profile.model_id + "' has no fitted calibrator");
  for (std::size_t j = 0; j < config_.chain.size(); ++j) counters_.push_back(std::make_unique<ModelCounters>());
}

RouteResponse Router::route(const RouteRequest& request) {
  const ChainConfig& chain = config_.chain;
  std::vector<HopReport> hops(chain.size());
  std::vector<std::string> answers(chain.size());
  for (std::size_t j = 0; j < chain.size(); ++j) hops[j].model_id = chain[j].profile.model_id;

  ChainTrace trace;
  try {
    trace = walk_chain(chain, accounting_, [&](std::size_t j) -> std::optional<HopObservation> {
      const ModelProfile& prof = chain[j].profile;
      HopResult h;
      try {
        h = backend_->query(prof, request);
      } catch (const Error& e) {
        if (config_.on_failure == FailurePolicy::fail) throw ProviderError(e.what());
        std::cerr << "warning: skipping model '" << prof.model_id << "': " << e.what() << '\n';
        hops[j].error = e.what();
        return std::nullopt;
      }
      hops[j].raw_prob = h.raw_prob;
      hops[j].warning = h.warning;
      hops[j].latency_ms = h.latency_ms.value_or(0.0);
      answers[j] = std::move(h.answer);
      return HopObservation{h.raw_prob, cost_units(accounting_, prof, h.tokens_in, h.tokens_out, h.latency_ms),
                            h.correct.value_or(false)};
    });
  } catch (const ProviderError&) {
    failed_.fetch_add(1, std::memory_order_relaxed);
    throw;
  }

  RouteResponse resp;
  const std::size_t visited = trace.decisions.size();
  hops.resize(visited);
  for (std::size_t j = 0; j < visited; ++j) {
    HopReport& h = hops[j];
    h.decision = trace.decisions[j];
    h.skipped = trace.skipped[j];
    if (!h.skipped) h.p_hat = trace.p_hat[j];
    h.cost_units = trace.cost_units[j];
    resp.total_latency_ms += h.latency_ms;
    ModelCounters& c = *counters_[j];
    if (h.skipped)
      c.skipped.fetch_add(1, std::memory_order_relaxed);
    else if (h.decision == Decision::accept)
      c.accept.fetch_add(1, std::memory_order_relaxed);
    else if (h.decision == Decision::reject)
      c.reject.fetch_add(1, std::memory_order_relaxed);
    else
      c.delegate.fetch_add(1, std::memory_order_relaxed);
    c.cost_units.fetch_add(h.cost_units, std::memory_order_relaxed);
  }
  counters_[trace.terminal_index]->terminal.fetch_add(1, std::memory_order_relaxed);
  resp.status = trace.decision == Decision::accept ? RouteStatus::answered : RouteStatus::abstained;
  (resp.status == RouteStatus::answered ? answered_ : abstained_).fetch_add(1, std::memory_order_relaxed);
  resp.terminal_model_id = chain[trace.terminal_index].profile.model_id;
  if (resp.status == RouteStatus::answered) resp.answer = answers[trace.terminal_index];
  resp.effective_cost = trace.effective_cost;
  if (trace.exhausted) resp.error = "chain exhausted: " + hops.back().error;
  resp.hops = std::move(hops);
  resp.trace = std::move(trace);
  return resp;
}

ojson Router::stats() const {
  ojson models = ojson::object();
  double total_cost = 0.0;
  for (std::size_t j = 0; j < config_.chain.size(); ++j) {
    const ModelProfile& prof = config_.chain[j].profile;
    const ModelCounters& c = *counters_[j];
    const double cost = unit_value(accounting_, prof) * static_cast<double>(c.cost_units.load());
    total_cost += cost;
    models[prof.model_id] = {{"accept", c.accept.load()},     {"delegate", c.delegate.load()},
                             {"reject", c.reject.load()},     {"skipped", c.skipped.load()},
                             {"terminal", c.terminal.load()}, {"cost", cost}};
  }
  const auto answered = answered_.load(), abstained = abstained_.load();
  ojson o;
  o["requests"] = answered + abstained;
  o["answered"] = answered;
  o["abstained"] = abstained;
  o["failed"] = failed_.load();
  o["cumulative_cost"] = total_cost;
  o["cost_accounting"] = std::string(to_string(accounting_));
  o["models"] = std::move(models);
  return o;
}

// ---------------------------------------------------------------------------

struct RouterService::Impl {
  Router& router;
  httplib::Server server;
  explicit Impl(Router& r) : router(r) {}
};

RouterService::RouterService(Router& router) : impl_(std::make_unique<Impl>(router)) {
  auto& srv = impl_->server;
  auto send = [](httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto error_body = [](const std::string& msg) {
    ojson o;
    o["error"] = msg;
    return o;
  };
  srv.Get("/healthz", [send](const httplib::Request&, httplib::Response& res) {
    ojson o;
    o["status"] = "ok";
    send(res, 200, o);
  });
  srv.Get("/stats", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, 200, impl_->router.stats());
  });
  srv.Post("/v1/route", [this, send, error_body](const httplib::Request& req, httplib::Response& res) {
    RouteRequest rr;
    try {
      const json body = json::parse(req.body);
      if (!body.is_object()) return send(res, 400, error_body("request body must be a JSON object"));
      auto q = body.find("query");
      if (q == body.end() || !q->is_string()) return send(res, 400, error_body("'query' must be a string"));
      rr.query = q->get<std::string>();
      if (trim(rr.query).empty()) return send(res, 400, error_body("'query' must not be empty"));
      if (auto id = body.find("query_id"); id != body.end() && !id->is_null()) {
        if (!id->is_string()) return send(res, 400, error_body("'query_id' must be a string"));
        rr.query_id = id->get<std::string>();
      }
    } catch (const json::parse_error& e) {
      return send(res, 400, error_body(std::string("malformed JSON: ") + e.what()));
    }
    try {
      send(res, 200, to_json(impl_->router.route(rr)));
    } catch (const ProviderError& e) {
      send(res, 502, error_body(e.what()));
    } catch (const std::exception& e) {
      send(res, 500, error_body(e.what()));
    }
  });
}

RouterService::~RouterService() { stop(); }

int RouterService::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error("cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void RouterService::listen() { impl_->server.listen_after_bind(); }

void RouterService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void RouterService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace hcma
