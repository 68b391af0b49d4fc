#include "hcma/chain.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

using json = nlohmann::json;

double ModelProfile::p_hat(double raw_prob) const {
  if (!calibrator || !calibrator->fitted()) throw StateError("model '" + model_id + "' has no fitted calibrator");
  return calibrator->predict(raw_prob);
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::reject:
      return "REJECT";
    case Decision::delegate:
      return "DELEGATE";
    case Decision::accept:
      return "ACCEPT";
  }
  return "?";
}

ChainConfig::ChainConfig(std::vector<ChainMember> members) : members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("chain must have at least one member");
  for (std::size_t j = 0; j < members_.size(); ++j) {
    auto& m = members_[j];
    if (m.profile.model_id.empty()) throw ConfigError("chain member " + std::to_string(j + 1) + " has no model_id");
    if (!(m.profile.cost_per_mtok >= 0.0) || !std::isfinite(m.profile.cost_per_mtok))
      throw ConfigError("model '" + m.profile.model_id + "': cost_per_mtok must be >= 0");
    if (!(m.profile.latency_ms >= 0.0) || !std::isfinite(m.profile.latency_ms))
      throw ConfigError("model '" + m.profile.model_id + "': latency_ms must be >= 0");
    if (!std::isfinite(m.reject_threshold) || !std::isfinite(m.accept_threshold))
      throw ConfigError("model '" + m.profile.model_id + "': thresholds must be finite");
    if (j + 1 == members_.size()) m.accept_threshold = m.reject_threshold;
    if (m.reject_threshold > m.accept_threshold)
      throw ConfigError("model '" + m.profile.model_id + "': reject threshold " + format_double(m.reject_threshold) +
                        " exceeds accept threshold " + format_double(m.accept_threshold));
    for (std::size_t i = 0; i < j; ++i)
      if (members_[i].profile.model_id == m.profile.model_id)
        throw ConfigError("model '" + m.profile.model_id + "' appears twice in the chain");
  }
}

std::vector<std::string> ChainConfig::model_ids() const {
  std::vector<std::string> ids;
  for (const auto& m : members_) ids.push_back(m.profile.model_id);
  return ids;
}

std::vector<ModelProfile> ChainConfig::profiles() const {
  std::vector<ModelProfile> out;
  for (const auto& m : members_) out.push_back(m.profile);
  return out;
}

ChainConfig ChainConfig::with_thresholds(const std::vector<double>& reject, const std::vector<double>& accept) const {
  const std::size_t k = members_.size();
  if (reject.size() != k || (accept.size() != k && accept.size() + 1 != k))
    throw ConfigError("with_thresholds: expected " + std::to_string(k) + " reject and " + std::to_string(k - 1) +
                      " accept thresholds");
  auto members = members_;
  for (std::size_t j = 0; j < k; ++j) {
    members[j].reject_threshold = reject[j];
    members[j].accept_threshold = j < accept.size() ? accept[j] : reject[j];
  }
  return ChainConfig(std::move(members));
}

Decision policy_step(double p_hat, double r, double a, bool is_last) {
  if (is_last) a = r;
  if (r > a) throw ConfigError("policy_step: reject threshold exceeds accept threshold");
  if (p_hat < r) return Decision::reject;
  if (p_hat < a) return Decision::delegate;
  return Decision::accept;
}

std::string_view to_string(CostKind kind) { return kind == CostKind::dollars ? "dollars" : "latency"; }

CostKind parse_cost_kind(std::string_view name) {
  if (name == "dollars") return CostKind::dollars;
  if (name == "latency") return CostKind::latency;
  throw ConfigError("unknown cost kind '" + std::string(name) + "' (expected dollars or latency)");
}

std::string_view to_string(CostAccounting a) {
  switch (a) {
    case CostAccounting::flat:
      return "flat";
    case CostAccounting::tokens:
      return "tokens";
    case CostAccounting::latency:
      return "latency";
  }
  return "?";
}

CostAccounting resolve_accounting(CostKind kind, const Dataset& dataset, const std::vector<std::string>& model_ids) {
  if (kind == CostKind::latency) return CostAccounting::latency;
  for (const auto& r : dataset.records())
    for (const auto& id : model_ids)
      if (const auto* e = r.find(id); e && (e->tokens_in > 0 || e->tokens_out > 0)) return CostAccounting::tokens;
  return CostAccounting::flat;
}

std::int64_t cost_units(CostAccounting accounting, const ModelProfile& profile, std::int64_t tokens_in,
                        std::int64_t tokens_out, std::optional<double> latency_ms) {
  switch (accounting) {
    case CostAccounting::flat:
      return 1;
    case CostAccounting::tokens:
      return tokens_in + tokens_out;
    case CostAccounting::latency:
      return std::llround(latency_ms.value_or(profile.latency_ms) * 1e6);
  }
  return 0;
}

double unit_value(CostAccounting accounting, const ModelProfile& profile) {
  switch (accounting) {
    case CostAccounting::flat:
      return profile.cost_per_mtok;
    case CostAccounting::tokens:
      return profile.cost_per_mtok / 1e6;
    case CostAccounting::latency:
      return 1e-6;
  }
  return 0.0;
}

ChainTrace trace_query(const ChainConfig& config, const QueryRecord& record, CostAccounting accounting) {
  return walk_chain(config, accounting, [&](std::size_t j) -> std::optional<HopObservation> {
    const ModelProfile& p = config[j].profile;
    const ModelEntry& e = record.require(p.model_id);
    return HopObservation{e.raw_prob, cost_units(accounting, p, e.tokens_in, e.tokens_out, e.latency_ms), e.correct};
  });
}

std::string_view to_string(ErrorMode m) { return m == ErrorMode::plugin ? "plugin" : "empirical"; }

ErrorMode parse_error_mode(std::string_view name) {
  if (name == "plugin") return ErrorMode::plugin;
  if (name == "empirical") return ErrorMode::empirical;
  throw ConfigError("unknown error mode '" + std::string(name) + "' (expected plugin or empirical)");
}

__int128 plugin_error_units(double p_hat) {
  return static_cast<__int128>(static_cast<std::int64_t>(std::ldexp(1.0 - p_hat, 53)));
}

void PerformanceSums::add(const ChainTrace& trace) {
  ++n;
  for (std::size_t j = 0; j < trace.cost_units.size(); ++j) visit_units[j] += trace.cost_units[j];
  if (trace.decision == Decision::reject) {
    ++rejected;
    return;
  }
  plugin_error += plugin_error_units(trace.p_hat[trace.terminal_index]);
  if (!trace.terminal_correct) ++empirical_error;
}

PerformancePoint finalize(const PerformanceSums& sums, const std::vector<ModelProfile>& members,
                          CostAccounting accounting, ErrorMode mode) {
  if (sums.n <= 0) throw DomainError("finalize: no records");
  std::vector<double> values;
  for (const auto& m : members) values.push_back(unit_value(accounting, m));
  return finalize_counts(sums.n, sums.rejected, sums.plugin_error, sums.empirical_error, sums.visit_units, values,
                         mode);
}

PerformancePoint estimate_performance(const ChainConfig& config, const Dataset& dataset, ErrorMode mode,
                                      CostAccounting accounting) {
  if (dataset.empty()) throw DomainError("estimate_performance: empty dataset");
  if (config.size() == 0) throw ConfigError("estimate_performance: empty chain");
  PerformanceSums sums(config.size());
  for (const auto& r : dataset.records()) sums.add(trace_query(config, r, accounting));
  return finalize(sums, config.profiles(), accounting, mode);
}

PerformancePoint estimate_performance(const ChainConfig& config, const Dataset& dataset, ErrorMode mode,
                                      CostKind kind) {
  return estimate_performance(config, dataset, mode, resolve_accounting(kind, dataset, config.model_ids()));
}

DelegationGain delegation_gain(const std::vector<bool>& delegate, const std::vector<bool>& err_small,
                               const std::vector<bool>& err_large) {
  const std::size_t n = delegate.size();
  if (err_small.size() != n || err_large.size() != n)
    throw DomainError("delegation_gain: indicator vectors differ in length");
  if (n < 2) throw DomainError("delegation_gain: at least 2 observations are required");
  // Integer counts keep the covariance numerators exact.
  std::int64_t sd = 0, ss = 0, sl = 0, sds = 0, sdl = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sd += delegate[i];
    ss += err_small[i];
    sl += err_large[i];
    sds += delegate[i] && err_small[i];
    sdl += delegate[i] && err_large[i];
  }
  const auto nn = static_cast<std::int64_t>(n);
  const double denom = static_cast<double>(n) * static_cast<double>(n);
  DelegationGain g;
  g.cov_small = static_cast<double>(nn * sds - sd * ss) / denom;
  g.cov_large = static_cast<double>(nn * sdl - sd * sl) / denom;
  g.delta_error = static_cast<double>((nn * sdl - sd * sl) - (nn * sds - sd * ss)) / denom;
  return g;
}

ChainConfig chain_from_json(const json& doc, const std::filesystem::path& base_dir) {
  try {
    const json& members = doc.at("members");
    if (!members.is_array() || members.empty()) throw ConfigError("config: 'members' must be a nonempty array");
    std::vector<ChainMember> out;
    for (const auto& m : members) {
      ChainMember cm;
      cm.profile.model_id = m.at("model_id").get<std::string>();
      cm.profile.cost_per_mtok = m.value("cost_per_mtok", 0.0);
      cm.profile.latency_ms = m.value("latency_ms", 0.0);
      if (auto it = m.find("calibrator"); it != m.end() && !it->is_null()) {
        Calibrator cal;
        if (it->is_string()) {
          std::filesystem::path p = it->get<std::string>();
          if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
          cal = load_calibrator(p);
        } else {
          cal = calibrator_from_json(*it);
        }
        if (cal.model_id.empty()) cal.model_id = cm.profile.model_id;
        cm.profile.calibrator = cal;
      }
      cm.reject_threshold = m.value("r", 0.0);
      cm.accept_threshold = m.value("a", cm.reject_threshold);
      out.push_back(std::move(cm));
    }
    return ChainConfig(std::move(out));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid chain config: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const ChainConfig& config) {
  nlohmann::ordered_json members = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < config.size(); ++j) {
    const auto& m = config[j];
    nlohmann::ordered_json o;
    o["model_id"] = m.profile.model_id;
    o["cost_per_mtok"] = m.profile.cost_per_mtok;
    o["latency_ms"] = m.profile.latency_ms;
    if (m.profile.calibrator) o["calibrator"] = to_json(*m.profile.calibrator);
    o["r"] = m.reject_threshold;
    if (j + 1 < config.size()) o["a"] = m.accept_threshold;
    members.push_back(std::move(o));
  }
  nlohmann::ordered_json doc;
  doc["members"] = std::move(members);
  return doc;
}

ChainConfig load_chain_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return chain_from_json(doc, path.parent_path());
}

}  // namespace hcma
