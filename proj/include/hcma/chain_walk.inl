#pragma once

#include <cmath>
#include <limits>

namespace hcma {

template <typename Observe>
ChainTrace walk_chain(const ChainConfig& config, CostAccounting accounting, Observe&& observe) {
  const std::size_t k = config.size();
  ChainTrace trace;
  trace.p_hat.reserve(k);
  trace.decisions.reserve(k);
  trace.cost_units.reserve(k);
  trace.skipped.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const ChainMember& m = config[j];
    const bool last = j + 1 == k;
    const std::optional<HopObservation> obs = observe(j);
    if (!obs) {
      trace.p_hat.push_back(std::numeric_limits<double>::quiet_NaN());
      trace.cost_units.push_back(0);
      trace.skipped.push_back(true);
      if (last) {
        trace.decisions.push_back(Decision::reject);
        trace.terminal_index = j;
        trace.decision = Decision::reject;
        trace.exhausted = true;
        break;
      }
      trace.decisions.push_back(Decision::delegate);
      continue;
    }
    const double p = m.profile.p_hat(obs->raw_prob);
    const Decision d = policy_step(p, m.reject_threshold, m.accept_threshold, last);
    trace.p_hat.push_back(p);
    trace.decisions.push_back(d);
    trace.cost_units.push_back(obs->cost_units);
    trace.skipped.push_back(false);
    trace.effective_cost += unit_value(accounting, m.profile) * static_cast<double>(obs->cost_units);
    if (d != Decision::delegate) {
      trace.terminal_index = j;
      trace.decision = d;
      trace.terminal_correct = obs->correct;
      break;
    }
  }
  return trace;
}

}  // namespace hcma
