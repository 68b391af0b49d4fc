#pragma once

#include <string>
#include <string_view>

namespace hcma {

/// Feature map applied to a raw token probability before Platt scaling.
enum class TransformKind {
  identity,     ///< no transform; the naive Platt-scaling baseline ("raw")
  max_softmax,  ///< log(1/(1-p)) for multiple-choice max-softmax ("msp")
  p_true,       ///< point-symmetric map for P("Y") verification ("ptrue")
};

/// Saturation guard: probabilities are clamped this far inside [0,1].
inline constexpr double kProbabilityClamp = 1e-12;

/// log(1/(1 - min(p, 1-eps))). Throws DomainError outside [0,1].
double transform_max_softmax(double p_raw);

/// Upper branch log(1/(1-p)) for p >= 0.5, lower branch log 2 - log(1/p)
/// below, with p clamped to [eps, 1-eps]. The two branches do not meet at
/// 0.5 (left limit 0, value log 2); this is kept as-is.
double transform_p_true(double p);

double apply_transform(TransformKind kind, double p_raw);

/// "raw", "msp", "ptrue".
std::string_view to_string(TransformKind kind);
/// Accepts the short names above plus "identity", "max_softmax", "p_true".
TransformKind parse_transform(std::string_view name);

}  // namespace hcma
