#include "hcma/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

namespace {

void check_unit_interval(double p, const char* fn) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(fn) + ": probability " + format_double(p) + " outside [0,1]");
}

// -log(1 - p). For p >= 0.5 the subtraction is exact; below that log1p keeps
// precision for small p.
double neg_log_complement(double p) { return p >= 0.5 ? -std::log(1.0 - p) : -std::log1p(-p); }

}  // namespace

double transform_max_softmax(double p_raw) {
  check_unit_interval(p_raw, "transform_max_softmax");
  return neg_log_complement(std::min(p_raw, 1.0 - kProbabilityClamp));
}

double transform_p_true(double p) {
  check_unit_interval(p, "transform_p_true");
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (p >= 0.5) return neg_log_complement(pc);
  return std::numbers::ln2 + std::log(pc);
}

double apply_transform(TransformKind kind, double p_raw) {
  switch (kind) {
    case TransformKind::identity:
      check_unit_interval(p_raw, "identity transform");
      return p_raw;
    case TransformKind::max_softmax:
      return transform_max_softmax(p_raw);
    case TransformKind::p_true:
      return transform_p_true(p_raw);
  }
  throw DomainError("unknown transform");
}

std::string_view to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::identity:
      return "raw";
    case TransformKind::max_softmax:
      return "msp";
    case TransformKind::p_true:
      return "ptrue";
  }
  return "?";
}

TransformKind parse_transform(std::string_view name) {
  if (name == "raw" || name == "identity") return TransformKind::identity;
  if (name == "msp" || name == "max_softmax") return TransformKind::max_softmax;
  if (name == "ptrue" || name == "p_true") return TransformKind::p_true;
  throw ConfigError("unknown transform '" + std::string(name) + "' (expected raw, msp or ptrue)");
}

}  // namespace hcma
