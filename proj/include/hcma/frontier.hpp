#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hcma/chain.hpp"
#include "hcma/records.hpp"

namespace hcma {

inline constexpr double kDefaultResolution = 0.025;
inline constexpr std::size_t kMaxChainLength = 4;
inline constexpr std::uint64_t kDefaultMaxConfigs = 2'000'000'000ULL;

/// Per-member threshold candidates: empirical quantiles of p_hat at levels
/// 0, res, 2 res, ..., 1 (lower order statistic, no interpolation), with
/// duplicates removed. The bottom point is the minimum, so a threshold there
/// rejects nothing and accepts everything. The top point is lifted just
/// above the maximum, so a threshold there rejects everything; it is left
/// alone when the distribution is a single value.
struct QuantileGrid {
  double resolution = kDefaultResolution;
  std::vector<std::string> model_ids;
  std::vector<std::vector<double>> thresholds;  ///< per member, strictly increasing

  std::size_t members() const { return thresholds.size(); }
};

QuantileGrid build_grid(const Dataset& dataset, const std::vector<ModelProfile>& members,
                        double resolution = kDefaultResolution);

struct FrontierOptions {
  bool early_abstention = true;  ///< false pins r_j to the bottom grid point for j < k
  ErrorMode error_mode = ErrorMode::plugin;
  CostKind cost_kind = CostKind::dollars;
  unsigned threads = 1;
  std::uint64_t max_configs = kDefaultMaxConfigs;
};

/// Thresholds are stored as grid indices; `reject`/`accept` carry the
/// corresponding grid values (accept has k-1 entries).
struct FrontierPoint {
  std::vector<std::size_t> reject_index;
  std::vector<std::size_t> accept_index;
  std::vector<double> reject;
  std::vector<double> accept;
  PerformancePoint performance;
  std::uint64_t config_index = 0;  ///< mixed-radix rank of (r1, a1, ..., rk); order-independent id
};

struct FrontierResult {
  std::vector<FrontierPoint> points;  ///< sorted by (cost, abstention, error, config_index)
  std::uint64_t configs_enumerated = 0;
  std::uint64_t dominated_count = 0;  ///< enumerated configs not in `points` (dominated or same triple)
  double wall_seconds = 0.0;
  bool early_abstention = true;
  ErrorMode error_mode = ErrorMode::plugin;
  CostAccounting accounting = CostAccounting::flat;
  std::vector<std::string> model_ids;
};

/// Number of configurations with r_j <= a_j on this grid: for each non-final
/// member m(m+1)/2 pairs (m with early abstention disabled), times m for the
/// last member. 861^2 * 41 = 30,394,161 for three members with 41 points each.
std::uint64_t count_configurations(const QuantileGrid& grid, bool early_abstention);

/// Evaluates chain configurations on grid thresholds from prefix-summed
/// histograms. Each record is binned once per member; per-configuration cost
/// does not depend on the number of records. Results are bit-identical to
/// estimate_performance on the same thresholds.
class HistogramEvaluator {
 public:
  HistogramEvaluator(const Dataset& dataset, std::vector<ModelProfile> members, QuantileGrid grid,
                     ErrorMode mode, CostAccounting accounting);
  ~HistogramEvaluator();
  HistogramEvaluator(HistogramEvaluator&&) noexcept;
  HistogramEvaluator& operator=(HistogramEvaluator&&) noexcept;

  std::size_t members() const;
  const QuantileGrid& grid() const;

  /// Thresholds given as grid indices; accept_index has k-1 entries.
  PerformancePoint evaluate(std::span<const std::size_t> reject_index, std::span<const std::size_t> accept_index) const;

  /// Calls fn(reject_index, accept_index, performance) for every admissible
  /// configuration whose first-member choice is chunk `chunk` of
  /// chunk_count(). Chunks are independent and may be processed concurrently.
  std::size_t chunk_count(bool early_abstention) const;
  template <typename Fn>
  void enumerate_chunk(std::size_t chunk, bool early_abstention, Fn&& fn) const;

  std::uint64_t config_index(std::span<const std::size_t> reject_index, std::span<const std::size_t> accept_index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  void enumerate_chunk_impl(std::size_t chunk, bool early_abstention,
                            void (*emit)(void*, const std::size_t*, const std::size_t*, const PerformancePoint&),
                            void* ctx) const;
};

template <typename Fn>
void HistogramEvaluator::enumerate_chunk(std::size_t chunk, bool early_abstention, Fn&& fn) const {
  using F = std::remove_reference_t<Fn>;
  enumerate_chunk_impl(
      chunk, early_abstention,
      [](void* ctx, const std::size_t* r, const std::size_t* a, const PerformancePoint& p) {
        (*static_cast<F*>(ctx))(r, a, p);
      },
      const_cast<void*>(static_cast<const void*>(&fn)));
}

/// Exhaustive sweep over the grid followed by the skyline. Workers process
/// static chunk partitions and reduce to private skyline buffers that are
/// merged at the end; the result does not depend on the thread count.
FrontierResult enumerate_frontier(const Dataset& dataset, const std::vector<ModelProfile>& members,
                                  const QuantileGrid& grid, const FrontierOptions& options = {});

/// Indices of points not dominated by any other point (minimization in all
/// coordinates; dominated = other <= everywhere and < somewhere). Exact
/// duplicates of a skyline point are all kept. Returned in increasing order.
std::vector<std::size_t> skyline(std::span<const std::array<double, 3>> points);

// ---------------------------------------------------------------------------
// Reporting.

struct CurvePoint {
  std::size_t bin = 0;  ///< abstention sub-bin index
  double abstention_lower = 0.0;
  double abstention_upper = 0.0;
  double abstention = 0.0;  ///< mean abstention of the points in the sub-bin
  double error = 0.0;       ///< mean error of the points in the sub-bin
  std::size_t count = 0;
};

struct CostBucket {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<std::size_t> members;  ///< indices into FrontierResult::points
  std::vector<CurvePoint> curve;     ///< nonempty sub-bins only, increasing abstention
};

inline constexpr double kDefaultAbstentionBin = 0.05;

/// Buckets [edges[i], edges[i+1]) by expected cost; inside each bucket the
/// error-abstention curve averages the member points per abstention sub-bin.
std::vector<CostBucket> bucket_curves(const FrontierResult& frontier, const std::vector<double>& edges,
                                      double abstention_bin = kDefaultAbstentionBin);

/// Averages arbitrary (abstention, error) points into sub-bins.
std::vector<CurvePoint> binned_curve(std::span<const PerformancePoint> points,
                                     double abstention_bin = kDefaultAbstentionBin);

struct BaselinePoint {
  double threshold = 0.0;
  PerformancePoint performance;
};

struct BaselineCurve {
  std::string model_id;
  std::vector<BaselinePoint> points;  ///< one per grid threshold, increasing threshold
};

/// Selective prediction with one model: accept iff p_hat >= r for every
/// candidate r; cost is constant.
BaselineCurve single_model_baseline(const Dataset& dataset, const ModelProfile& member,
                                    const std::vector<double>& thresholds, ErrorMode mode,
                                    CostAccounting accounting);
/// Resolves the accounting from this member's token counts alone.
BaselineCurve single_model_baseline(const Dataset& dataset, const ModelProfile& member,
                                    const std::vector<double>& thresholds, ErrorMode mode,
                                    CostKind cost_kind = CostKind::dollars);

/// Fraction of the baseline's occupied abstention sub-bins in which the
/// bucket curve has a point with mean error <= the baseline's mean error.
/// Sub-bins the bucket curve does not reach count as failures.
double dominance_fraction(const std::vector<CurvePoint>& bucket_curve, const BaselineCurve& baseline,
                          double abstention_bin = kDefaultAbstentionBin);

struct AblationOptions {
  double cost_ceiling = 0.0;
  CostKind cost_kind = CostKind::dollars;
  ErrorMode error_mode = ErrorMode::plugin;
  unsigned threads = 1;
  std::vector<double> abstention_targets;  ///< empty: 0, 0.05, ..., 1
};

struct MatchedTarget {
  double error = 0.0;
  double abstention = 0.0;
  double cost_constrained = 0.0;  ///< cheapest constrained point with error and abstention at most the target
  double cost_early = 0.0;        ///< same over the early-abstention frontier
};

struct CeilingRow {
  double abstention_target = 0.0;
  std::optional<double> error_early;        ///< min error with cost <= ceiling and abstention <= target
  std::optional<double> error_constrained;
};

struct AblationReport {
  FrontierResult early;
  FrontierResult constrained;
  std::vector<MatchedTarget> matched;  ///< one per constrained frontier point
  double mean_cost_improvement = 0.0;  ///< mean of 1 - cost_early / cost_constrained
  double cost_ceiling = 0.0;
  std::vector<CeilingRow> ceiling;
  bool ceiling_feasible = false;       ///< some point of either frontier fits under the ceiling
};

/// Compares the unconstrained chain with the one where only the last member
/// may abstain. Requires at least two members. An infeasible ceiling is
/// reported, not thrown.
AblationReport ablate_early_abstention(const Dataset& dataset, const std::vector<ModelProfile>& members,
                                       const QuantileGrid& grid, const AblationOptions& options);

// ---------------------------------------------------------------------------
// CSV export. Numbers use the shortest round-trip decimal form.

/// r_1..r_k, a_1..a_{k-1}, error, abstention, cost
void write_frontier_csv(std::ostream& out, const FrontierResult& frontier);
/// bucket_lower, bucket_upper, abstention, mean_error
void write_curves_csv(std::ostream& out, const std::vector<CostBucket>& buckets);
/// model_id, threshold, cost, abstention, error
void write_baselines_csv(std::ostream& out, const std::vector<BaselineCurve>& baselines);

}  // namespace hcma
