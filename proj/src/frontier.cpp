#include "hcma/frontier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <ostream>
#include <thread>
#include <tuple>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

namespace {

std::size_t grid_steps(double resolution) {
  if (!(resolution > 0.0) || resolution > 1.0)
    throw ConfigError("resolution must be in (0, 1], got " + format_double(resolution));
  const double inv = 1.0 / resolution;
  const auto steps = static_cast<std::size_t>(std::llround(inv));
  if (steps == 0 || std::abs(static_cast<double>(steps) * resolution - 1.0) > 1e-9)
    throw ConfigError("resolution " + format_double(resolution) + " does not divide 1 evenly");
  return steps;
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

std::uint64_t count_for_sizes(const std::vector<std::size_t>& m, bool early_abstention) {
  std::uint64_t total = 1;
  for (std::size_t j = 0; j < m.size(); ++j) {
    std::uint64_t choices = m[j];
    if (j + 1 < m.size() && early_abstention) choices = static_cast<std::uint64_t>(m[j]) * (m[j] + 1) / 2;
    total = saturating_mul(total, choices);
  }
  return total;
}

void check_chain_length(std::size_t k) {
  if (k == 0) throw ConfigError("chain must have at least one member");
  if (k > kMaxChainLength)
    throw ConfigError("grid too large: chains longer than " + std::to_string(kMaxChainLength) +
                      " members are not supported (got " + std::to_string(k) +
                      "); split the hierarchy or search a shorter chain");
}

/// Pareto staircase over (y, z) of accepted points with z strictly
/// decreasing in y. Points arrive in nondecreasing x.
class Staircase {
 public:
  bool dominated(double y, double z) const {
    auto it = steps_.upper_bound(y);
    if (it == steps_.begin()) return false;
    return std::prev(it)->second <= z;
  }
  void insert(double y, double z) {
    auto it = steps_.lower_bound(y);
    while (it != steps_.end() && it->second >= z) it = steps_.erase(it);
    steps_[y] = z;
  }

 private:
  std::map<double, double> steps_;
};

struct Candidate {
  double error;
  double abstention;
  double cost;
  std::uint64_t index;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  return std::tie(a.error, a.abstention, a.cost, a.index) < std::tie(b.error, b.abstention, b.cost, b.index);
}

bool same_triple(const Candidate& a, const Candidate& b) {
  return a.error == b.error && a.abstention == b.abstention && a.cost == b.cost;
}

/// Replaces `c` by its skyline, keeping one configuration (smallest index)
/// per distinct performance triple. The result depends only on the set.
void reduce_skyline(std::vector<Candidate>& c) {
  std::sort(c.begin(), c.end(), candidate_less);
  Staircase stairs;
  std::size_t out = 0;
  for (std::size_t i = 0; i < c.size();) {
    std::size_t end = i + 1;
    while (end < c.size() && same_triple(c[i], c[end])) ++end;
    if (!stairs.dominated(c[i].abstention, c[i].cost)) {
      stairs.insert(c[i].abstention, c[i].cost);
      c[out++] = c[i];
    }
    i = end;
  }
  c.resize(out);
}

constexpr std::size_t kCandidateBuffer = std::size_t{1} << 21;

}  // namespace

// ---------------------------------------------------------------------------

QuantileGrid build_grid(const Dataset& dataset, const std::vector<ModelProfile>& members, double resolution) {
  if (dataset.empty()) throw DomainError("build_grid: empty dataset");
  if (members.empty()) throw ConfigError("build_grid: no chain members");
  const std::size_t steps = grid_steps(resolution);
  QuantileGrid grid;
  grid.resolution = resolution;
  const std::size_t n = dataset.size();
  for (const auto& m : members) {
    std::vector<double> p;
    p.reserve(n);
    for (const auto& r : dataset.records()) p.push_back(m.p_hat(r.require(m.model_id).raw_prob));
    std::sort(p.begin(), p.end());
    std::vector<double> q;
    q.reserve(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) {
      // Lower order statistic at level i / steps, in integer arithmetic.
      const std::size_t idx = static_cast<std::size_t>((static_cast<unsigned __int128>(i) * (n - 1)) / steps);
      q.push_back(p[idx]);
    }
    q.erase(std::unique(q.begin(), q.end()), q.end());
    if (q.size() > 1) q.back() = std::nextafter(q.back(), std::numeric_limits<double>::infinity());
    grid.model_ids.push_back(m.model_id);
    grid.thresholds.push_back(std::move(q));
  }
  return grid;
}

std::uint64_t count_configurations(const QuantileGrid& grid, bool early_abstention) {
  std::vector<std::size_t> m;
  for (const auto& t : grid.thresholds) m.push_back(t.size());
  return count_for_sizes(m, early_abstention);
}

// ---------------------------------------------------------------------------
// Histogram evaluator.

namespace {

struct Cell {
  std::int64_t count = 0;
  std::int64_t emp = 0;     ///< incorrect answers of this level's member
  __int128 plugin = 0;      ///< sum of 1 - p_hat of this level's member, 2^-53 units
  __int128 next = 0;        ///< cost units of the following member

  Cell& operator+=(const Cell& o) {
    count += o.count;
    emp += o.emp;
    plugin += o.plugin;
    next += o.next;
    return *this;
  }
};

inline Cell difference(const Cell& a, const Cell& b) {
  return Cell{a.count - b.count, a.emp - b.emp, a.plugin - b.plugin, a.next - b.next};
}

struct Acc {
  std::int64_t rejected = 0;
  std::int64_t emp = 0;
  __int128 plugin = 0;
  std::array<__int128, kMaxChainLength> units{};
};

struct Ranges {
  std::array<std::size_t, kMaxChainLength> r_lo{}, r_hi{}, a_lo{}, a_hi{};  // inclusive
};

}  // namespace

struct HistogramEvaluator::Impl {
  std::size_t k = 0;
  std::int64_t n = 0;
  QuantileGrid grid;
  std::vector<ModelProfile> members;
  ErrorMode mode = ErrorMode::plugin;
  CostAccounting accounting = CostAccounting::flat;
  std::array<double, kMaxChainLength> unit_values{};
  __int128 first_units = 0;
  std::vector<std::size_t> bins;               ///< s_j = m_j + 1
  std::vector<std::vector<Cell>> tables;       ///< level L over (beta_0..beta_L), prefix-summed

  /// Per-thread collapse buffers: scratch[j][L] holds level L restricted to
  /// the bands chosen for members < j, over dims j..L.
  struct Scratch {
    std::array<std::array<std::vector<Cell>, kMaxChainLength>, kMaxChainLength> buf;
    std::array<std::array<const Cell*, kMaxChainLength>, kMaxChainLength> ptr{};
  };

  std::size_t inner(std::size_t from, std::size_t to) const {  // prod s_i, i in [from, to]
    std::size_t p = 1;
    for (std::size_t i = from; i <= to && i < k; ++i) p *= bins[i];
    return p;
  }

  Scratch make_scratch() const {
    Scratch s;
    for (std::size_t L = 0; L < k; ++L) s.ptr[0][L] = tables[L].data();
    for (std::size_t j = 1; j < k; ++j)
      for (std::size_t L = j; L < k; ++L) {
        s.buf[j][L].resize(inner(j, L));
        s.ptr[j][L] = s.buf[j][L].data();
      }
    return s;
  }

  template <typename Emit>
  void descend(Scratch& s, std::size_t j, const Acc& acc, const Ranges& rg, std::size_t* r, std::size_t* a,
               Emit& emit) const {
    const Cell* own = s.ptr[j][j];
    const std::size_t m = grid.thresholds[j].size();
    const Cell& total = own[m];
    const bool last = j + 1 == k;
    for (std::size_t rho = rg.r_lo[j]; rho <= rg.r_hi[j]; ++rho) {
      const Cell& pr = own[rho];
      Acc a1 = acc;
      a1.rejected += pr.count;
      r[j] = rho;
      if (last) {
        a1.emp += total.emp - pr.emp;
        a1.plugin += total.plugin - pr.plugin;
        emit(r, a, finalize_counts(n, a1.rejected, a1.plugin, a1.emp, std::span<const __int128>(a1.units.data(), k),
                                   std::span<const double>(unit_values.data(), k), mode));
        continue;
      }
      for (std::size_t alpha = std::max(rho, rg.a_lo[j]); alpha <= rg.a_hi[j]; ++alpha) {
        const Cell& pa = own[alpha];
        Acc a2 = a1;
        a2.emp += total.emp - pa.emp;
        a2.plugin += total.plugin - pa.plugin;
        a2.units[j + 1] = pa.next - pr.next;
        a[j] = alpha;
        // Restrict deeper levels to rho < beta_j <= alpha: prefix(alpha) - prefix(rho).
        for (std::size_t L = j + 1; L < k; ++L) {
          const std::size_t width = inner(j + 1, L);
          const Cell* hi = s.ptr[j][L] + alpha * width;
          const Cell* lo = s.ptr[j][L] + rho * width;
          Cell* dst = s.buf[j + 1][L].data();
          for (std::size_t x = 0; x < width; ++x) dst[x] = difference(hi[x], lo[x]);
        }
        descend(s, j + 1, a2, rg, r, a, emit);
      }
    }
  }

  Acc initial() const {
    Acc acc;
    acc.units[0] = first_units;
    return acc;
  }

  /// Top-level (member 0) choices in enumeration order.
  std::vector<std::pair<std::size_t, std::size_t>> top_choices(bool early_abstention) const {
    std::vector<std::pair<std::size_t, std::size_t>> c;
    const std::size_t m = grid.thresholds[0].size();
    if (k == 1) {
      for (std::size_t r = 0; r < m; ++r) c.emplace_back(r, r);
      return c;
    }
    const std::size_t r_hi = early_abstention ? m - 1 : 0;
    for (std::size_t r = 0; r <= r_hi; ++r)
      for (std::size_t a = r; a < m; ++a) c.emplace_back(r, a);
    return c;
  }
};

HistogramEvaluator::HistogramEvaluator(const Dataset& dataset, std::vector<ModelProfile> members, QuantileGrid grid,
                                       ErrorMode mode, CostAccounting accounting)
    : impl_(std::make_unique<Impl>()) {
  Impl& im = *impl_;
  im.k = members.size();
  check_chain_length(im.k);
  if (dataset.empty()) throw DomainError("histogram evaluator: empty dataset");
  if (grid.members() != im.k) throw ConfigError("grid has " + std::to_string(grid.members()) + " members, chain has " +
                                                std::to_string(im.k));
  for (std::size_t j = 0; j < im.k; ++j) {
    const auto& t = grid.thresholds[j];
    if (t.empty()) throw ConfigError("grid for '" + members[j].model_id + "' is empty");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i - 1] < t[i])) throw ConfigError("grid for '" + members[j].model_id + "' is not strictly increasing");
    if (!members[j].calibrator || !members[j].calibrator->fitted())
      throw StateError("model '" + members[j].model_id + "' has no fitted calibrator");
  }
  im.n = static_cast<std::int64_t>(dataset.size());
  im.grid = std::move(grid);
  im.members = std::move(members);
  im.mode = mode;
  im.accounting = accounting;
  for (std::size_t j = 0; j < im.k; ++j) {
    im.unit_values[j] = unit_value(accounting, im.members[j]);
    im.bins.push_back(im.grid.thresholds[j].size() + 1);
  }
  im.tables.resize(im.k);
  for (std::size_t L = 0; L < im.k; ++L) im.tables[L].assign(im.inner(0, L), Cell{});

  std::vector<std::size_t> beta(im.k);
  std::vector<std::int64_t> units(im.k);
  std::vector<__int128> plugin(im.k);
  std::vector<bool> wrong(im.k);
  for (const auto& rec : dataset.records()) {
    for (std::size_t j = 0; j < im.k; ++j) {
      const ModelProfile& prof = im.members[j];
      const ModelEntry& e = rec.require(prof.model_id);
      const double p = prof.p_hat(e.raw_prob);
      const auto& t = im.grid.thresholds[j];
      beta[j] = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), p) - t.begin());
      units[j] = cost_units(accounting, prof, e.tokens_in, e.tokens_out, e.latency_ms);
      plugin[j] = plugin_error_units(p);
      wrong[j] = !e.correct;
    }
    im.first_units += units[0];
    std::size_t flat = 0;
    for (std::size_t L = 0; L < im.k; ++L) {
      flat = flat * im.bins[L] + beta[L];
      Cell& c = im.tables[L][flat];
      c.count += 1;
      c.emp += wrong[L] ? 1 : 0;
      c.plugin += plugin[L];
      if (L + 1 < im.k) c.next += units[L + 1];
    }
  }
  // Inclusive prefix sums along every dimension.
  for (std::size_t L = 0; L < im.k; ++L) {
    auto& t = im.tables[L];
    for (std::size_t d = 0; d <= L; ++d) {
      const std::size_t stride = im.inner(d + 1, L);
      const std::size_t extent = im.bins[d];
      for (std::size_t idx = 0; idx < t.size(); ++idx)
        if ((idx / stride) % extent != 0) t[idx] += t[idx - stride];
    }
  }
}

HistogramEvaluator::~HistogramEvaluator() = default;
HistogramEvaluator::HistogramEvaluator(HistogramEvaluator&&) noexcept = default;
HistogramEvaluator& HistogramEvaluator::operator=(HistogramEvaluator&&) noexcept = default;

std::size_t HistogramEvaluator::members() const { return impl_->k; }
const QuantileGrid& HistogramEvaluator::grid() const { return impl_->grid; }

PerformancePoint HistogramEvaluator::evaluate(std::span<const std::size_t> reject_index,
                                              std::span<const std::size_t> accept_index) const {
  const Impl& im = *impl_;
  if (reject_index.size() != im.k || accept_index.size() + 1 != im.k)
    throw ConfigError("evaluate: expected " + std::to_string(im.k) + " reject and " + std::to_string(im.k - 1) +
                      " accept indices");
  Ranges rg;
  for (std::size_t j = 0; j < im.k; ++j) {
    const std::size_t m = im.grid.thresholds[j].size();
    const std::size_t r = reject_index[j];
    const std::size_t a = j + 1 < im.k ? accept_index[j] : r;
    if (r >= m || a >= m) throw ConfigError("evaluate: threshold index out of range for member " + std::to_string(j + 1));
    if (r > a) throw ConfigError("evaluate: reject index exceeds accept index for member " + std::to_string(j + 1));
    rg.r_lo[j] = rg.r_hi[j] = r;
    rg.a_lo[j] = rg.a_hi[j] = a;
  }
  auto scratch = im.make_scratch();
  std::array<std::size_t, kMaxChainLength> r{}, a{};
  PerformancePoint out;
  auto emit = [&](const std::size_t*, const std::size_t*, const PerformancePoint& p) { out = p; };
  im.descend(scratch, 0, im.initial(), rg, r.data(), a.data(), emit);
  return out;
}

std::size_t HistogramEvaluator::chunk_count(bool early_abstention) const {
  return impl_->top_choices(early_abstention).size();
}

std::uint64_t HistogramEvaluator::config_index(std::span<const std::size_t> reject_index,
                                               std::span<const std::size_t> accept_index) const {
  const Impl& im = *impl_;
  std::uint64_t idx = 0;
  for (std::size_t j = 0; j < im.k; ++j) {
    const std::uint64_t m = im.grid.thresholds[j].size();
    idx = idx * m + reject_index[j];
    if (j + 1 < im.k) idx = idx * m + accept_index[j];
  }
  return idx;
}

void HistogramEvaluator::enumerate_chunk_impl(
    std::size_t chunk, bool early_abstention,
    void (*emit)(void*, const std::size_t*, const std::size_t*, const PerformancePoint&), void* ctx) const {
  const Impl& im = *impl_;
  const auto top = im.top_choices(early_abstention);
  if (chunk >= top.size()) throw ConfigError("enumerate_chunk: chunk out of range");
  Ranges rg;
  rg.r_lo[0] = rg.r_hi[0] = top[chunk].first;
  rg.a_lo[0] = rg.a_hi[0] = top[chunk].second;
  for (std::size_t j = 1; j < im.k; ++j) {
    const std::size_t m = im.grid.thresholds[j].size();
    rg.r_lo[j] = 0;
    rg.r_hi[j] = (early_abstention || j + 1 == im.k) ? m - 1 : 0;
    rg.a_lo[j] = 0;
    rg.a_hi[j] = m - 1;
  }
  auto scratch = im.make_scratch();
  std::array<std::size_t, kMaxChainLength> r{}, a{};
  auto fwd = [&](const std::size_t* rr, const std::size_t* aa, const PerformancePoint& p) { emit(ctx, rr, aa, p); };
  im.descend(scratch, 0, im.initial(), rg, r.data(), a.data(), fwd);
}

// ---------------------------------------------------------------------------

FrontierResult enumerate_frontier(const Dataset& dataset, const std::vector<ModelProfile>& members,
                                  const QuantileGrid& grid, const FrontierOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t k = members.size();
  check_chain_length(k);
  if (grid.members() != k) throw ConfigError("grid does not match the chain length");

  const std::uint64_t total = count_configurations(grid, options.early_abstention);
  if (total > options.max_configs) {
    // Suggest the finest resolution that fits, assuming distinct quantiles.
    std::size_t steps = grid_steps(grid.resolution);
    while (steps > 1 && count_for_sizes(std::vector<std::size_t>(k, steps + 1), options.early_abstention) >
                            options.max_configs)
      --steps;
    throw ConfigError("grid too large: " + std::to_string(total) + " configurations exceed the limit of " +
                      std::to_string(options.max_configs) + "; use a resolution of at least " +
                      format_double(1.0 / static_cast<double>(steps)) + " (1/" + std::to_string(steps) + ")");
  }

  const CostAccounting accounting = resolve_accounting(options.cost_kind, dataset, [&] {
    std::vector<std::string> ids;
    for (const auto& m : members) ids.push_back(m.model_id);
    return ids;
  }());
  HistogramEvaluator ev(dataset, members, grid, options.error_mode, accounting);

  const std::size_t chunks = ev.chunk_count(options.early_abstention);
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(chunks)));
  std::vector<std::vector<Candidate>> buffers(threads);
  std::vector<std::uint64_t> counts(threads, 0);
  std::vector<std::exception_ptr> errors(threads);

  auto work = [&](unsigned w) {
    try {
      auto& buf = buffers[w];
      buf.reserve(std::min<std::size_t>(kCandidateBuffer, total) + 1);
      std::uint64_t seen = 0;
      for (std::size_t c = w; c < chunks; c += threads) {
        ev.enumerate_chunk(c, options.early_abstention,
                           [&](const std::size_t* r, const std::size_t* a, const PerformancePoint& p) {
                             ++seen;
                             buf.push_back(Candidate{p.error, p.abstention, p.expected_cost,
                                                     ev.config_index({r, k}, {a, k - 1})});
                             if (buf.size() >= kCandidateBuffer) reduce_skyline(buf);
                           });
      }
      reduce_skyline(buf);
      counts[w] = seen;
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<Candidate> merged;
  for (auto& b : buffers) merged.insert(merged.end(), b.begin(), b.end());
  reduce_skyline(merged);
  std::sort(merged.begin(), merged.end(), [](const Candidate& x, const Candidate& y) {
    return std::tie(x.cost, x.abstention, x.error, x.index) < std::tie(y.cost, y.abstention, y.error, y.index);
  });

  FrontierResult res;
  res.early_abstention = options.early_abstention;
  res.error_mode = options.error_mode;
  res.accounting = accounting;
  for (const auto& m : members) res.model_ids.push_back(m.model_id);
  for (auto c : counts) res.configs_enumerated += c;
  res.points.reserve(merged.size());
  for (const auto& c : merged) {
    FrontierPoint fp;
    fp.config_index = c.index;
    fp.performance = PerformancePoint{c.error, c.abstention, c.cost};
    fp.reject_index.assign(k, 0);
    fp.accept_index.assign(k - 1, 0);
    std::uint64_t idx = c.index;
    for (std::size_t j = k; j-- > 0;) {
      const std::uint64_t m = grid.thresholds[j].size();
      if (j + 1 < k) {
        fp.accept_index[j] = static_cast<std::size_t>(idx % m);
        idx /= m;
      }
      fp.reject_index[j] = static_cast<std::size_t>(idx % m);
      idx /= m;
    }
    for (std::size_t j = 0; j < k; ++j) {
      fp.reject.push_back(grid.thresholds[j][fp.reject_index[j]]);
      if (j + 1 < k) fp.accept.push_back(grid.thresholds[j][fp.accept_index[j]]);
    }
    res.points.push_back(std::move(fp));
  }
  res.dominated_count = res.configs_enumerated - res.points.size();
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

std::vector<std::size_t> skyline(std::span<const std::array<double, 3>> points) {
  for (const auto& p : points)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2]))
      throw DomainError("skyline: coordinates must be finite");
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(points[a][0], points[a][1], points[a][2], a) < std::tie(points[b][0], points[b][1], points[b][2], b);
  });
  Staircase stairs;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t end = i + 1;
    while (end < order.size() && points[order[end]] == points[order[i]]) ++end;
    const auto& p = points[order[i]];
    if (!stairs.dominated(p[1], p[2])) {
      stairs.insert(p[1], p[2]);
      out.insert(out.end(), order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    i = end;
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Reporting.

namespace {

std::size_t sub_bins(double width) {
  if (!(width > 0.0) || width > 1.0) throw ConfigError("abstention bin width must be in (0, 1]");
  return static_cast<std::size_t>(std::ceil(1.0 / width - 1e-9));
}

// b / (1 / width) rather than b * width: exact for widths like 0.05 where
// 12 * 0.05 lands one ulp above 0.6.
double bin_edge(std::size_t b, double width) { return std::min(1.0, static_cast<double>(b) / (1.0 / width)); }

std::size_t sub_bin(double abstention, double width, std::size_t count) {
  auto b = static_cast<std::size_t>(std::max(0.0, std::floor(abstention * (1.0 / width))));
  if (b > 0 && bin_edge(b, width) > abstention) --b;
  else if (bin_edge(b + 1, width) <= abstention && b + 1 < count) ++b;
  return std::min(b, count - 1);
}

}  // namespace

std::vector<CurvePoint> binned_curve(std::span<const PerformancePoint> points, double abstention_bin) {
  const std::size_t nb = sub_bins(abstention_bin);
  std::vector<double> sum_a(nb, 0.0), sum_e(nb, 0.0);
  std::vector<std::size_t> cnt(nb, 0);
  for (const auto& p : points) {
    const std::size_t b = sub_bin(p.abstention, abstention_bin, nb);
    sum_a[b] += p.abstention;
    sum_e[b] += p.error;
    ++cnt[b];
  }
  std::vector<CurvePoint> curve;
  for (std::size_t b = 0; b < nb; ++b) {
    if (cnt[b] == 0) continue;
    CurvePoint c;
    c.bin = b;
    c.abstention_lower = bin_edge(b, abstention_bin);
    c.abstention_upper = bin_edge(b + 1, abstention_bin);
    c.abstention = sum_a[b] / static_cast<double>(cnt[b]);
    c.error = sum_e[b] / static_cast<double>(cnt[b]);
    c.count = cnt[b];
    curve.push_back(c);
  }
  return curve;
}

std::vector<CostBucket> bucket_curves(const FrontierResult& frontier, const std::vector<double>& edges,
                                      double abstention_bin) {
  if (edges.size() < 2) throw ConfigError("bucket_curves: at least two edges are required");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!std::isfinite(edges[i])) throw ConfigError("bucket_curves: edges must be finite");
    if (i > 0 && !(edges[i - 1] < edges[i])) throw ConfigError("bucket_curves: edges must be strictly increasing");
  }
  sub_bins(abstention_bin);
  std::vector<CostBucket> buckets(edges.size() - 1);
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].lower = edges[b];
    buckets[b].upper = edges[b + 1];
  }
  for (std::size_t i = 0; i < frontier.points.size(); ++i) {
    const double c = frontier.points[i].performance.expected_cost;
    auto it = std::upper_bound(edges.begin(), edges.end(), c);
    if (it == edges.begin() || it == edges.end()) continue;
    buckets[static_cast<std::size_t>(it - edges.begin()) - 1].members.push_back(i);
  }
  for (auto& b : buckets) {
    std::vector<PerformancePoint> pts;
    for (auto i : b.members) pts.push_back(frontier.points[i].performance);
    b.curve = binned_curve(pts, abstention_bin);
  }
  return buckets;
}

BaselineCurve single_model_baseline(const Dataset& dataset, const ModelProfile& member,
                                    const std::vector<double>& thresholds, ErrorMode mode,
                                    CostAccounting accounting) {
  BaselineCurve curve;
  curve.model_id = member.model_id;
  for (double r : thresholds) {
    ChainConfig cfg({ChainMember{member, r, r}});
    curve.points.push_back(BaselinePoint{r, estimate_performance(cfg, dataset, mode, accounting)});
  }
  return curve;
}

BaselineCurve single_model_baseline(const Dataset& dataset, const ModelProfile& member,
                                    const std::vector<double>& thresholds, ErrorMode mode, CostKind cost_kind) {
  return single_model_baseline(dataset, member, thresholds, mode,
                               resolve_accounting(cost_kind, dataset, {member.model_id}));
}

double dominance_fraction(const std::vector<CurvePoint>& bucket_curve, const BaselineCurve& baseline,
                          double abstention_bin) {
  std::vector<PerformancePoint> pts;
  for (const auto& p : baseline.points) pts.push_back(p.performance);
  const auto base = binned_curve(pts, abstention_bin);
  if (base.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& b : base) {
    auto it = std::find_if(bucket_curve.begin(), bucket_curve.end(), [&](const CurvePoint& c) { return c.bin == b.bin; });
    if (it != bucket_curve.end() && it->error <= b.error) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(base.size());
}

AblationReport ablate_early_abstention(const Dataset& dataset, const std::vector<ModelProfile>& members,
                                       const QuantileGrid& grid, const AblationOptions& options) {
  if (members.size() < 2) throw ConfigError("early-abstention ablation needs a chain of at least two members");
  if (!std::isfinite(options.cost_ceiling)) throw ConfigError("cost ceiling must be finite");
  FrontierOptions fo;
  fo.cost_kind = options.cost_kind;
  fo.error_mode = options.error_mode;
  fo.threads = options.threads;
  AblationReport rep;
  rep.cost_ceiling = options.cost_ceiling;
  fo.early_abstention = true;
  rep.early = enumerate_frontier(dataset, members, grid, fo);
  fo.early_abstention = false;
  rep.constrained = enumerate_frontier(dataset, members, grid, fo);

  auto cheapest = [](const FrontierResult& f, double e, double a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : f.points)
      if (p.performance.error <= e && p.performance.abstention <= a) best = std::min(best, p.performance.expected_cost);
    return best;
  };
  double improvement = 0.0;
  std::size_t counted = 0;
  for (const auto& t : rep.constrained.points) {
    MatchedTarget m;
    m.error = t.performance.error;
    m.abstention = t.performance.abstention;
    m.cost_constrained = cheapest(rep.constrained, m.error, m.abstention);
    m.cost_early = cheapest(rep.early, m.error, m.abstention);
    if (m.cost_constrained > 0.0) {
      improvement += 1.0 - m.cost_early / m.cost_constrained;
      ++counted;
    }
    rep.matched.push_back(m);
  }
  rep.mean_cost_improvement = counted ? improvement / static_cast<double>(counted) : 0.0;

  std::vector<double> targets = options.abstention_targets;
  if (targets.empty())
    for (int i = 0; i <= 20; ++i) targets.push_back(static_cast<double>(i) / 20.0);
  auto best_error = [&](const FrontierResult& f, double alpha) -> std::optional<double> {
    std::optional<double> best;
    for (const auto& p : f.points)
      if (p.performance.expected_cost <= options.cost_ceiling && p.performance.abstention <= alpha)
        best = best ? std::min(*best, p.performance.error) : p.performance.error;
    return best;
  };
  for (double alpha : targets) {
    CeilingRow row;
    row.abstention_target = alpha;
    row.error_early = best_error(rep.early, alpha);
    row.error_constrained = best_error(rep.constrained, alpha);
    rep.ceiling.push_back(row);
  }
  auto fits = [&](const FrontierResult& f) {
    return std::any_of(f.points.begin(), f.points.end(),
                       [&](const FrontierPoint& p) { return p.performance.expected_cost <= options.cost_ceiling; });
  };
  rep.ceiling_feasible = fits(rep.early) || fits(rep.constrained);
  return rep;
}

// ---------------------------------------------------------------------------
// CSV export.

void write_frontier_csv(std::ostream& out, const FrontierResult& frontier) {
  const std::size_t k = frontier.model_ids.size();
  for (std::size_t j = 1; j <= k; ++j) out << "r_" << j << ',';
  for (std::size_t j = 1; j < k; ++j) out << "a_" << j << ',';
  out << "error,abstention,cost\n";
  for (const auto& p : frontier.points) {
    for (double r : p.reject) out << format_double(r) << ',';
    for (double a : p.accept) out << format_double(a) << ',';
    out << format_double(p.performance.error) << ',' << format_double(p.performance.abstention) << ','
        << format_double(p.performance.expected_cost) << '\n';
  }
}

void write_curves_csv(std::ostream& out, const std::vector<CostBucket>& buckets) {
  out << "bucket_lower,bucket_upper,abstention,mean_error\n";
  for (const auto& b : buckets)
    for (const auto& c : b.curve)
      out << format_double(b.lower) << ',' << format_double(b.upper) << ',' << format_double(c.abstention) << ','
          << format_double(c.error) << '\n';
}

void write_baselines_csv(std::ostream& out, const std::vector<BaselineCurve>& baselines) {
  out << "model_id,threshold,cost,abstention,error\n";
  for (const auto& b : baselines)
    for (const auto& p : b.points)
      out << b.model_id << ',' << format_double(p.threshold) << ',' << format_double(p.performance.expected_cost) << ','
          << format_double(p.performance.abstention) << ',' << format_double(p.performance.error) << '\n';
}

}  // namespace hcma
