#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <doctest.h>

#include "hcma/error.hpp"
#include "hcma/frontier.hpp"
#include "support.hpp"

using namespace hcma;

namespace {

using Triple = std::array<double, 3>;

Triple triple(const PerformancePoint& p) { return {p.error, p.abstention, p.expected_cost}; }

bool dominates(const Triple& a, const Triple& b) {
  return a[0] <= b[0] && a[1] <= b[1] && a[2] <= b[2] && a != b;
}

/// Quadratic reference: i survives iff nothing dominates it.
std::vector<std::size_t> brute_skyline(const std::vector<Triple>& pts) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dom = false;
    for (std::size_t j = 0; j < pts.size() && !dom; ++j) dom = dominates(pts[j], pts[i]);
    if (!dom) out.push_back(i);
  }
  return out;
}

/// Every admissible configuration on the grid, evaluated record by record.
std::vector<std::pair<Triple, std::vector<std::size_t>>> naive_sweep(const Dataset& ds,
                                                                    const std::vector<ModelProfile>& members,
                                                                    const QuantileGrid& g, bool early,
                                                                    CostAccounting acc, ErrorMode mode) {
  const std::size_t k = members.size();
  std::vector<std::pair<Triple, std::vector<std::size_t>>> out;
  std::vector<std::size_t> idx(2 * k - 1, 0);  // r1, a1, r2, a2, ..., rk
  auto rec = [&](auto&& self, std::size_t j) -> void {
    if (j == k) {
      std::vector<double> r, a;
      for (std::size_t m = 0; m < k; ++m) r.push_back(g.thresholds[m][idx[2 * m]]);
      for (std::size_t m = 0; m + 1 < k; ++m) a.push_back(g.thresholds[m][idx[2 * m + 1]]);
      out.push_back({triple(estimate_performance(test::chain_of(members, r, a), ds, mode, acc)), idx});
      return;
    }
    const std::size_t m = g.thresholds[j].size();
    const bool last = j + 1 == k;
    for (std::size_t ri = 0; ri < m; ++ri) {
      if (!early && !last && ri != 0) break;
      idx[2 * j] = ri;
      if (last) {
        self(self, j + 1);
        continue;
      }
      for (std::size_t ai = ri; ai < m; ++ai) {
        idx[2 * j + 1] = ai;
        self(self, j + 1);
      }
    }
  };
  rec(rec, 0);
  return out;
}

struct Fixture {
  Dataset ds = generate_synthetic(600, default_synthetic_models(), kDefaultSyntheticNoiseSd, 31);
  std::vector<ModelProfile> members = test::calibrated_profiles(ds, {0.3, 0.8, 5.0});
};

}  // namespace

TEST_CASE("grid sizes") {
  Fixture f;
  const auto coarse = build_grid(f.ds, f.members, 0.5);
  REQUIRE(coarse.members() == 3);
  for (const auto& t : coarse.thresholds) CHECK(t.size() == 3);
  const auto fine = build_grid(f.ds, f.members, kDefaultResolution);
  for (const auto& t : fine.thresholds) {
    CHECK(t.size() == 41);
    CHECK(std::is_sorted(t.begin(), t.end()));
    CHECK(std::adjacent_find(t.begin(), t.end()) == t.end());
  }
  CHECK(count_configurations(fine, true) == 30'394'161ULL);
  CHECK(count_configurations(fine, false) == 41ULL * 41 * 41);
  CHECK(count_configurations(coarse, true) == 6ULL * 6 * 3);
  CHECK_THROWS_AS(build_grid(f.ds, f.members, 0.0), ConfigError);
  CHECK_THROWS_AS(build_grid(f.ds, f.members, 1.5), ConfigError);
}

TEST_CASE("grid endpoints reject nothing and everything") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.1);
  for (std::size_t j = 0; j < 3; ++j) {
    std::size_t below_bottom = 0, at_or_above_top = 0;
    for (const auto& r : f.ds.records()) {
      const double p = f.members[j].p_hat(r.require(f.members[j].model_id).raw_prob);
      below_bottom += p < g.thresholds[j].front();
      at_or_above_top += p >= g.thresholds[j].back();
    }
    CHECK(below_bottom == 0);
    CHECK(at_or_above_top == 0);
  }
}

TEST_CASE("constant confidence collapses the grid to one point") {
  Fixture f;
  ModelProfile flat = f.members[0];
  flat.calibrator->weight = 0.0;
  const auto g = build_grid(f.ds, {flat}, 0.1);
  REQUIRE(g.thresholds[0].size() == 1);
  CHECK(count_configurations(g, true) == 1);
  const auto res = enumerate_frontier(f.ds, {flat}, g);
  REQUIRE(res.points.size() == 1);
  CHECK(res.points[0].performance.abstention == 0.0);
}

TEST_CASE("histogram evaluator is bit-identical to the per-record estimator") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.25);
  for (auto mode : {ErrorMode::plugin, ErrorMode::empirical}) {
    for (auto acc : {CostAccounting::flat, CostAccounting::latency}) {
      const auto naive = naive_sweep(f.ds, f.members, g, true, acc, mode);
      HistogramEvaluator ev(f.ds, f.members, g, mode, acc);
      std::size_t seen = 0;
      for (std::size_t c = 0; c < ev.chunk_count(true); ++c)
        ev.enumerate_chunk(c, true, [&](const std::size_t*, const std::size_t*, const PerformancePoint&) { ++seen; });
      CHECK(seen == naive.size());
      CHECK(seen == count_configurations(g, true));
      for (const auto& [t, idx] : naive) {
        const std::vector<std::size_t> r{idx[0], idx[2], idx[4]}, a{idx[1], idx[3]};
        const Triple h = triple(ev.evaluate(r, a));
        CHECK(h == t);
      }
    }
  }
}

TEST_CASE("histogram evaluator with tokens accounting") {
  // Random token counts exercise per-visit units that vary by record.
  Fixture f;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int64_t> tok(0, 900);
  auto recs = f.ds.records();
  for (auto& r : recs)
    for (auto& e : r.entries) e.tokens_in = tok(rng), e.tokens_out = tok(rng) / 10;
  const Dataset ds(f.ds.model_ids(), recs);
  const auto g = build_grid(ds, f.members, 0.25);
  const auto naive = naive_sweep(ds, f.members, g, true, CostAccounting::tokens, ErrorMode::plugin);
  HistogramEvaluator ev(ds, f.members, g, ErrorMode::plugin, CostAccounting::tokens);
  for (const auto& [t, idx] : naive) {
    const std::vector<std::size_t> r{idx[0], idx[2], idx[4]}, a{idx[1], idx[3]};
    CHECK(triple(ev.evaluate(r, a)) == t);
  }
}

TEST_CASE("frontier equals the brute-force skyline of all configurations") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.25);
  for (bool early : {true, false}) {
    const auto naive = naive_sweep(f.ds, f.members, g, early, CostAccounting::flat, ErrorMode::plugin);
    std::vector<Triple> pts;
    for (const auto& n : naive) pts.push_back(n.first);
    std::set<Triple> expected;
    for (auto i : brute_skyline(pts)) expected.insert(pts[i]);

    FrontierOptions opt;
    opt.early_abstention = early;
    const auto res = enumerate_frontier(f.ds, f.members, g, opt);
    std::set<Triple> got;
    for (const auto& p : res.points) got.insert(triple(p.performance));
    CHECK(got == expected);
    CHECK(got.size() == res.points.size());  // one representative per distinct triple
    CHECK(res.configs_enumerated == naive.size());
    CHECK(res.dominated_count == naive.size() - res.points.size());
    CHECK(res.accounting == CostAccounting::flat);
    // Stored grid values must reproduce the stored performance.
    for (const auto& p : res.points) {
      CHECK(triple(estimate_performance(test::chain_of(f.members, p.reject, p.accept), f.ds, ErrorMode::plugin,
                                        CostAccounting::flat)) == triple(p.performance));
      if (!early)
        for (std::size_t j = 0; j + 1 < 3; ++j) CHECK(p.reject_index[j] == 0);
    }
  }
}

TEST_CASE("frontier points are mutually non-dominated and sorted") {
  Fixture f;
  const auto res = enumerate_frontier(f.ds, f.members, build_grid(f.ds, f.members, 0.1));
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    for (std::size_t j = 0; j < res.points.size(); ++j)
      CHECK_FALSE(dominates(triple(res.points[j].performance), triple(res.points[i].performance)));
    if (i > 0) {
      const auto& a = res.points[i - 1].performance;
      const auto& b = res.points[i].performance;
      CHECK(std::tie(a.expected_cost, a.abstention, a.error) <= std::tie(b.expected_cost, b.abstention, b.error));
    }
  }
}

TEST_CASE("frontier does not depend on the thread count") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.1);
  FrontierOptions one;
  FrontierOptions many;
  many.threads = 5;
  const auto a = enumerate_frontier(f.ds, f.members, g, one);
  const auto b = enumerate_frontier(f.ds, f.members, g, many);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].config_index == b.points[i].config_index);
    CHECK(a.points[i].performance == b.points[i].performance);
  }
}

TEST_CASE("early abstention frontier weakly dominates the constrained one") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.1);
  FrontierOptions opt;
  const auto early = enumerate_frontier(f.ds, f.members, g, opt);
  opt.early_abstention = false;
  const auto cons = enumerate_frontier(f.ds, f.members, g, opt);
  CHECK(cons.configs_enumerated < early.configs_enumerated);
  for (const auto& c : cons.points) {
    const Triple t = triple(c.performance);
    const bool covered = std::any_of(early.points.begin(), early.points.end(), [&](const FrontierPoint& e) {
      const Triple u = triple(e.performance);
      return u == t || dominates(u, t);
    });
    CHECK(covered);
  }
}

TEST_CASE("a finer grid never loses frontier quality") {
  // Quantile levels at 0.1 are a subset of those at 0.05.
  Fixture f;
  const auto coarse = enumerate_frontier(f.ds, f.members, build_grid(f.ds, f.members, 0.1));
  const auto fine = enumerate_frontier(f.ds, f.members, build_grid(f.ds, f.members, 0.05));
  for (const auto& c : coarse.points) {
    const Triple t = triple(c.performance);
    CHECK(std::any_of(fine.points.begin(), fine.points.end(), [&](const FrontierPoint& e) {
      const Triple u = triple(e.performance);
      return u == t || dominates(u, t);
    }));
  }
}

TEST_CASE("config limits") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.25);
  FrontierOptions opt;
  opt.max_configs = 10;
  CHECK_THROWS_AS(enumerate_frontier(f.ds, f.members, g, opt), ConfigError);
  std::vector<ModelProfile> five(f.members);
  five.push_back(f.members[0]);
  five.push_back(f.members[1]);
  CHECK_THROWS_AS(enumerate_frontier(f.ds, five, build_grid(f.ds, five, 0.5)), ConfigError);
  try {
    enumerate_frontier(f.ds, five, build_grid(f.ds, five, 0.5));
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid too large") != std::string::npos);
  }
}

TEST_CASE("skyline worked examples") {
  const std::vector<Triple> pts{{1, 1, 1}, {2, 2, 2}, {0, 3, 1}, {1, 1, 1}, {1, 1, 0.5}, {3, 0, 3}};
  CHECK(skyline(pts) == std::vector<std::size_t>{2, 4, 5});
  const std::vector<Triple> ties{{1, 2, 3}, {1, 2, 3}};
  CHECK(skyline(ties) == std::vector<std::size_t>{0, 1});
  CHECK(skyline(std::vector<Triple>{}).empty());
  const std::vector<Triple> bad{{0, std::nan(""), 0}};
  CHECK_THROWS_AS(skyline(bad), DomainError);
}

TEST_CASE("skyline matches the quadratic oracle on random inputs") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    // Small integer coordinates force many ties and duplicates.
    std::uniform_int_distribution<int> coord(0, trial < 10 ? 6 : 1000);
    const std::size_t n = trial == 19 ? 10'000 : 50 + 40 * static_cast<std::size_t>(trial);
    std::vector<Triple> pts(n);
    for (auto& p : pts) p = {double(coord(rng)), double(coord(rng)), double(coord(rng))};
    const auto fast = skyline(pts);
    CHECK(fast == brute_skyline(pts));
    for (auto i : fast)
      for (auto j : fast) CHECK_FALSE(dominates(pts[i], pts[j]));
  }
}

TEST_CASE("bucket curves") {
  FrontierResult fr;
  auto add = [&](double e, double a, double c) {
    FrontierPoint p;
    p.performance = {e, a, c};
    fr.points.push_back(p);
  };
  add(0.30, 0.00, 1.0);
  add(0.20, 0.02, 1.5);
  add(0.10, 0.40, 1.9);
  add(0.05, 0.60, 2.0);   // lands in the second bucket
  add(0.01, 0.90, 3.0);   // equal to the last edge: outside
  add(0.50, 0.00, 0.5);   // below the first edge: outside
  const auto b = bucket_curves(fr, {1.0, 2.0, 3.0}, 0.05);
  REQUIRE(b.size() == 2);
  CHECK(b[0].members == std::vector<std::size_t>{0, 1, 2});
  CHECK(b[1].members == std::vector<std::size_t>{3});
  REQUIRE(b[0].curve.size() == 2);
  CHECK(b[0].curve[0].bin == 0);
  CHECK(b[0].curve[0].count == 2);
  CHECK(b[0].curve[0].error == doctest::Approx(0.25));
  CHECK(b[0].curve[0].abstention == doctest::Approx(0.01));
  CHECK(b[0].curve[1].bin == 8);
  CHECK(b[1].curve[0].bin == 12);
  CHECK_THROWS_AS(bucket_curves(fr, {1.0}), ConfigError);
  CHECK_THROWS_AS(bucket_curves(fr, {2.0, 1.0}), ConfigError);
  CHECK_THROWS(bucket_curves(fr, {1.0, 2.0}, 0.0));
}

TEST_CASE("full abstention falls in the last sub-bin") {
  const std::vector<PerformancePoint> pts{{0.0, 1.0, 1.0}, {0.0, 0.97, 1.0}};
  const auto c = binned_curve(pts, 0.05);
  REQUIRE(c.size() == 1);
  CHECK(c[0].bin == 19);
  CHECK(c[0].count == 2);
  CHECK(c[0].abstention_upper == 1.0);
}

TEST_CASE("single-model baseline") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.05);
  const auto base = single_model_baseline(f.ds, f.members[2], g.thresholds[2], ErrorMode::plugin);
  REQUIRE(base.points.size() == g.thresholds[2].size());
  CHECK(base.points.front().performance.abstention == 0.0);
  CHECK(base.points.back().performance.abstention == 1.0);
  CHECK(base.points.back().performance.error == 0.0);
  for (std::size_t i = 1; i < base.points.size(); ++i) {
    CHECK(base.points[i].performance.abstention >= base.points[i - 1].performance.abstention);
    CHECK(base.points[i].performance.expected_cost == base.points[0].performance.expected_cost);
    // Informative p_hat: more abstention strictly lowers the plug-in error.
    if (base.points[i].performance.abstention > base.points[i - 1].performance.abstention)
      CHECK(base.points[i].performance.error < base.points[i - 1].performance.error);
  }
  // A one-member frontier is the skyline of the same curve.
  const auto fr = enumerate_frontier(f.ds, {f.members[2]}, build_grid(f.ds, {f.members[2]}, 0.05));
  std::vector<Triple> pts;
  for (const auto& p : base.points) pts.push_back(triple(p.performance));
  std::set<Triple> expected;
  for (auto i : skyline(pts)) expected.insert(pts[i]);
  std::set<Triple> got;
  for (const auto& p : fr.points) got.insert(triple(p.performance));
  CHECK(got == expected);
}

TEST_CASE("dominance fraction") {
  BaselineCurve base;
  base.points = {{0.1, {0.30, 0.00, 1.0}}, {0.5, {0.20, 0.22, 1.0}}, {0.9, {0.10, 0.51, 1.0}}};
  std::vector<CurvePoint> curve{{0, 0, 0.05, 0.01, 0.25, 1}, {4, 0.2, 0.25, 0.21, 0.21, 1}};
  CHECK(dominance_fraction(curve, base) == doctest::Approx(1.0 / 3.0));
  curve.push_back({10, 0.5, 0.55, 0.52, 0.10, 1});
  CHECK(dominance_fraction(curve, base) == doctest::Approx(2.0 / 3.0));
  curve[1].error = 0.2;
  CHECK(dominance_fraction(curve, base) == 1.0);
}

TEST_CASE("early-abstention ablation") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.1);
  AblationOptions opt;
  opt.cost_ceiling = 2.0;
  const auto rep = ablate_early_abstention(f.ds, f.members, g, opt);
  CHECK(rep.matched.size() == rep.constrained.points.size());
  for (const auto& m : rep.matched) {
    CHECK(m.cost_early <= m.cost_constrained);
    CHECK(std::isfinite(m.cost_early));
  }
  CHECK(rep.mean_cost_improvement >= 0.0);
  CHECK(rep.mean_cost_improvement < 1.0);
  CHECK(rep.ceiling.size() == 21);
  CHECK(rep.ceiling_feasible);
  for (const auto& row : rep.ceiling) {
    if (row.error_constrained) {
      REQUIRE(row.error_early.has_value());
      CHECK(*row.error_early <= *row.error_constrained);
    }
  }
  // Monotone in the target: more allowed abstention never hurts.
  for (std::size_t i = 1; i < rep.ceiling.size(); ++i)
    if (rep.ceiling[i - 1].error_early) CHECK(*rep.ceiling[i].error_early <= *rep.ceiling[i - 1].error_early);

  opt.cost_ceiling = 0.0;
  const auto none = ablate_early_abstention(f.ds, f.members, g, opt);
  CHECK_FALSE(none.ceiling_feasible);
  for (const auto& row : none.ceiling) CHECK_FALSE(row.error_early.has_value());
  CHECK_THROWS_AS(ablate_early_abstention(f.ds, {f.members[0]}, build_grid(f.ds, {f.members[0]}, 0.1), opt),
                  ConfigError);
}

TEST_CASE("csv writers") {
  Fixture f;
  const auto g = build_grid(f.ds, f.members, 0.5);
  const auto fr = enumerate_frontier(f.ds, f.members, g);
  std::ostringstream out;
  write_frontier_csv(out, fr);
  const std::string s = out.str();
  CHECK(s.rfind("r_1,r_2,r_3,a_1,a_2,error,abstention,cost\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) == fr.points.size() + 1);
  std::ostringstream bl;
  write_baselines_csv(bl, {single_model_baseline(f.ds, f.members[0], g.thresholds[0], ErrorMode::plugin)});
  CHECK(bl.str().rfind("model_id,threshold,cost,abstention,error\n", 0) == 0);
}
