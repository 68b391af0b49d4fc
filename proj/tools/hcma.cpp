// hcma: calibrate, simulate and search model chains; serve routing decisions.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hcma/calibration.hpp"
#include "hcma/chain.hpp"
#include "hcma/error.hpp"
#include "hcma/frontier.hpp"
#include "hcma/numeric.hpp"
#include "hcma/records.hpp"
#include "hcma/router.hpp"

#ifndef HCMA_VERSION
#define HCMA_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace hcma;

namespace {

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256 unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

/// Reproducibility record written next to every artifact. Everything except
/// "timestamps" is a function of the command line and the input bytes.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), started_(utc_now()) {
    t0_ = std::chrono::steady_clock::now();
  }
  void arg(const std::string& key, ojson value) { args_[key] = std::move(value); }
  void input(const std::string& key, const fs::path& path) {
    ojson o;
    o["path"] = path.string();
    o["sha256"] = sha256_file(path);
    inputs_[key] = std::move(o);
  }
  void seed(std::uint64_t s) { seed_ = s; }
  void output(const std::string& name) { outputs_.push_back(name); }

  void write(const fs::path& path) const {
    ojson m;
    m["command"] = command_;
    m["args"] = args_;
    m["inputs"] = inputs_;
    m["seed"] = seed_ ? ojson(*seed_) : ojson(nullptr);
    m["tool_version"] = HCMA_VERSION;
    m["outputs"] = outputs_;
    ojson ts;
    ts["started"] = started_;
    ts["finished"] = utc_now();
    ts["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    m["timestamps"] = std::move(ts);
    write_text(path, m.dump(2) + "\n");
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
  }

 private:
  std::string command_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
  ojson args_ = ojson::object();
  ojson inputs_ = ojson::object();
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> outputs_;
};

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
  return dir;
}

std::vector<ModelProfile> calibrated_members(const ChainConfig& chain) {
  auto members = chain.profiles();
  for (const auto& m : members)
    if (!m.calibrator || !m.calibrator->fitted())
      throw StateError("model '" + m.model_id + "' has no fitted calibrator in the config");
  return members;
}

// ---------------------------------------------------------------------------

struct Common {
  std::string dataset;
  std::string config;
  std::string transform = "msp";
  double resolution = kDefaultResolution;
  bool no_early_abstention = false;
  std::string error_mode = "plugin";
  std::string cost_kind = "dollars";
  std::uint64_t seed = 0;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
};

int run_generate(std::size_t n, const std::vector<double>& skills, double sharpness, double noise_sd,
                 const Common& c) {
  Manifest man("generate");
  std::vector<SyntheticModel> models;
  for (std::size_t i = 0; i < skills.size(); ++i)
    models.push_back(SyntheticModel{"m" + std::to_string(i + 1), skills[i], sharpness});
  const Dataset ds = generate_synthetic(n, models, noise_sd, c.seed);
  const fs::path out = c.out;
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  save_dataset(out, ds);
  man.arg("n", n);
  man.arg("skills", skills);
  man.arg("sharpness", sharpness);
  man.arg("noise_sd", noise_sd);
  man.seed(c.seed);
  man.output(out.filename().string());
  man.write(fs::path(out.string() + ".manifest.json"));
  return 0;
}

int run_calibrate(const std::string& model_id, std::size_t n_train, std::size_t n_reps, const Common& c) {
  Manifest man("calibrate");
  const Dataset ds = load_dataset(c.dataset);
  const TransformKind t = parse_transform(c.transform);
  ProtocolOptions opt;
  opt.n_train = n_train;
  opt.n_reps = n_reps;
  opt.seed = c.seed;
  opt.threads = c.threads;
  const CalibrationReport rep = repeated_subsample_protocol(ds, model_id, t, opt);

  // The shipped calibrator is the first repetition's fit, so it is exactly
  // reproducible from (dataset, seed).
  const auto scores = labeled_scores(ds, model_id);
  std::vector<LabeledScore> train;
  for (auto i : training_sample(scores.size(), n_train, c.seed, 0)) train.push_back(scores[i]);
  Calibrator cal = fit_platt(train, t, opt.l2_lambda);
  cal.model_id = model_id;

  const fs::path dir = ensure_dir(c.out);
  save_calibrator(dir / "calibrator.json", cal);
  std::ostringstream csv;
  csv << "rep,precision,f1,accuracy,ece,empty_positive,weight,intercept\n";
  for (std::size_t i = 0; i < rep.repetitions.size(); ++i) {
    const auto& r = rep.repetitions[i];
    csv << i << ',' << format_double(r.precision) << ',' << format_double(r.f1) << ',' << format_double(r.accuracy)
        << ',' << format_double(r.ece) << ',' << (r.empty_positive ? "true" : "false") << ','
        << format_double(r.weight) << ',' << format_double(r.intercept) << '\n';
  }
  Manifest::write_text(dir / "metrics.csv", csv.str());
  ojson summary;
  summary["model_id"] = model_id;
  summary["transform"] = std::string(to_string(t));
  summary["n_train"] = rep.n_train;
  summary["n_eval"] = rep.n_eval;
  summary["n_reps"] = n_reps;
  summary["precision"] = rep.precision;
  summary["f1"] = rep.f1;
  summary["accuracy"] = rep.accuracy;
  summary["ece"] = rep.ece;
  summary["calibrator"] = to_json(cal);
  Manifest::write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';

  man.arg("dataset", c.dataset);
  man.arg("model", model_id);
  man.arg("transform", std::string(to_string(t)));
  man.arg("n_train", n_train);
  man.arg("n_reps", n_reps);
  man.input("dataset", c.dataset);
  man.seed(c.seed);
  for (auto f : {"calibrator.json", "metrics.csv", "summary.json"}) man.output(f);
  man.write(dir / "manifest.json");
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_double(item));
  return v;
}

int run_simulate(const std::string& reject, const std::string& accept, const Common& c) {
  const Dataset ds = load_dataset(c.dataset);
  ChainConfig chain = load_chain_config(c.config);
  calibrated_members(chain);
  if (!reject.empty() || !accept.empty()) {
    std::vector<double> r, a;
    for (const auto& m : chain.members()) r.push_back(m.reject_threshold), a.push_back(m.accept_threshold);
    if (!reject.empty()) r = parse_list(reject);
    if (!accept.empty()) a = parse_list(accept);
    if (a.size() == chain.size() && accept.empty()) a.pop_back();
    chain = chain.with_thresholds(r, a);
  }
  const ErrorMode mode = parse_error_mode(c.error_mode);
  const CostAccounting acc = resolve_accounting(parse_cost_kind(c.cost_kind), ds, chain.model_ids());
  const PerformancePoint p = estimate_performance(chain, ds, mode, acc);
  ojson o;
  o["error"] = p.error;
  o["abstention"] = p.abstention;
  o["expected_cost"] = p.expected_cost;
  o["error_mode"] = std::string(to_string(mode));
  o["cost_accounting"] = std::string(to_string(acc));
  std::cout << o.dump(2) << '\n';
  return 0;
}

std::vector<double> default_edges(const FrontierResult& f) {
  if (f.points.empty()) return {0.0, 1.0};
  double lo = f.points.front().performance.expected_cost, hi = lo;
  for (const auto& p : f.points) {
    lo = std::min(lo, p.performance.expected_cost);
    hi = std::max(hi, p.performance.expected_cost);
  }
  const double top = std::nextafter(hi, std::numeric_limits<double>::infinity());
  if (!(hi > lo)) return {lo, top};
  std::vector<double> e;
  for (int i = 0; i < 10; ++i) e.push_back(lo + (hi - lo) * i / 10.0);
  e.push_back(top);
  return e;
}

int run_frontier(const std::string& edges_arg, double abstention_bin, const Common& c) {
  Manifest man("frontier");
  const Dataset ds = load_dataset(c.dataset);
  const ChainConfig chain = load_chain_config(c.config);
  const auto members = calibrated_members(chain);
  const QuantileGrid grid = build_grid(ds, members, c.resolution);
  FrontierOptions opt;
  opt.early_abstention = !c.no_early_abstention;
  opt.error_mode = parse_error_mode(c.error_mode);
  opt.cost_kind = parse_cost_kind(c.cost_kind);
  opt.threads = c.threads;
  const FrontierResult f = enumerate_frontier(ds, members, grid, opt);
  const std::vector<double> edges = edges_arg.empty() ? default_edges(f) : parse_list(edges_arg);
  const auto buckets = bucket_curves(f, edges, abstention_bin);
  std::vector<BaselineCurve> baselines;
  for (std::size_t j = 0; j < members.size(); ++j)
    baselines.push_back(single_model_baseline(ds, members[j], grid.thresholds[j], opt.error_mode, f.accounting));

  const fs::path dir = ensure_dir(c.out);
  std::ostringstream s1, s2, s3;
  write_frontier_csv(s1, f);
  write_curves_csv(s2, buckets);
  write_baselines_csv(s3, baselines);
  Manifest::write_text(dir / "frontier.csv", s1.str());
  Manifest::write_text(dir / "curves.csv", s2.str());
  Manifest::write_text(dir / "baselines.csv", s3.str());

  ojson summary;
  summary["models"] = f.model_ids;
  summary["resolution"] = c.resolution;
  ojson sizes = ojson::array();
  for (const auto& t : grid.thresholds) sizes.push_back(t.size());
  summary["grid_points"] = std::move(sizes);
  summary["early_abstention"] = f.early_abstention;
  summary["error_mode"] = std::string(to_string(f.error_mode));
  summary["cost_accounting"] = std::string(to_string(f.accounting));
  summary["configs_enumerated"] = f.configs_enumerated;
  summary["frontier_size"] = f.points.size();
  summary["dominated_count"] = f.dominated_count;
  summary["bucket_edges"] = edges;
  ojson dom = ojson::array();
  for (const auto& b : baselines) {
    ojson row;
    row["model_id"] = b.model_id;
    double best = 0.0;
    ojson best_bucket = nullptr;
    for (const auto& bk : buckets) {
      const double d = dominance_fraction(bk.curve, b, abstention_bin);
      if (d > best || best_bucket.is_null()) {
        best = d;
        best_bucket = ojson::array({bk.lower, bk.upper});
      }
    }
    row["best_bucket"] = best_bucket;
    row["dominance_fraction"] = best;
    dom.push_back(std::move(row));
  }
  summary["baseline_dominance"] = std::move(dom);
  Manifest::write_text(dir / "summary.json", summary.dump(2) + "\n");
  std::cerr << f.configs_enumerated << " configurations, " << f.points.size() << " on the frontier ("
            << f.wall_seconds << " s)\n";

  man.arg("dataset", c.dataset);
  man.arg("config", c.config);
  man.arg("resolution", c.resolution);
  man.arg("no_early_abstention", c.no_early_abstention);
  man.arg("error_mode", c.error_mode);
  man.arg("cost_kind", c.cost_kind);
  man.arg("bucket_edges", edges);
  man.arg("abstention_bin", abstention_bin);
  man.input("dataset", c.dataset);
  man.input("config", c.config);
  for (auto f2 : {"frontier.csv", "curves.csv", "baselines.csv", "summary.json"}) man.output(f2);
  man.write(dir / "manifest.json");
  return 0;
}

int run_delegation_gain(double quantile, const Common& c) {
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw ConfigError("--quantile must be in [0, 1]");
  const Dataset ds = load_dataset(c.dataset);
  const ChainConfig chain = load_chain_config(c.config);
  const auto members = calibrated_members(chain);
  if (members.size() < 2) throw ConfigError("delegation-gain needs a chain with at least two members");
  const ModelProfile& small = members[0];
  const ModelProfile& large = members[1];
  std::vector<double> p;
  for (const auto& r : ds.records()) p.push_back(small.p_hat(r.require(small.model_id).raw_prob));
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(std::floor(quantile * static_cast<double>(sorted.size() - 1)));
  const double threshold = sorted[idx];
  std::vector<bool> d, es, el;
  std::size_t delegated = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    d.push_back(p[i] < threshold);
    delegated += d.back();
    es.push_back(!ds[i].require(small.model_id).correct);
    el.push_back(!ds[i].require(large.model_id).correct);
  }
  const DelegationGain g = delegation_gain(d, es, el);
  ojson o;
  o["small_model"] = small.model_id;
  o["large_model"] = large.model_id;
  o["quantile"] = quantile;
  o["threshold"] = threshold;
  o["delegation_rate"] = static_cast<double>(delegated) / static_cast<double>(ds.size());
  o["delta_error"] = g.delta_error;
  o["cov_small"] = g.cov_small;
  o["cov_large"] = g.cov_large;
  std::cout << o.dump(2) << '\n';
  return 0;
}

int run_ablate(double ceiling, const std::string& targets, const Common& c) {
  Manifest man("ablate");
  const Dataset ds = load_dataset(c.dataset);
  const ChainConfig chain = load_chain_config(c.config);
  const auto members = calibrated_members(chain);
  const QuantileGrid grid = build_grid(ds, members, c.resolution);
  AblationOptions opt;
  opt.cost_ceiling = ceiling;
  opt.cost_kind = parse_cost_kind(c.cost_kind);
  opt.error_mode = parse_error_mode(c.error_mode);
  opt.threads = c.threads;
  if (!targets.empty()) opt.abstention_targets = parse_list(targets);
  const AblationReport rep = ablate_early_abstention(ds, members, grid, opt);

  const fs::path dir = ensure_dir(c.out);
  std::ostringstream matched, ceil_csv;
  matched << "error,abstention,cost_constrained,cost_early\n";
  for (const auto& m : rep.matched)
    matched << format_double(m.error) << ',' << format_double(m.abstention) << ',' << format_double(m.cost_constrained)
            << ',' << format_double(m.cost_early) << '\n';
  ceil_csv << "abstention_target,error_early,error_constrained\n";
  auto opt_str = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rep.ceiling)
    ceil_csv << format_double(r.abstention_target) << ',' << opt_str(r.error_early) << ','
             << opt_str(r.error_constrained) << '\n';
  Manifest::write_text(dir / "matched.csv", matched.str());
  Manifest::write_text(dir / "ceiling.csv", ceil_csv.str());
  ojson s;
  s["models"] = rep.early.model_ids;
  s["cost_accounting"] = std::string(to_string(rep.early.accounting));
  s["cost_ceiling"] = ceiling;
  s["ceiling_feasible"] = rep.ceiling_feasible;
  s["frontier_size_early"] = rep.early.points.size();
  s["frontier_size_constrained"] = rep.constrained.points.size();
  s["mean_cost_improvement"] = rep.mean_cost_improvement;
  Manifest::write_text(dir / "summary.json", s.dump(2) + "\n");
  std::cout << s.dump(2) << '\n';

  man.arg("dataset", c.dataset);
  man.arg("config", c.config);
  man.arg("resolution", c.resolution);
  man.arg("error_mode", c.error_mode);
  man.arg("cost_kind", c.cost_kind);
  man.arg("cost_ceiling", ceiling);
  man.input("dataset", c.dataset);
  man.input("config", c.config);
  for (auto f : {"matched.csv", "ceiling.csv", "summary.json"}) man.output(f);
  man.write(dir / "manifest.json");
  return 0;
}

int run_serve(const std::string& bind, const std::string& replay, const Common& c) {
  RouterConfig cfg = load_router_config(c.config);
  std::shared_ptr<Backend> backend;
  CostAccounting acc = CostAccounting::tokens;
  if (!replay.empty()) {
    auto rb = std::make_shared<ReplayBackend>(load_dataset(replay));
    acc = resolve_accounting(parse_cost_kind(c.cost_kind), rb->records(), cfg.chain.model_ids());
    backend = rb;
  } else {
    if (parse_cost_kind(c.cost_kind) == CostKind::latency) acc = CostAccounting::latency;
    backend = std::make_shared<OpenAIChatBackend>(cfg.endpoints, cfg.missing_choice);
  }
  if (cfg.accounting) acc = *cfg.accounting;
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("--bind must be host:port");
  const std::string host = bind.substr(0, colon);
  const int port = static_cast<int>(parse_int(bind.substr(colon + 1)));
  Router router(std::move(cfg), backend, acc);
  RouterService service(router);
  const int bound = service.bind(host, port);
  std::cerr << "listening on " << host << ':' << bound << '\n';
  service.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrated model chains with abstention: calibration, simulation, frontier search, routing"};
  app.set_version_flag("--version", HCMA_VERSION);
  app.require_subcommand(1);
  Common c;

  auto add_dataset = [&](CLI::App* s) {
    s->add_option("--dataset", c.dataset, "Records file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
  };
  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", c.config, "Chain config JSON")->required()->check(CLI::ExistingFile);
  };
  auto add_modes = [&](CLI::App* s) {
    s->add_option("--error-mode", c.error_mode, "plugin or empirical")
        ->check(CLI::IsMember({"plugin", "empirical"}))
        ->capture_default_str();
    s->add_option("--cost-kind", c.cost_kind, "dollars or latency")
        ->check(CLI::IsMember({"dollars", "latency"}))
        ->capture_default_str();
  };
  auto add_threads = [&](CLI::App* s) {
    s->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  };
  auto add_resolution = [&](CLI::App* s) {
    s->add_option("--resolution", c.resolution, "Quantile grid step")->capture_default_str();
  };

  std::size_t n = 1530;
  std::vector<double> skills{0.5, 1.5, 2.5};
  double sharpness = 3.0, noise_sd = kDefaultSyntheticNoiseSd;
  auto* gen = app.add_subcommand("generate", "Write a synthetic records file");
  gen->add_option("--n", n, "Number of queries")->capture_default_str();
  gen->add_option("--skills", skills, "Per-model skill (models m1..mk)")->delimiter(',')->capture_default_str();
  gen->add_option("--sharpness", sharpness, "Raw-probability sharpness")->capture_default_str();
  gen->add_option("--noise-sd", noise_sd, "Raw-probability noise")->capture_default_str();
  gen->add_option("--seed", c.seed)->capture_default_str();
  gen->add_option("--out", c.out, "Output file (.jsonl or .csv)")->required();

  std::string model_id;
  std::size_t n_train = 50, n_reps = 100;
  auto* cal = app.add_subcommand("calibrate", "Fit a calibrator and run the repeated-subsample evaluation");
  add_dataset(cal);
  cal->add_option("--model", model_id, "Model to calibrate")->required();
  cal->add_option("--transform", c.transform, "raw, msp or ptrue")
      ->check(CLI::IsMember({"raw", "msp", "ptrue"}))
      ->capture_default_str();
  cal->add_option("--n-train", n_train)->capture_default_str();
  cal->add_option("--n-reps", n_reps)->capture_default_str();
  cal->add_option("--seed", c.seed)->capture_default_str();
  add_threads(cal);
  cal->add_option("--out", c.out, "Output directory")->required();

  std::string reject, accept;
  auto* sim = app.add_subcommand("simulate", "Evaluate one chain configuration");
  add_dataset(sim);
  add_config(sim);
  add_modes(sim);
  sim->add_option("--reject", reject, "Override reject thresholds r_1..r_k (comma separated)");
  sim->add_option("--accept", accept, "Override accept thresholds a_1..a_{k-1} (comma separated)");

  std::string edges;
  double abstention_bin = kDefaultAbstentionBin;
  auto* fr = app.add_subcommand("frontier", "Grid search and Pareto frontier");
  add_dataset(fr);
  add_config(fr);
  add_resolution(fr);
  fr->add_flag("--no-early-abstention", c.no_early_abstention, "Only the last model may abstain");
  add_modes(fr);
  add_threads(fr);
  fr->add_option("--bucket-edges", edges, "Cost bucket edges (comma separated; default: 10 even buckets)");
  fr->add_option("--abstention-bin", abstention_bin)->capture_default_str();
  fr->add_option("--out", c.out, "Output directory")->required();

  double quantile = 0.5;
  auto* dg = app.add_subcommand("delegation-gain", "Error change from delegating on model 1's confidence");
  add_dataset(dg);
  add_config(dg);
  dg->add_option("--quantile", quantile, "Delegate when p_hat is below this quantile of model 1's p_hat")
      ->capture_default_str();

  double ceiling = 0.0;
  std::string targets;
  auto* ab = app.add_subcommand("ablate", "Early abstention versus last-model-only abstention");
  add_dataset(ab);
  add_config(ab);
  add_resolution(ab);
  add_modes(ab);
  add_threads(ab);
  ab->add_option("--cost-ceiling", ceiling, "Cost ceiling for the error comparison")->required();
  ab->add_option("--abstention-targets", targets, "Comma separated (default 0, 0.05, ..., 1)");
  ab->add_option("--out", c.out, "Output directory")->required();

  std::string bind = "127.0.0.1:8080", replay;
  auto* sv = app.add_subcommand("serve", "Run the routing service");
  add_config(sv);
  sv->add_option("--bind", bind, "host:port")->capture_default_str();
  sv->add_option("--replay", replay, "Serve recorded raw probabilities instead of calling endpoints")
      ->check(CLI::ExistingFile);
  sv->add_option("--cost-kind", c.cost_kind)->check(CLI::IsMember({"dollars", "latency"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return run_generate(n, skills, sharpness, noise_sd, c);
    if (*cal) return run_calibrate(model_id, n_train, n_reps, c);
    if (*sim) return run_simulate(reject, accept, c);
    if (*fr) return run_frontier(edges, abstention_bin, c);
    if (*dg) return run_delegation_gain(quantile, c);
    if (*ab) return run_ablate(ceiling, targets, c);
    if (*sv) return run_serve(bind, replay, c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
