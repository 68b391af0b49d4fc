#include "hcma/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

namespace {

using json = nlohmann::json;

// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct Features {
  std::vector<double> t;
  std::vector<double> y;
};

Features make_features(std::span<const LabeledScore> pairs, TransformKind transform) {
  Features f;
  f.t.reserve(pairs.size());
  f.y.reserve(pairs.size());
  for (const auto& s : pairs) {
    f.t.push_back(apply_transform(transform, s.raw_prob));
    f.y.push_back(s.correct ? 1.0 : 0.0);
  }
  return f;
}

double objective(const Features& f, double w, double b, double lambda) {
  double sum = 0.0;
  for (std::size_t i = 0; i < f.t.size(); ++i) {
    const double z = w * f.t[i] + b;
    sum += f.y[i] > 0.5 ? softplus(-z) : softplus(z);
  }
  return sum / static_cast<double>(f.t.size()) + 0.5 * lambda * (w * w + b * b);
}

struct Derivatives {
  double gw = 0, gb = 0;
  double hww = 0, hwb = 0, hbb = 0;
};

Derivatives derivatives(const Features& f, double w, double b, double lambda) {
  Derivatives d;
  for (std::size_t i = 0; i < f.t.size(); ++i) {
    const double t = f.t[i];
    const double p = sigmoid(w * t + b);
    const double r = p - f.y[i];
    const double v = p * (1.0 - p);
    d.gw += r * t;
    d.gb += r;
    d.hww += v * t * t;
    d.hwb += v * t;
    d.hbb += v;
  }
  const double inv_n = 1.0 / static_cast<double>(f.t.size());
  d.gw = d.gw * inv_n + lambda * w;
  d.gb = d.gb * inv_n + lambda * b;
  d.hww = d.hww * inv_n + lambda;
  d.hwb = d.hwb * inv_n;
  d.hbb = d.hbb * inv_n + lambda;
  return d;
}

}  // namespace

double Calibrator::predict(double raw_prob) const {
  if (!fitted()) throw StateError("calibrator for '" + model_id + "' is not fitted");
  // Large transformed scores saturate the sigmoid to exactly 1.0 in double.
  return std::clamp(sigmoid(weight * apply_transform(transform, raw_prob) + intercept), kProbabilityClamp,
                    1.0 - kProbabilityClamp);
}

Calibrator fit_platt(std::span<const LabeledScore> pairs, TransformKind transform, double l2_lambda) {
  if (pairs.empty()) throw DomainError("fit_platt: no training pairs");
  if (pairs.size() < 2) throw DomainError("fit_platt: at least 2 training pairs are required");
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) throw DomainError("fit_platt: l2_lambda must be >= 0");
  const bool first = pairs.front().correct;
  const bool all_same = std::all_of(pairs.begin(), pairs.end(), [&](const auto& s) { return s.correct == first; });
  if (all_same && l2_lambda == 0.0)
    throw ConvergenceError("fit_platt: all labels identical and l2_lambda == 0; the likelihood has no maximizer");

  const Features f = make_features(pairs, transform);
  double w = 0.0, b = 0.0;
  double current = objective(f, w, b, l2_lambda);
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-10;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Derivatives d = derivatives(f, w, b, l2_lambda);
    const double det = d.hww * d.hbb - d.hwb * d.hwb;
    if (!(det > 0.0) || !std::isfinite(det))
      throw ConvergenceError("fit_platt: singular Hessian (constant feature or separable data without penalty)");
    const double step_w = (d.hbb * d.gw - d.hwb * d.gb) / det;
    const double step_b = (d.hww * d.gb - d.hwb * d.gw) / det;

    double scale = 1.0;
    double nw = w - step_w, nb = b - step_b;
    double next = objective(f, nw, nb, l2_lambda);
    while (next > current && scale > 1e-10) {
      scale *= 0.5;
      nw = w - scale * step_w;
      nb = b - scale * step_b;
      next = objective(f, nw, nb, l2_lambda);
    }
    const double change = std::max(std::abs(nw - w), std::abs(nb - b));
    w = nw;
    b = nb;
    current = next;
    if (change < kTolerance) {
      if (!std::isfinite(w) || !std::isfinite(b)) break;
      return Calibrator{"", transform, w, b, l2_lambda, pairs.size()};
    }
  }
  throw ConvergenceError("fit_platt: no convergence after 100 iterations");
}

std::array<double, 2> platt_gradient(std::span<const LabeledScore> pairs, const Calibrator& cal) {
  if (pairs.empty()) throw DomainError("platt_gradient: no pairs");
  const Features f = make_features(pairs, cal.transform);
  const Derivatives d = derivatives(f, cal.weight, cal.intercept, cal.l2_lambda);
  return {d.gw, d.gb};
}

double weight_standard_error(std::span<const LabeledScore> pairs, const Calibrator& cal) {
  if (pairs.empty()) throw DomainError("weight_standard_error: no pairs");
  const Features f = make_features(pairs, cal.transform);
  // Derivatives are per-sample means; the information matrix is n times that.
  const Derivatives d = derivatives(f, cal.weight, cal.intercept, cal.l2_lambda);
  const double n = static_cast<double>(pairs.size());
  const double det = (d.hww * d.hbb - d.hwb * d.hwb) * n * n;
  if (!(det > 0.0)) throw ConvergenceError("weight_standard_error: singular information matrix");
  return std::sqrt(d.hbb * n / det);
}

double ece(std::span<const double> probs, const std::vector<bool>& labels, std::size_t n_bins) {
  if (probs.size() != labels.size()) throw DomainError("ece: probs and labels differ in length");
  if (n_bins == 0) throw DomainError("ece: n_bins must be at least 1");
  if (probs.empty()) throw DomainError("ece: empty input");
  std::vector<double> conf(n_bins, 0.0), hits(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("ece: probability outside [0,1]");
    const std::size_t bin = std::min(static_cast<std::size_t>(p * static_cast<double>(n_bins)), n_bins - 1);
    conf[bin] += p;
    hits[bin] += labels[i] ? 1.0 : 0.0;
    ++count[bin];
  }
  const double n = static_cast<double>(probs.size());
  double total = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    const double m = static_cast<double>(count[b]);
    total += (m / n) * std::abs(conf[b] / m - hits[b] / m);
  }
  return total;
}

ClassificationMetrics classification_metrics(std::span<const double> probs, const std::vector<bool>& labels,
                                             double threshold) {
  if (probs.size() != labels.size()) throw DomainError("classification_metrics: length mismatch");
  if (probs.empty()) throw DomainError("classification_metrics: empty input");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    if (predicted && labels[i]) ++tp;
    else if (predicted) ++fp;
    else if (labels[i]) ++fn;
    else ++tn;
  }
  ClassificationMetrics m;
  m.empty_positive = (tp + fp) == 0;
  m.precision = m.empty_positive ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(probs.size());
  return m;
}

std::vector<LabeledScore> labeled_scores(const Dataset& dataset, const std::string& model_id) {
  std::vector<LabeledScore> out;
  out.reserve(dataset.size());
  for (const auto& r : dataset.records()) {
    const auto& e = r.require(model_id);
    out.push_back({e.raw_prob, e.correct});
  }
  return out;
}

std::vector<std::size_t> training_sample(std::size_t n, std::size_t n_train, std::uint64_t seed, std::size_t rep) {
  if (n_train > n) throw DomainError("training_sample: n_train exceeds population");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, rep));
  for (std::size_t i = 0; i < n_train; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n_train);
  return idx;
}

CalibrationReport repeated_subsample_protocol(const Dataset& dataset, const std::string& model_id, TransformKind transform,
                                  const ProtocolOptions& options) {
  if (dataset.empty()) throw DomainError("repeated_subsample_protocol: empty dataset");
  if (options.n_train >= dataset.size())
    throw DomainError("repeated_subsample_protocol: n_train (" + std::to_string(options.n_train) +
                      ") must be smaller than the dataset (" + std::to_string(dataset.size()) + ")");
  if (options.n_train < 2) throw DomainError("repeated_subsample_protocol: n_train must be at least 2");
  if (options.n_reps == 0) throw DomainError("repeated_subsample_protocol: n_reps must be at least 1");
  const auto scores = labeled_scores(dataset, model_id);
  const std::size_t n = scores.size();

  CalibrationReport report;
  report.model_id = model_id;
  report.transform = transform;
  report.n_train = options.n_train;
  report.n_eval = n - options.n_train;
  report.repetitions.resize(options.n_reps);

  auto run_rep = [&](std::size_t rep) {
    const auto train_idx = training_sample(n, options.n_train, options.seed, rep);
    std::vector<char> in_train(n, 0);
    std::vector<LabeledScore> train;
    train.reserve(train_idx.size());
    for (auto i : train_idx) {
      in_train[i] = 1;
      train.push_back(scores[i]);
    }
    const Calibrator cal = fit_platt(train, transform, options.l2_lambda);
    std::vector<double> probs;
    std::vector<bool> labels;
    probs.reserve(n - train.size());
    labels.reserve(n - train.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (in_train[i]) continue;
      probs.push_back(cal.predict(scores[i].raw_prob));
      labels.push_back(scores[i].correct);
    }
    const auto m = classification_metrics(probs, labels, options.threshold);
    auto& out = report.repetitions[rep];
    out.precision = m.precision;
    out.f1 = m.f1;
    out.accuracy = m.accuracy;
    out.empty_positive = m.empty_positive;
    out.ece = ece(probs, labels, options.n_bins);
    out.weight = cal.weight;
    out.intercept = cal.intercept;
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_reps)));
  if (threads == 1) {
    for (std::size_t rep = 0; rep < options.n_reps; ++rep) run_rep(rep);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t rep = w; rep < options.n_reps; rep += threads) run_rep(rep);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  for (const auto& r : report.repetitions) {
    report.precision += r.precision;
    report.f1 += r.f1;
    report.accuracy += r.accuracy;
    report.ece += r.ece;
  }
  const double reps = static_cast<double>(options.n_reps);
  report.precision /= reps;
  report.f1 /= reps;
  report.accuracy /= reps;
  report.ece /= reps;
  return report;
}

Calibrator cross_model_fit(const Dataset& dataset, const std::string& source_model_id,
                           const std::string& target_model_id, TransformKind transform, double l2_lambda) {
  if (dataset.empty()) throw DomainError("cross_model_fit: empty dataset");
  std::vector<LabeledScore> pairs;
  pairs.reserve(dataset.size());
  for (const auto& r : dataset.records()) {
    const auto& src = r.require(source_model_id);
    const auto& dst = r.require(target_model_id);
    pairs.push_back({src.raw_prob, dst.correct});
  }
  Calibrator cal = fit_platt(pairs, transform, l2_lambda);
  cal.model_id = target_model_id;
  return cal;
}

nlohmann::ordered_json to_json(const Calibrator& cal) {
  nlohmann::ordered_json j;
  j["model_id"] = cal.model_id;
  j["transform"] = std::string(to_string(cal.transform));
  j["weight"] = cal.weight;
  j["intercept"] = cal.intercept;
  j["l2_lambda"] = cal.l2_lambda;
  j["fitted_on"] = cal.fitted_on;
  return j;
}

Calibrator calibrator_from_json(const json& j) {
  try {
    Calibrator cal;
    cal.model_id = j.value("model_id", std::string());
    cal.transform = parse_transform(j.at("transform").get<std::string>());
    cal.weight = j.at("weight").get<double>();
    cal.intercept = j.at("intercept").get<double>();
    cal.l2_lambda = j.value("l2_lambda", kDefaultL2Lambda);
    cal.fitted_on = j.at("fitted_on").get<std::size_t>();
    if (!std::isfinite(cal.weight) || !std::isfinite(cal.intercept))
      throw ValidationError("calibrator parameters must be finite");
    return cal;
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid calibrator document: ") + e.what());
  }
}

void save_calibrator(const std::filesystem::path& path, const Calibrator& cal) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write calibrator '" + path.string() + "'");
  out << to_json(cal).dump(2) << '\n';
}

Calibrator load_calibrator(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open calibrator '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("calibrator '" + path.string() + "': " + e.what());
  }
  return calibrator_from_json(j);
}

}  // namespace hcma
