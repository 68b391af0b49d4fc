#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hcma/records.hpp"
#include "hcma/transforms.hpp"

namespace hcma {

inline constexpr double kDefaultL2Lambda = 1e-4;
inline constexpr std::size_t kDefaultEceBins = 10;
inline constexpr double kDefaultDecisionThreshold = 0.5;

/// Platt scaling over a transformed probability:
///   p_hat = sigmoid(weight * transform(raw_prob) + intercept).
/// A calibrator with fitted_on == 0 is unfitted and refuses to predict.
struct Calibrator {
  std::string model_id;
  TransformKind transform = TransformKind::identity;
  double weight = 0.0;
  double intercept = 0.0;
  double l2_lambda = kDefaultL2Lambda;
  std::size_t fitted_on = 0;

  bool fitted() const { return fitted_on > 0; }
  /// Throws StateError when unfitted, DomainError when raw_prob is outside [0,1].
  double predict(double raw_prob) const;

  friend bool operator==(const Calibrator&, const Calibrator&) = default;
};

struct LabeledScore {
  double raw_prob = 0.0;
  bool correct = false;
};

/// Maximizes the L2-penalized mean Bernoulli log-likelihood
///   (1/n) sum log-lik(y | sigmoid(w t + b)) - (lambda/2)(w^2 + b^2)
/// with Newton/IRLS and step halving. Converged when the parameter step is
/// below 1e-10; 100 iterations without convergence is a ConvergenceError.
/// With lambda == 0, identical labels (separable data) are rejected up front.
Calibrator fit_platt(std::span<const LabeledScore> pairs, TransformKind transform,
                     double l2_lambda = kDefaultL2Lambda);

/// Asymptotic standard error of the fitted weight from the observed Fisher
/// information of the (sum) log-likelihood plus the penalty's curvature.
double weight_standard_error(std::span<const LabeledScore> pairs, const Calibrator& cal);

/// Gradient of the penalized objective at (weight, intercept); near zero at
/// a fitted solution.
std::array<double, 2> platt_gradient(std::span<const LabeledScore> pairs, const Calibrator& cal);

/// Equal-width bins on [0,1]; empty bins contribute nothing.
double ece(std::span<const double> probs, const std::vector<bool>& labels,
           std::size_t n_bins = kDefaultEceBins);

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool empty_positive = false;  ///< no prediction reached the threshold; precision set to 0
};

/// "Correct" is the positive class: a query is predicted correct iff p >= threshold.
ClassificationMetrics classification_metrics(std::span<const double> probs, const std::vector<bool>& labels,
                                             double threshold = kDefaultDecisionThreshold);

struct RepetitionMetrics {
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double ece = 0.0;
  bool empty_positive = false;
  double weight = 0.0;
  double intercept = 0.0;
};

struct CalibrationReport {
  std::string model_id;
  TransformKind transform = TransformKind::identity;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  double precision = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double ece = 0.0;
  std::vector<RepetitionMetrics> repetitions;
};

struct ProtocolOptions {
  std::size_t n_train = 50;
  std::size_t n_reps = 100;
  std::uint64_t seed = 0;
  double l2_lambda = kDefaultL2Lambda;
  std::size_t n_bins = kDefaultEceBins;
  double threshold = kDefaultDecisionThreshold;
  unsigned threads = 1;
};

/// Labeled scores of one model across the dataset, in record order.
std::vector<LabeledScore> labeled_scores(const Dataset& dataset, const std::string& model_id);

/// Indices of the training sample used by repetition `rep` (without
/// replacement, derived from (seed, rep) only).
std::vector<std::size_t> training_sample(std::size_t n, std::size_t n_train, std::uint64_t seed, std::size_t rep);

/// Repeated subsample protocol: per repetition, fit on n_train random records
/// and evaluate precision/F1/accuracy/ECE on the remaining ones. Repetitions
/// are independent and may run on several threads with identical results.
CalibrationReport repeated_subsample_protocol(const Dataset& dataset, const std::string& model_id, TransformKind transform,
                                  const ProtocolOptions& options = {});

/// Fits the target model's correctness on the source model's transformed
/// probability (shared-difficulty analysis across model sizes).
Calibrator cross_model_fit(const Dataset& dataset, const std::string& source_model_id,
                           const std::string& target_model_id, TransformKind transform,
                           double l2_lambda = kDefaultL2Lambda);

nlohmann::ordered_json to_json(const Calibrator& cal);
Calibrator calibrator_from_json(const nlohmann::json& j);
void save_calibrator(const std::filesystem::path& path, const Calibrator& cal);
Calibrator load_calibrator(const std::filesystem::path& path);

}  // namespace hcma
