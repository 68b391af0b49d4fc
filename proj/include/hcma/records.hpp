#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hcma {

/// One model's observation on one query.
struct ModelEntry {
  std::string model_id;
  double raw_prob = 0.0;  ///< max-softmax (multiple choice) or P("Y") (verification)
  bool correct = false;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::optional<double> latency_ms;

  friend bool operator==(const ModelEntry&, const ModelEntry&) = default;
};

/// All model observations for a single query.
struct QueryRecord {
  std::string query_id;
  std::vector<ModelEntry> entries;

  /// Entry for `model_id`, or nullptr. Chains are short, so this is a scan.
  const ModelEntry* find(std::string_view model_id) const;
  /// Same as find but throws ValidationError when absent.
  const ModelEntry& require(std::string_view model_id) const;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

/// Immutable collection of query records. Construction validates that query
/// ids are unique, every raw_prob lies in [0,1] and token counts are
/// nonnegative; after that the object is safe to share across threads.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> model_ids, std::vector<QueryRecord> records);

  const std::vector<QueryRecord>& records() const { return records_; }
  const std::vector<std::string>& model_ids() const { return model_ids_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const QueryRecord& operator[](std::size_t i) const { return records_[i]; }

  bool has_model(std::string_view model_id) const;
  /// Index of the record with this query id, if any.
  std::optional<std::size_t> find_query(std::string_view query_id) const;

  /// Throws ValidationError unless every record carries every listed model.
  void require_models(const std::vector<std::string>& model_ids) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.model_ids_ == b.model_ids_ && a.records_ == b.records_;
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<QueryRecord> records_;
};

enum class DatasetFormat { jsonl, csv };

/// jsonl for ".jsonl"/".json", csv for ".csv"; anything else is a ConfigError.
DatasetFormat format_from_path(const std::filesystem::path& path);

/// Parses one row per (query, model) pair and groups rows by query_id in
/// order of first appearance. Errors carry 1-based line numbers.
Dataset read_dataset(std::istream& in, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const Dataset& dataset, DatasetFormat format);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset, DatasetFormat format);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic data with a shared latent difficulty per query.

struct SyntheticModel {
  std::string model_id;
  double skill = 0.0;
  double sharpness = 3.0;  ///< > 1 means raw probabilities are overconfident
};

/// skill {0.5, 1.5, 2.5}, sharpness 3, ids m1..m3.
std::vector<SyntheticModel> default_synthetic_models();
inline constexpr double kDefaultSyntheticNoiseSd = 0.5;

/// Per query: difficulty d ~ N(0,1); per model: correct ~ Bernoulli(
/// sigmoid(skill - d)) and raw_prob = sigmoid(sharpness * (skill - d) + eps),
/// eps ~ N(0, noise_sd). Token counts are zero and latency is absent, so the
/// flat per-query cost accounting applies to generated data.
Dataset generate_synthetic(std::size_t n, const std::vector<SyntheticModel>& models,
                           double noise_sd, std::uint64_t seed);

}  // namespace hcma
