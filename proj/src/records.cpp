#include "hcma/records.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hcma/error.hpp"
#include "hcma/numeric.hpp"

namespace hcma {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

void validate_entry(const ModelEntry& e, const std::string& where) {
  if (!(e.raw_prob >= 0.0 && e.raw_prob <= 1.0))
    throw ValidationError(where + "raw_prob " + format_double(e.raw_prob) + " outside [0,1]");
  if (e.tokens_in < 0 || e.tokens_out < 0) throw ValidationError(where + "negative token count");
  if (e.latency_ms && !(*e.latency_ms >= 0.0 && std::isfinite(*e.latency_ms)))
    throw ValidationError(where + "latency_ms must be a nonnegative finite number");
}

// Accumulates rows into records, keyed by query id in order of first sight.
class Grouper {
 public:
  void add(std::string query_id, ModelEntry entry, std::size_t line) {
    if (query_id.empty()) throw ValidationError(at_line(line) + "empty query_id");
    if (entry.model_id.empty()) throw ValidationError(at_line(line) + "empty model_id");
    validate_entry(entry, at_line(line));
    if (std::find(model_ids_.begin(), model_ids_.end(), entry.model_id) == model_ids_.end())
      model_ids_.push_back(entry.model_id);
    auto [it, inserted] = index_.try_emplace(query_id, records_.size());
    if (inserted) records_.push_back(QueryRecord{std::move(query_id), {}});
    QueryRecord& rec = records_[it->second];
    if (rec.find(entry.model_id) != nullptr)
      throw ValidationError(at_line(line) + "duplicate (query_id, model_id) pair (" + rec.query_id +
                            ", " + entry.model_id + ")");
    rec.entries.push_back(std::move(entry));
  }

  Dataset finish() {
    if (records_.empty()) throw ValidationError("empty dataset");
    return Dataset(std::move(model_ids_), std::move(records_));
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<QueryRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
T required(const json& row, const char* key, std::size_t line) {
  auto it = row.find(key);
  if (it == row.end() || it->is_null())
    throw ValidationError(at_line(line) + "missing required field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(at_line(line) + "field '" + key + "' has the wrong type");
  }
}

void read_jsonl(std::istream& in, Grouper& grouper) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(at_line(line) + "invalid JSON (" + e.what() + ")");
    }
    if (!row.is_object()) throw ParseError(at_line(line) + "row is not a JSON object");
    ModelEntry entry;
    auto qid = required<std::string>(row, "query_id", line);
    entry.model_id = required<std::string>(row, "model_id", line);
    entry.raw_prob = required<double>(row, "raw_prob", line);
    entry.correct = required<bool>(row, "correct", line);
    entry.tokens_in = required<std::int64_t>(row, "tokens_in", line);
    entry.tokens_out = required<std::int64_t>(row, "tokens_out", line);
    if (auto it = row.find("latency_ms"); it != row.end() && !it->is_null()) {
      if (!it->is_number()) throw ValidationError(at_line(line) + "field 'latency_ms' has the wrong type");
      entry.latency_ms = it->get<double>();
    }
    grouper.add(std::move(qid), std::move(entry), line);
  }
}

std::vector<std::string> split_csv(const std::string& text, std::size_t line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError(at_line(line) + "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

bool parse_bool(std::string_view s, std::size_t line) {
  if (s == "true" || s == "1" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "0" || s == "False" || s == "FALSE") return false;
  throw ParseError(at_line(line) + "invalid boolean '" + std::string(s) + "'");
}

void read_csv(std::istream& in, Grouper& grouper) {
  static constexpr const char* kColumns[] = {"query_id", "model_id",   "raw_prob",  "correct",
                                             "tokens_in", "tokens_out", "latency_ms"};
  std::string text;
  std::size_t line = 0;
  std::unordered_map<std::string, std::size_t> col;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv(text, line);
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (std::size_t i = 0; i < 6; ++i)
        if (!col.count(kColumns[i]))
          throw ValidationError(at_line(line) + "missing required column '" + kColumns[i] + "'");
      continue;
    }
    auto field = [&](const char* name) -> const std::string& {
      const std::size_t i = col.at(name);
      if (i >= fields.size() || fields[i].empty())
        throw ValidationError(at_line(line) + "missing required field '" + name + "'");
      return fields[i];
    };
    try {
      ModelEntry entry;
      std::string qid = field("query_id");
      entry.model_id = field("model_id");
      entry.raw_prob = parse_double(field("raw_prob"));
      entry.correct = parse_bool(field("correct"), line);
      entry.tokens_in = parse_int(field("tokens_in"));
      entry.tokens_out = parse_int(field("tokens_out"));
      if (auto it = col.find("latency_ms"); it != col.end() && it->second < fields.size() &&
                                            !fields[it->second].empty() && fields[it->second] != "null")
        entry.latency_ms = parse_double(fields[it->second]);
      grouper.add(std::move(qid), std::move(entry), line);
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw ParseError(at_line(line) + msg);
    }
  }
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

const ModelEntry* QueryRecord::find(std::string_view model_id) const {
  for (const auto& e : entries)
    if (e.model_id == model_id) return &e;
  return nullptr;
}

const ModelEntry& QueryRecord::require(std::string_view model_id) const {
  if (const auto* e = find(model_id)) return *e;
  throw ValidationError("query '" + query_id + "' has no entry for model '" + std::string(model_id) + "'");
}

Dataset::Dataset(std::vector<std::string> model_ids, std::vector<QueryRecord> records)
    : model_ids_(std::move(model_ids)), records_(std::move(records)) {
  std::unordered_set<std::string> seen;
  for (const auto& r : records_) {
    if (!seen.insert(r.query_id).second) throw ValidationError("duplicate query_id '" + r.query_id + "'");
    for (const auto& e : r.entries) {
      validate_entry(e, "query '" + r.query_id + "': ");
      if (!has_model(e.model_id))
        throw ValidationError("query '" + r.query_id + "' references unknown model '" + e.model_id + "'");
    }
  }
}

bool Dataset::has_model(std::string_view model_id) const {
  return std::find(model_ids_.begin(), model_ids_.end(), model_id) != model_ids_.end();
}

std::optional<std::size_t> Dataset::find_query(std::string_view query_id) const {
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].query_id == query_id) return i;
  return std::nullopt;
}

void Dataset::require_models(const std::vector<std::string>& model_ids) const {
  for (const auto& r : records_)
    for (const auto& m : model_ids) (void)r.require(m);
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DatasetFormat::jsonl;
  if (ext == ".csv") return DatasetFormat::csv;
  throw ConfigError("cannot infer dataset format from '" + path.string() + "' (use .jsonl or .csv)");
}

Dataset read_dataset(std::istream& in, DatasetFormat format) {
  Grouper grouper;
  if (format == DatasetFormat::jsonl)
    read_jsonl(in, grouper);
  else
    read_csv(in, grouper);
  return grouper.finish();
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in, format);
}

Dataset load_dataset(const std::filesystem::path& path) { return load_dataset(path, format_from_path(path)); }

void write_dataset(std::ostream& out, const Dataset& dataset, DatasetFormat format) {
  if (format == DatasetFormat::jsonl) {
    for (const auto& r : dataset.records()) {
      for (const auto& e : r.entries) {
        ordered_json row;
        row["query_id"] = r.query_id;
        row["model_id"] = e.model_id;
        row["raw_prob"] = e.raw_prob;
        row["correct"] = e.correct;
        row["tokens_in"] = e.tokens_in;
        row["tokens_out"] = e.tokens_out;
        row["latency_ms"] = e.latency_ms ? ordered_json(*e.latency_ms) : ordered_json(nullptr);
        out << row.dump() << '\n';
      }
    }
    return;
  }
  out << "query_id,model_id,raw_prob,correct,tokens_in,tokens_out,latency_ms\n";
  for (const auto& r : dataset.records()) {
    for (const auto& e : r.entries) {
      out << csv_quote(r.query_id) << ',' << csv_quote(e.model_id) << ',' << format_double(e.raw_prob) << ','
          << (e.correct ? "true" : "false") << ',' << e.tokens_in << ',' << e.tokens_out << ','
          << (e.latency_ms ? format_double(*e.latency_ms) : std::string()) << '\n';
    }
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, DatasetFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset '" + path.string() + "'");
  write_dataset(out, dataset, format);
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  save_dataset(path, dataset, format_from_path(path));
}

std::vector<SyntheticModel> default_synthetic_models() {
  return {{"m1", 0.5, 3.0}, {"m2", 1.5, 3.0}, {"m3", 2.5, 3.0}};
}

Dataset generate_synthetic(std::size_t n, const std::vector<SyntheticModel>& models, double noise_sd,
                           std::uint64_t seed) {
  if (n == 0) throw DomainError("generate_synthetic: n must be at least 1");
  if (models.empty()) throw DomainError("generate_synthetic: at least one model is required");
  if (!(noise_sd >= 0.0)) throw DomainError("generate_synthetic: noise_sd must be nonnegative");
  std::vector<std::string> ids;
  for (const auto& m : models) {
    if (!(m.sharpness > 0.0)) throw DomainError("generate_synthetic: sharpness must be positive");
    if (std::find(ids.begin(), ids.end(), m.model_id) != ids.end())
      throw DomainError("generate_synthetic: duplicate model id '" + m.model_id + "'");
    ids.push_back(m.model_id);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const std::size_t width = std::to_string(n).size();
  std::vector<QueryRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string qid = std::to_string(i);
    qid.insert(0, width - qid.size(), '0');
    QueryRecord rec{"q" + qid, {}};
    const double difficulty = normal(rng);
    for (const auto& m : models) {
      const double margin = m.skill - difficulty;
      const bool correct = uniform(rng) < sigmoid(margin);
      const double eps = noise_sd * normal(rng);
      rec.entries.push_back(ModelEntry{m.model_id, sigmoid(m.sharpness * margin + eps), correct, 0, 0, std::nullopt});
    }
    records.push_back(std::move(rec));
  }
  return Dataset(std::move(ids), std::move(records));
}

}  // namespace hcma
