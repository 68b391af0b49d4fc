#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hcma/calibration.hpp"
#include "hcma/chain.hpp"
#include "hcma/records.hpp"

namespace hcma::test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hcma_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Profiles calibrated on the whole dataset with the given per-model costs.
inline std::vector<ModelProfile> calibrated_profiles(const Dataset& ds, const std::vector<double>& costs,
                                                     TransformKind t = TransformKind::max_softmax) {
  std::vector<ModelProfile> out;
  for (std::size_t j = 0; j < ds.model_ids().size(); ++j) {
    const auto& id = ds.model_ids()[j];
    Calibrator c = fit_platt(labeled_scores(ds, id), t);
    c.model_id = id;
    out.push_back(ModelProfile{id, j < costs.size() ? costs[j] : 1.0, 10.0 * static_cast<double>(j + 1), c});
  }
  return out;
}

inline ChainConfig chain_of(const std::vector<ModelProfile>& members, const std::vector<double>& r,
                            const std::vector<double>& a) {
  std::vector<ChainMember> m;
  for (std::size_t j = 0; j < members.size(); ++j)
    m.push_back(ChainMember{members[j], r[j], j < a.size() ? a[j] : r[j]});
  return ChainConfig(std::move(m));
}

}  // namespace hcma::test
