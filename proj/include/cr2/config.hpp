#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cr2/dataset.hpp"
#include "cr2/deployment_cost.hpp"
#include "cr2/margin_gate.hpp"
#include "cr2/router_eval.hpp"
#include "cr2/teacher.hpp"

namespace cr2 {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PoolEntry {
  ModelProfile profile;
  double capability = 0.0;  // synthetic generator only
  double slope = 0.0;
};

struct DatasetSection {
  std::string source = "synthetic";  // synthetic | file
  std::string path;                  // tabular file when source = file
  SyntheticConfig synthetic;
};

struct CostSection {
  CommParams comm;
  UePower ue;
  double omega_t = 0.5;
  double omega_e = 0.5;
  std::size_t reference_sample = 10000;  // workloads used to fix T0 and E0
};

struct CalibrationSection {
  double lambda_min = 0.1;
  double lambda_max = 20.0;
  std::size_t lambda_points = 24;
  std::vector<double> alphas{kDefaultAlphaGrid.begin(), kDefaultAlphaGrid.end()};

  std::vector<double> lambda_grid() const;
};

struct SweepSection {
  std::string defer = "inclusive";  // inclusive | edge_only | fallback
  std::string fallback_model;
  std::size_t knn_k = 16;
  std::vector<double> cost_targets{0.5, 0.6, 0.7, 0.8};
  std::vector<double> accuracy_targets{0.6, 0.7, 0.8};
};

struct AcceptanceSection {
  std::size_t a1_splits = 200;
  std::size_t a1_cal_size = 2000;
  std::size_t a1_test_size = 2000;
  std::size_t a1_lambda_points = 6;
  std::vector<double> a1_alphas{0.002, 0.01, 0.05};
  std::size_t a1_pool_size = 60000;
  double a7_min_sign_agreement = 0.90;
  double a7_max_accuracy_gap = 0.05;
  double a7_alpha = 0.01;
};

struct RunConfig {
  std::uint64_t seed = 20240611;
  DatasetSection dataset;
  std::vector<PoolEntry> pool;  // config order is pool order
  CostSection cost;
  TeacherConfig teacher;
  GateConfig gate;
  CalibrationSection calibration;
  SweepSection sweep;
  AcceptanceSection acceptance;

  std::vector<std::string> model_ids() const;
  std::vector<ModelProfile> profiles() const;
  // Throws ConfigError on any violated invariant.
  void validate() const;
  // Canonical INI rendering of every resolved value; also the hashed form.
  std::string resolved() const;
  std::string hash() const;
  DeferPolicy defer_policy() const;
};

RunConfig parse_config(std::string_view ini_text);
RunConfig load_config(const std::filesystem::path& path);

// Cost model with T0/E0 frozen from the configured reference sample.
CostModel build_cost_model(const RunConfig& cfg);
// Synthetic dataset or the configured tabular file.
RoutingDataset build_dataset(const RunConfig& cfg);

// Stream tags for the per-stage PRNG substreams.
enum class StreamTag : std::uint64_t {
  data = 0x44415441,
  states = 0x53544154,
  reference = 0x52454653,
  teacher = 0x54434852,
  gate = 0x47415445,
  acceptance = 0x41434350,
};

Rng stage_rng(const RunConfig& cfg, StreamTag tag, std::uint64_t index = 0);
std::uint64_t state_seed(const RunConfig& cfg);

}  // namespace cr2
