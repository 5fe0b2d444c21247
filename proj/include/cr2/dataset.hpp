#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cr2/deployment_cost.hpp"
#include "cr2/random.hpp"

namespace cr2 {

enum class Split : std::uint8_t { train, cal, test };

std::string_view to_string(Split s);

struct QueryRecord {
  std::int64_t id = 0;
  Split split = Split::train;
  int l_in = 1;
  std::vector<double> embedding;
  std::vector<std::uint8_t> correct;  // y_m, pool order
  std::vector<int> l_out;             // per model, pool order

  QueryWorkload workload() const { return {l_in, l_out}; }
  bool any_correct() const;
};

struct RoutingDataset {
  std::size_t embedding_dim = 0;
  std::vector<std::string> model_ids;
  std::vector<QueryRecord> queries;

  // Throws DatasetError on any violated invariant.
  void validate() const;
  std::vector<std::size_t> indices(Split split) const;
  // Test queries answered correctly by at least one model.
  std::vector<std::size_t> evaluation_indices() const;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { missing_column, dimension_mismatch, non_binary_label, unknown_split, malformed, io };

  DatasetError(Kind kind, const std::string& message);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Log-normal token-count model shared by the generator and reference sampling.
struct TokenModel {
  double l_in_median = 200.0;
  double l_in_sigma = 0.5;
  double l_out_median = 150.0;
  double l_out_sigma = 0.6;
  // Per-model multiplicative jitter (log-space stddev) around the query's base output length.
  double l_out_model_jitter = 0.1;
};

QueryWorkload sample_workload(const TokenModel& tokens, std::size_t n_models, Rng& rng);

struct SyntheticConfig {
  std::size_t n_queries = 20000;
  std::size_t embedding_dim = 32;
  std::size_t n_clusters = 8;
  double cluster_scale = 2.0;       // stddev of cluster centres
  double within_cluster_std = 1.0;
  double difficulty_noise = 0.3;    // stddev of the additive noise on the latent difficulty
  // P(correct_m) = sigmoid(capability_m - slope_m * difficulty + affinity_m,k + shared noise).
  std::vector<double> capability;
  std::vector<double> slope;
  double affinity_scale = 0.0;      // per (model, cluster) capability offset stddev
  double shared_noise = 0.0;        // per-query noise shared by all models (induces correlation)
  TokenModel tokens;
  double train_fraction = 0.6;
  double cal_fraction = 0.2;
  double test_fraction = 0.2;

  void validate(std::size_t n_models) const;
};

RoutingDataset generate_synthetic(const SyntheticConfig& cfg, const std::vector<std::string>& model_ids, Rng& rng);

// Columns: id, split, l_in, emb_0..emb_{d-1}, y_<model>.., lout_<model>..
void save_tabular(const RoutingDataset& ds, const std::filesystem::path& path);
RoutingDataset load_tabular(const std::filesystem::path& path);
std::string to_tabular(const RoutingDataset& ds);
RoutingDataset parse_tabular(std::string_view text);

// One independent state per query, drawn from the query's own substream.
std::vector<SystemState> attach_states(const RoutingDataset& ds, const CommParams& comm, std::uint64_t seed);

}  // namespace cr2
