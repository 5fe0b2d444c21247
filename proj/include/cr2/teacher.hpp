#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cr2/dataset.hpp"
#include "cr2/numeric.hpp"
#include "cr2/random.hpp"

namespace cr2 {

// One binary correctness head: logit = w2 . Drop(GELU(W1 e + b1)) + b2.
struct TeacherHead {
  Tensor2 w1;  // hidden x dim
  Tensor2 b1;  // hidden x 1
  Tensor2 w2;  // 1 x hidden
  Tensor2 b2;  // 1 x 1

  friend bool operator==(const TeacherHead&, const TeacherHead&) = default;
};

struct TeacherParams {
  std::size_t embedding_dim = 0;
  std::size_t hidden = 0;
  double dropout = 0.1;
  std::vector<std::string> model_ids;
  std::vector<TeacherHead> heads;  // model_ids order

  static TeacherParams zeros(std::size_t dim, std::size_t hidden, std::vector<std::string> model_ids);
  static TeacherParams init(std::size_t dim, std::size_t hidden, std::vector<std::string> model_ids, Rng& rng);

  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;

  friend bool operator==(const TeacherParams&, const TeacherParams&) = default;
};

struct TeacherLossWeights {
  double w_cls = 1.0;
  double w_rank = 1.0;

  void validate() const;
};

struct TeacherConfig {
  std::size_t hidden = 256;
  double dropout = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  TeacherLossWeights weights;
  AdamWConfig optim;

  void validate() const;
};

struct TeacherOutput {
  std::vector<double> logits;
  std::vector<double> probs;
};

// Evaluation-mode forward pass (no dropout).
TeacherOutput teacher_forward(const TeacherParams& params, std::span<const double> embedding);

struct LabeledBatch {
  std::vector<std::span<const double>> embeddings;
  std::vector<std::span<const std::uint8_t>> labels;
};

struct TeacherLossBreakdown {
  double total = 0.0;
  double bce = 0.0;
  double rank = 0.0;
};

// w_cls * mean BCE over |B||M| + w_rank * mean over B' of the per-query pairwise
// softplus ranking loss (0 when B' is empty). When `grad` is given it receives
// the gradient (overwritten). Dropout is applied only when `dropout_rng` is set.
TeacherLossBreakdown teacher_loss(const TeacherParams& params, const LabeledBatch& batch,
                                  const TeacherLossWeights& weights, TeacherParams* grad = nullptr,
                                  Rng* dropout_rng = nullptr);

// p_m - lambda c_m
std::vector<double> teacher_utility(std::span<const double> probs, std::span<const double> costs, double lambda);

// argmax of the teacher utility over the whole pool. Ties involving the local
// model go to the local model; remaining ties go to the smaller cost, then to
// the earlier pool index.
std::size_t full_info_select(std::span<const double> probs, std::span<const double> costs, double lambda,
                             std::size_t local_index);

// argmax over an arbitrary candidate subset with the same tie rules.
std::size_t select_among(std::span<const double> probs, std::span<const double> costs, double lambda,
                         std::span<const std::size_t> candidates, std::size_t local_index);

struct TeacherMargin {
  double margin = 0.0;  // u_local - max_edge u
  std::uint8_t label = 0;  // 1[margin >= 0]
};

TeacherMargin teacher_margin(std::span<const double> probs, std::span<const double> costs, double lambda,
                             std::size_t local_index);

struct TeacherTrainingResult {
  TeacherParams params;
  std::vector<double> epoch_losses;  // mean training loss per epoch
};

TeacherTrainingResult train_teacher(const RoutingDataset& ds, const TeacherConfig& cfg, Rng& rng);

// Correctness estimates for every query of the dataset, dataset order.
std::vector<std::vector<double>> teacher_probabilities(const TeacherParams& params, const RoutingDataset& ds);

// Versioned binary checkpoint. `config_hash` identifies the training config.
std::string serialize_teacher(const TeacherParams& params, const std::string& config_hash);
struct LoadedTeacher {
  TeacherParams params;
  std::string config_hash;
};
// Throws std::runtime_error on a malformed blob or when the model list differs.
LoadedTeacher deserialize_teacher(std::string_view blob, const std::vector<std::string>& expected_models);

}  // namespace cr2
