#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cr2/dataset.hpp"
#include "cr2/deployment_cost.hpp"
#include "cr2/numeric.hpp"
#include "cr2/random.hpp"
#include "cr2/teacher.hpp"

namespace cr2 {

inline constexpr std::array<double, 4> kLambdaFrequencies = {0.5, 1.0, 2.0, 4.0};
inline constexpr std::size_t kLambdaFeatureDim = 1 + 2 * kLambdaFrequencies.size();
inline constexpr double kTemperatureFloor = 1e-6;

// [log l, sin(2 pi f log l), cos(2 pi f log l) for f in {0.5, 1, 2, 4}]
std::array<double, kLambdaFeatureDim> psi_lambda(double lambda);

// FiLM-conditioned margin gate:
//   h = W1 LN(e);  (gamma, beta) = W_film psi(lambda);  margin = W2 Drop(GELU(gamma * h + beta)) + b2
//   score = sigmoid(margin / T),  T = softplus(eta_T) + 1e-6
// The first `hidden` rows of W_film produce gamma, the remaining rows beta.
struct GateParams {
  std::size_t embedding_dim = 0;
  std::size_t hidden = 0;
  double dropout = 0.1;
  Tensor2 w1;      // hidden x dim
  Tensor2 w_film;  // 2 hidden x 17
  Tensor2 w2;      // 1 x hidden
  Tensor2 b2;      // 1 x 1
  Tensor2 eta_t;   // 1 x 1

  static GateParams zeros(std::size_t dim, std::size_t hidden);
  static GateParams init(std::size_t dim, std::size_t hidden, double initial_temperature, Rng& rng);

  double temperature() const;
  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;

  friend bool operator==(const GateParams&, const GateParams&) = default;
};

struct GateOutput {
  double margin = 0.0;
  double score = 0.0;
};

// Evaluation-mode forward pass. The device-side gate sees only the query
// embedding and the cost weight.
GateOutput gate_forward(const GateParams& params, std::span<const double> embedding, double lambda);
// Training-mode forward pass with dropout drawn from `dropout_rng`.
GateOutput gate_forward(const GateParams& params, std::span<const double> embedding, double lambda, Rng& dropout_rng);

struct GateLossWeights {
  double w_sign = 1.0;
  double w_margin = 1.0;
  double w_mono = 1.0;
  double huber_beta = kDefaultHuberBeta;

  void validate() const;
};

// Distillation targets for one mini-batch; lambdas ascending, margins and
// labels are J x B (row j belongs to lambdas[j]).
struct GateTargets {
  std::vector<double> lambdas;
  Tensor2 margins;
  std::vector<std::uint8_t> labels;
};

struct GateLossBreakdown {
  double total = 0.0;
  double sign = 0.0;
  double margin = 0.0;
  double mono = 0.0;
};

// w_sign L_sign + w_margin L_margin + w_mono L_mono. Teacher margins are
// constants. When `grad` is given it receives the gradient (overwritten).
GateLossBreakdown gate_loss(const GateParams& params, std::span<const std::span<const double>> embeddings,
                            const GateTargets& targets, const GateLossWeights& weights, GateParams* grad = nullptr,
                            Rng* dropout_rng = nullptr);

struct GateConfig {
  std::size_t hidden = 256;
  double dropout = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  std::size_t lambdas_per_step = 8;  // J
  double lambda_min = 0.1;
  double lambda_max = 20.0;
  double initial_temperature = 0.1;
  GateLossWeights weights;
  AdamWConfig optim;

  void validate() const;
};

struct GateTrainingResult {
  GateParams params;                   // selected checkpoint
  std::vector<double> epoch_losses;    // mean training loss per epoch
  std::vector<double> cal_losses;      // calibration-split loss after each epoch
  std::size_t selected_epoch = 0;
};

// Teacher margins for every (lambda, query) pair of a batch under given per-query costs.
GateTargets make_gate_targets(std::vector<double> lambdas, std::span<const std::vector<double>> probs,
                              std::span<const std::vector<double>> costs, std::size_t local_index);

GateTrainingResult train_gate(const RoutingDataset& ds, const TeacherParams& teacher, const CostModel& cost_model,
                              const GateConfig& cfg, Rng& rng);

std::string serialize_gate(const GateParams& params, const std::string& teacher_hash);
struct LoadedGate {
  GateParams params;
  std::string teacher_hash;
};
LoadedGate deserialize_gate(std::string_view blob);

}  // namespace cr2
