#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cr2/calibration.hpp"
#include "cr2/dataset.hpp"
#include "cr2/deployment_cost.hpp"
#include "cr2/margin_gate.hpp"
#include "cr2/teacher.hpp"

namespace cr2 {

struct OperatingPoint {
  double lambda = 1.0;
  double alpha = 0.01;
};

enum class DeferVariant { inclusive, edge_only, fallback };

struct DeferPolicy {
  DeferVariant variant = DeferVariant::inclusive;
  std::size_t fallback_model = 0;  // pool index, used by the fallback variant

  static DeferPolicy inclusive() { return {}; }
  static DeferPolicy edge_only() { return {DeferVariant::edge_only, 0}; }
  static DeferPolicy fallback(std::size_t model) { return {DeferVariant::fallback, model}; }
  // Throws std::invalid_argument when the fallback model is not an edge model.
  void validate(const CostModel& cost_model) const;
};

enum class GateError : std::uint8_t { none, false_defer, false_accept };

struct RoutingOutcome {
  std::size_t selected = 0;
  bool accepted_locally = false;
  bool correct = false;
  double cost = 0.0;
  GateError gate_error = GateError::none;
};

// Device-side decision. Sees only the embedding and lambda, never the system state.
bool accept_locally(const GateParams& gate, std::span<const double> embedding, double lambda, double tau);

// Edge-side selection after a deferral.
std::size_t deferred_select(std::span<const double> probs, std::span<const double> costs, double lambda,
                            std::size_t local_index, const DeferPolicy& policy);

// Shared decision core once the score, teacher estimates and costs are known.
RoutingOutcome decide(double score, double tau, std::span<const double> probs, std::span<const double> costs,
                      std::span<const std::uint8_t> correct, double lambda, std::size_t local_index,
                      const DeferPolicy& policy);

RoutingOutcome route_one(const QueryRecord& query, const SystemState& state, const OperatingPoint& op,
                         const GateParams& gate, const ThresholdTable& table, const TeacherParams& teacher,
                         const CostModel& cost_model, const DeferPolicy& policy);

std::size_t full_info_route(const QueryRecord& query, const SystemState& state, double lambda,
                            const TeacherParams& teacher, const CostModel& cost_model);

// Cosine-similarity nearest neighbours over training embeddings; p_m is the mean
// correctness of the k most similar rows (earlier row wins similarity ties).
class KnnRouter {
 public:
  KnnRouter(const RoutingDataset& ds, std::span<const std::size_t> train_indices, std::size_t k = 16);

  std::vector<double> estimate(std::span<const double> embedding) const;
  std::vector<std::size_t> neighbours(std::span<const double> embedding) const;
  std::size_t route(std::span<const double> embedding, std::span<const double> costs, double lambda,
                    std::size_t local_index) const;
  std::size_t train_size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t k() const noexcept { return k_; }

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::size_t k_ = 0;
  std::size_t n_models_ = 0;
  std::vector<double> unit_rows_;       // n x dim, L2-normalized
  std::vector<std::uint8_t> correct_;   // n x n_models
};

struct GateErrorRates {
  double false_defer = 0.0;
  double false_accept = 0.0;
};

GateErrorRates gate_error_decomposition(std::span<const RoutingOutcome> outcomes);

struct SweepRow {
  double lambda = 0.0;
  double alpha = 0.0;
  double accuracy = 0.0;
  double mean_cost = 0.0;
  double fa_risk = 0.0;
  double local_rate = 0.0;
  double false_defer = 0.0;
  double false_accept = 0.0;
};

struct CurvePoint {
  std::string label;
  double lambda = 0.0;
  double accuracy = 0.0;
  double mean_cost = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;           // lambda-major over the requested grid
  std::vector<SweepRow> envelope;       // non-dominated rows, ascending cost
  std::vector<CurvePoint> full_info;    // full-information reference, one per lambda
  std::vector<CurvePoint> knn;          // KNN baseline, one per lambda (empty when disabled)
  CurvePoint always_local;
  CurvePoint always_reference;
};

struct SweepInputs {
  const RoutingDataset* dataset = nullptr;
  std::span<const SystemState> states;      // one per dataset query
  std::span<const std::size_t> eval_indices;
  const TeacherParams* teacher = nullptr;
  const GateParams* gate = nullptr;
  const ThresholdTable* table = nullptr;
  const CostModel* cost_model = nullptr;
  DeferPolicy policy;
  const KnnRouter* knn = nullptr;           // optional baseline
};

SweepResult evaluate_sweep(const SweepInputs& in, std::span<const double> lambdas, std::span<const double> alphas);

// Non-dominated subset (lower cost, higher accuracy), ascending cost. Exact
// duplicates keep the first occurrence.
std::vector<SweepRow> pareto_envelope(std::span<const SweepRow> rows);

// Minimum mean cost among rows reaching the accuracy target.
std::optional<SweepRow> cheapest_at_accuracy(std::span<const SweepRow> rows, double accuracy_target);
// Highest accuracy among rows within the cost budget.
std::optional<SweepRow> best_within_cost(std::span<const SweepRow> rows, double cost_budget);

// Piecewise-linear accuracy of a reference curve at a given cost (clamped at the ends).
double interpolate_accuracy(std::span<const CurvePoint> curve, double cost);

// Fraction of queries on which 1[gate margin >= 0] equals the teacher label.
double sign_agreement(const GateParams& gate, std::span<const std::span<const double>> embeddings,
                      std::span<const std::vector<double>> probs, std::span<const std::vector<double>> costs,
                      double lambda, std::size_t local_index);

// Parameter and FLOP counting. Dense layers cost 2 FLOPs per multiply-accumulate,
// element-wise affine terms 2 FLOPs each and every activation evaluation 1 FLOP.
struct DenseLayer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool bias = false;
};

struct RouterArtifact {
  std::vector<DenseLayer> layers;
  std::size_t elementwise_macs = 0;
  std::size_t activation_evals = 0;
  std::size_t extra_params = 0;
  std::size_t extra_flops = 0;
};

struct Complexity {
  std::size_t params = 0;
  std::size_t flops_per_query = 0;

  friend bool operator==(const Complexity&, const Complexity&) = default;
};

Complexity router_complexity(const RouterArtifact& artifact);
RouterArtifact gate_artifact(std::size_t embedding_dim, std::size_t hidden);
RouterArtifact teacher_artifact(std::size_t embedding_dim, std::size_t hidden, std::size_t n_models);
RouterArtifact knn_artifact(std::size_t n_train, std::size_t embedding_dim);

std::string sweep_to_csv(std::span<const SweepRow> rows);
std::string curves_to_csv(const SweepResult& result);

}  // namespace cr2
