#include "cr2/router_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cr2 {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void DeferPolicy::validate(const CostModel& cost_model) const {
  if (variant != DeferVariant::fallback) return;
  if (fallback_model >= cost_model.size() || cost_model.models()[fallback_model].tier != Tier::edge) {
    throw std::invalid_argument("fallback model must be an edge model of the pool");
  }
}

bool accept_locally(const GateParams& gate, std::span<const double> embedding, double lambda, double tau) {
  return gate_forward(gate, embedding, lambda).score >= tau;
}

std::size_t deferred_select(std::span<const double> probs, std::span<const double> costs, double lambda,
                            std::size_t local_index, const DeferPolicy& policy) {
  switch (policy.variant) {
    case DeferVariant::inclusive:
      return full_info_select(probs, costs, lambda, local_index);
    case DeferVariant::edge_only: {
      std::vector<std::size_t> edge;
      for (std::size_t m = 0; m < probs.size(); ++m) {
        if (m != local_index) edge.push_back(m);
      }
      if (edge.empty()) throw std::invalid_argument("edge-only deferral needs an edge model");
      return select_among(probs, costs, lambda, edge, local_index);
    }
    case DeferVariant::fallback: {
      if (policy.fallback_model >= probs.size() || policy.fallback_model == local_index) {
        throw std::invalid_argument("fallback model must be an edge model of the pool");
      }
      const std::size_t m = full_info_select(probs, costs, lambda, local_index);
      return m == local_index ? policy.fallback_model : m;
    }
  }
  throw std::logic_error("unknown deferral variant");
}

RoutingOutcome decide(double score, double tau, std::span<const double> probs, std::span<const double> costs,
                      std::span<const std::uint8_t> correct, double lambda, std::size_t local_index,
                      const DeferPolicy& policy) {
  if (correct.size() != probs.size()) throw std::invalid_argument("decide: label count mismatch");
  RoutingOutcome out;
  out.accepted_locally = score >= tau;
  out.selected = out.accepted_locally ? local_index : deferred_select(probs, costs, lambda, local_index, policy);
  out.correct = correct[out.selected] != 0;
  out.cost = costs[out.selected];
  const bool reference_prefers_edge = full_info_select(probs, costs, lambda, local_index) != local_index;
  if (out.accepted_locally && reference_prefers_edge) out.gate_error = GateError::false_accept;
  if (!out.accepted_locally && !reference_prefers_edge) out.gate_error = GateError::false_defer;
  return out;
}

RoutingOutcome route_one(const QueryRecord& query, const SystemState& state, const OperatingPoint& op,
                         const GateParams& gate, const ThresholdTable& table, const TeacherParams& teacher,
                         const CostModel& cost_model, const DeferPolicy& policy) {
  const double tau = table.lookup(op.lambda, op.alpha);
  const double score = gate_forward(gate, query.embedding, op.lambda).score;
  const auto probs = teacher_forward(teacher, query.embedding).probs;
  const auto costs = cost_model.normalized_costs(query.workload(), state);
  return decide(score, tau, probs, costs, query.correct, op.lambda, cost_model.local_index(), policy);
}

std::size_t full_info_route(const QueryRecord& query, const SystemState& state, double lambda,
                            const TeacherParams& teacher, const CostModel& cost_model) {
  const auto probs = teacher_forward(teacher, query.embedding).probs;
  const auto costs = cost_model.normalized_costs(query.workload(), state);
  return full_info_select(probs, costs, lambda, cost_model.local_index());
}

KnnRouter::KnnRouter(const RoutingDataset& ds, std::span<const std::size_t> train_indices, std::size_t k)
    : n_(train_indices.size()), dim_(ds.embedding_dim), k_(k), n_models_(ds.model_ids.size()) {
  if (k == 0) throw std::invalid_argument("knn: k must be at least 1");
  if (train_indices.empty()) throw std::invalid_argument("knn: empty training set");
  unit_rows_.reserve(n_ * dim_);
  correct_.reserve(n_ * n_models_);
  for (std::size_t idx : train_indices) {
    const auto& q = ds.queries.at(idx);
    double norm = std::sqrt(dot(q.embedding, q.embedding));
    if (norm == 0.0) norm = 1.0;
    for (double v : q.embedding) unit_rows_.push_back(v / norm);
    correct_.insert(correct_.end(), q.correct.begin(), q.correct.end());
  }
}

std::vector<std::size_t> KnnRouter::neighbours(std::span<const double> embedding) const {
  if (embedding.size() != dim_) throw std::invalid_argument("knn: embedding dim mismatch");
  double norm = std::sqrt(dot(embedding, embedding));
  if (norm == 0.0) norm = 1.0;
  std::vector<double> sim(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    sim[i] = dot(std::span<const double>(unit_rows_.data() + i * dim_, dim_), embedding) / norm;
  }
  std::vector<std::size_t> order(n_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(k_, n_);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
  order.resize(k);
  return order;
}

std::vector<double> KnnRouter::estimate(std::span<const double> embedding) const {
  const auto nb = neighbours(embedding);
  std::vector<double> p(n_models_, 0.0);
  for (std::size_t i : nb) {
    for (std::size_t m = 0; m < n_models_; ++m) p[m] += correct_[i * n_models_ + m];
  }
  for (auto& v : p) v /= static_cast<double>(nb.size());
  return p;
}

std::size_t KnnRouter::route(std::span<const double> embedding, std::span<const double> costs, double lambda,
                             std::size_t local_index) const {
  return full_info_select(estimate(embedding), costs, lambda, local_index);
}

GateErrorRates gate_error_decomposition(std::span<const RoutingOutcome> outcomes) {
  GateErrorRates r;
  if (outcomes.empty()) return r;
  for (const auto& o : outcomes) {
    r.false_defer += o.gate_error == GateError::false_defer;
    r.false_accept += o.gate_error == GateError::false_accept;
  }
  r.false_defer /= static_cast<double>(outcomes.size());
  r.false_accept /= static_cast<double>(outcomes.size());
  return r;
}

SweepResult evaluate_sweep(const SweepInputs& in, std::span<const double> lambdas, std::span<const double> alphas) {
  if (!in.dataset || !in.teacher || !in.gate || !in.table || !in.cost_model) {
    throw std::invalid_argument("evaluate_sweep: missing input");
  }
  if (in.eval_indices.empty()) throw std::invalid_argument("evaluate_sweep: empty test split");
  if (in.states.size() != in.dataset->queries.size()) throw std::invalid_argument("evaluate_sweep: one state per query");
  in.policy.validate(*in.cost_model);
  const auto& ds = *in.dataset;
  const auto& cm = *in.cost_model;
  const std::size_t local = cm.local_index();
  const std::size_t ref = cm.reference_index();
  const std::size_t n = in.eval_indices.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<std::vector<double>> probs(n);
  std::vector<std::vector<double>> costs(n);
  std::vector<std::vector<double>> knn_probs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = ds.queries.at(in.eval_indices[i]);
    probs[i] = teacher_forward(*in.teacher, q.embedding).probs;
    costs[i] = cm.normalized_costs(q.workload(), in.states[in.eval_indices[i]]);
    if (in.knn) knn_probs.push_back(in.knn->estimate(q.embedding));
  }

  SweepResult res;
  res.always_local = {"always_local", 0.0, 0.0, 0.0};
  res.always_reference = {"always_reference", 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& q = ds.queries[in.eval_indices[i]];
    res.always_local.accuracy += q.correct[local] * inv_n;
    res.always_local.mean_cost += costs[i][local] * inv_n;
    res.always_reference.accuracy += q.correct[ref] * inv_n;
    res.always_reference.mean_cost += costs[i][ref] * inv_n;
  }

  std::vector<double> scores(n);
  std::vector<RoutingOutcome> outcomes(n);
  for (double lambda : lambdas) {
    CurvePoint full{"full_info", lambda, 0.0, 0.0};
    CurvePoint knn{"knn", lambda, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const auto& q = ds.queries[in.eval_indices[i]];
      scores[i] = gate_forward(*in.gate, q.embedding, lambda).score;
      const std::size_t m = full_info_select(probs[i], costs[i], lambda, local);
      full.accuracy += q.correct[m] * inv_n;
      full.mean_cost += costs[i][m] * inv_n;
      if (in.knn) {
        const std::size_t mk = full_info_select(knn_probs[i], costs[i], lambda, local);
        knn.accuracy += q.correct[mk] * inv_n;
        knn.mean_cost += costs[i][mk] * inv_n;
      }
    }
    res.full_info.push_back(full);
    if (in.knn) res.knn.push_back(knn);

    for (double alpha : alphas) {
      const double tau = in.table->lookup(lambda, alpha);
      SweepRow row{lambda, alpha};
      for (std::size_t i = 0; i < n; ++i) {
        const auto& q = ds.queries[in.eval_indices[i]];
        outcomes[i] = decide(scores[i], tau, probs[i], costs[i], q.correct, lambda, local, in.policy);
        row.accuracy += outcomes[i].correct * inv_n;
        row.mean_cost += outcomes[i].cost * inv_n;
        row.local_rate += outcomes[i].accepted_locally * inv_n;
      }
      const auto errs = gate_error_decomposition(outcomes);
      row.false_defer = errs.false_defer;
      row.false_accept = errs.false_accept;
      row.fa_risk = errs.false_accept;
      res.rows.push_back(row);
    }
  }
  res.envelope = pareto_envelope(res.rows);
  return res;
}

std::vector<SweepRow> pareto_envelope(std::span<const SweepRow> rows) {
  std::vector<SweepRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < rows.size() && keep; ++j) {
      if (i == j) continue;
      const bool weak = rows[j].mean_cost <= rows[i].mean_cost && rows[j].accuracy >= rows[i].accuracy;
      const bool strict = rows[j].mean_cost < rows[i].mean_cost || rows[j].accuracy > rows[i].accuracy;
      const bool duplicate_earlier = !strict && j < i;
      if (weak && (strict || duplicate_earlier)) keep = false;
    }
    if (keep) out.push_back(rows[i]);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_cost < b.mean_cost; });
  return out;
}

std::optional<SweepRow> cheapest_at_accuracy(std::span<const SweepRow> rows, double accuracy_target) {
  std::optional<SweepRow> best;
  for (const auto& r : rows) {
    if (r.accuracy >= accuracy_target && (!best || r.mean_cost < best->mean_cost)) best = r;
  }
  return best;
}

std::optional<SweepRow> best_within_cost(std::span<const SweepRow> rows, double cost_budget) {
  std::optional<SweepRow> best;
  for (const auto& r : rows) {
    if (r.mean_cost <= cost_budget && (!best || r.accuracy > best->accuracy)) best = r;
  }
  return best;
}

double interpolate_accuracy(std::span<const CurvePoint> curve, double cost) {
  if (curve.empty()) throw std::invalid_argument("interpolate_accuracy: empty curve");
  std::vector<CurvePoint> pts(curve.begin(), curve.end());
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.mean_cost < b.mean_cost; });
  if (cost <= pts.front().mean_cost) return pts.front().accuracy;
  if (cost >= pts.back().mean_cost) return pts.back().accuracy;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (cost <= pts[i].mean_cost) {
      const double span = pts[i].mean_cost - pts[i - 1].mean_cost;
      if (span <= 0.0) return std::max(pts[i].accuracy, pts[i - 1].accuracy);
      const double w = (cost - pts[i - 1].mean_cost) / span;
      return pts[i - 1].accuracy + w * (pts[i].accuracy - pts[i - 1].accuracy);
    }
  }
  return pts.back().accuracy;
}

double sign_agreement(const GateParams& gate, std::span<const std::span<const double>> embeddings,
                      std::span<const std::vector<double>> probs, std::span<const std::vector<double>> costs,
                      double lambda, std::size_t local_index) {
  if (embeddings.empty() || embeddings.size() != probs.size() || probs.size() != costs.size()) {
    throw std::invalid_argument("sign_agreement: bad inputs");
  }
  std::size_t agree = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const bool predicted = gate_forward(gate, embeddings[i], lambda).margin >= 0.0;
    const bool label = teacher_margin(probs[i], costs[i], lambda, local_index).label != 0;
    agree += predicted == label;
  }
  return static_cast<double>(agree) / static_cast<double>(embeddings.size());
}

Complexity router_complexity(const RouterArtifact& a) {
  Complexity c;
  std::size_t macs = a.elementwise_macs;
  for (const auto& l : a.layers) {
    c.params += l.rows * l.cols + (l.bias ? l.rows : 0);
    macs += l.rows * l.cols;
  }
  c.params += a.extra_params;
  c.flops_per_query = 2 * macs + a.activation_evals + a.extra_flops;
  return c;
}

RouterArtifact gate_artifact(std::size_t embedding_dim, std::size_t hidden) {
  RouterArtifact a;
  a.layers = {{hidden, embedding_dim, false}, {2 * hidden, kLambdaFeatureDim, false}, {1, hidden, true}};
  a.elementwise_macs = hidden;      // gamma * h + beta
  a.activation_evals = hidden + 1;  // GELU, output sigmoid
  a.extra_params = 1;               // temperature
  return a;
}

RouterArtifact teacher_artifact(std::size_t embedding_dim, std::size_t hidden, std::size_t n_models) {
  RouterArtifact a;
  for (std::size_t m = 0; m < n_models; ++m) {
    a.layers.push_back({hidden, embedding_dim, true});
    a.layers.push_back({1, hidden, true});
  }
  a.activation_evals = n_models * (hidden + 1);
  return a;
}

RouterArtifact knn_artifact(std::size_t n_train, std::size_t embedding_dim) {
  RouterArtifact a;
  // cosine scan against pre-normalized rows plus normalizing the query
  a.extra_flops = 2 * n_train * embedding_dim + 2 * embedding_dim + 1;
  return a;
}

std::string sweep_to_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "lambda,alpha,accuracy,mean_cost,fa_risk,local_rate,false_defer,false_accept\n";
  for (const auto& r : rows) {
    out << fmt(r.lambda) << ',' << fmt(r.alpha) << ',' << fmt(r.accuracy) << ',' << fmt(r.mean_cost) << ','
        << fmt(r.fa_risk) << ',' << fmt(r.local_rate) << ',' << fmt(r.false_defer) << ',' << fmt(r.false_accept) << "\n";
  }
  return out.str();
}

std::string curves_to_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "curve,lambda,accuracy,mean_cost\n";
  auto row = [&](const CurvePoint& p) {
    out << p.label << ',' << fmt(p.lambda) << ',' << fmt(p.accuracy) << ',' << fmt(p.mean_cost) << "\n";
  };
  row(result.always_local);
  row(result.always_reference);
  for (const auto& p : result.full_info) row(p);
  for (const auto& p : result.knn) row(p);
  return out.str();
}

}  // namespace cr2
