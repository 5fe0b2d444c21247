#include "cr2/margin_gate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "cr2/artifact.hpp"

namespace cr2 {

namespace {

constexpr std::string_view kGateMagic = "CR2GATE";
constexpr std::uint32_t kGateVersion = 1;
constexpr std::string_view kFilmLayout = "film:gamma_rows_first;no_gamma_offset;psi:log,sin,cos";

struct LambdaBranch {
  std::array<double, kLambdaFeatureDim> psi{};
  std::vector<double> film;  // [gamma; beta], 2 hidden
};

LambdaBranch lambda_branch(const GateParams& p, double lambda) {
  LambdaBranch b;
  b.psi = psi_lambda(lambda);
  b.film.resize(2 * p.hidden);
  matvec(p.w_film, b.psi, b.film);
  return b;
}

GateOutput forward_impl(const GateParams& p, std::span<const double> embedding, double lambda, Rng* dropout_rng) {
  if (embedding.size() != p.embedding_dim) throw std::invalid_argument("gate_forward: embedding dim mismatch");
  const auto ln = layernorm(embedding);
  std::vector<double> h(p.hidden);
  matvec(p.w1, ln.output, h);
  const auto branch = lambda_branch(p, lambda);
  std::vector<double> mask =
      dropout_rng ? dropout_mask(p.hidden, p.dropout, *dropout_rng) : std::vector<double>(p.hidden, 1.0);
  double margin = p.b2[0];
  for (std::size_t k = 0; k < p.hidden; ++k) {
    margin += p.w2[k] * mask[k] * gelu(branch.film[k] * h[k] + branch.film[p.hidden + k]);
  }
  return {margin, sigmoid(margin / p.temperature())};
}

}  // namespace

std::array<double, kLambdaFeatureDim> psi_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("psi_lambda: lambda must be positive");
  const double x = std::log(lambda);
  std::array<double, kLambdaFeatureDim> psi{};
  psi[0] = x;
  for (std::size_t k = 0; k < kLambdaFrequencies.size(); ++k) {
    const double angle = 2.0 * std::numbers::pi * kLambdaFrequencies[k] * x;
    psi[1 + 2 * k] = std::sin(angle);
    psi[2 + 2 * k] = std::cos(angle);
  }
  return psi;
}

GateParams GateParams::zeros(std::size_t dim, std::size_t hidden) {
  GateParams p;
  p.embedding_dim = dim;
  p.hidden = hidden;
  p.w1 = Tensor2(hidden, dim);
  p.w_film = Tensor2(2 * hidden, kLambdaFeatureDim);
  p.w2 = Tensor2(1, hidden);
  p.b2 = Tensor2(1, 1);
  p.eta_t = Tensor2(1, 1);
  return p;
}

GateParams GateParams::init(std::size_t dim, std::size_t hidden, double initial_temperature, Rng& rng) {
  if (!(initial_temperature > kTemperatureFloor)) throw std::invalid_argument("initial temperature must exceed 1e-6");
  GateParams p = zeros(dim, hidden);
  p.w1 = Tensor2::uniform(hidden, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  p.w_film = Tensor2::uniform(2 * hidden, kLambdaFeatureDim, 1.0 / std::sqrt(static_cast<double>(kLambdaFeatureDim)), rng);
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w2 = Tensor2::uniform(1, hidden, hid_bound, rng);
  p.b2 = Tensor2::uniform(1, 1, hid_bound, rng);
  p.eta_t[0] = softplus_inverse(initial_temperature - kTemperatureFloor);
  return p;
}

double GateParams::temperature() const { return softplus(eta_t[0]) + kTemperatureFloor; }

std::vector<Tensor2*> GateParams::tensors() { return {&w1, &w_film, &w2, &b2, &eta_t}; }
std::vector<const Tensor2*> GateParams::tensors() const { return {&w1, &w_film, &w2, &b2, &eta_t}; }

GateOutput gate_forward(const GateParams& params, std::span<const double> embedding, double lambda) {
  return forward_impl(params, embedding, lambda, nullptr);
}

GateOutput gate_forward(const GateParams& params, std::span<const double> embedding, double lambda, Rng& dropout_rng) {
  return forward_impl(params, embedding, lambda, &dropout_rng);
}

void GateLossWeights::validate() const {
  if (w_sign < 0.0 || w_margin < 0.0 || w_mono < 0.0) throw std::invalid_argument("gate loss weights must be non-negative");
  if (!(huber_beta > 0.0)) throw std::invalid_argument("huber beta must be positive");
}

GateLossBreakdown gate_loss(const GateParams& params, std::span<const std::span<const double>> embeddings,
                            const GateTargets& targets, const GateLossWeights& weights, GateParams* grad,
                            Rng* dropout_rng) {
  const std::size_t n = embeddings.size();
  const std::size_t n_lambda = targets.lambdas.size();
  const std::size_t hidden = params.hidden;
  if (n == 0 || n_lambda == 0) throw std::invalid_argument("gate_loss: empty batch");
  if (targets.margins.rows() != n_lambda || targets.margins.cols() != n || targets.labels.size() != n_lambda * n) {
    throw std::invalid_argument("gate_loss: target shape mismatch");
  }
  if (n_lambda < 2 && weights.w_mono > 0.0) throw std::invalid_argument("gate_loss: monotone term needs J >= 2");
  if (!std::is_sorted(targets.lambdas.begin(), targets.lambdas.end())) {
    throw std::invalid_argument("gate_loss: lambdas must be sorted ascending");
  }

  // Embedding branch, shared across lambdas.
  std::vector<LayerNormResult> ln;
  ln.reserve(n);
  Tensor2 h(n, hidden);
  for (std::size_t i = 0; i < n; ++i) {
    if (embeddings[i].size() != params.embedding_dim) throw std::invalid_argument("gate_loss: embedding dim mismatch");
    ln.push_back(layernorm(embeddings[i]));
    matvec(params.w1, ln.back().output, h.row(i));
  }
  std::vector<LambdaBranch> branches;
  branches.reserve(n_lambda);
  for (double lam : targets.lambdas) branches.push_back(lambda_branch(params, lam));

  // Pre-activations, masks and predicted margins, indexed (j, i).
  const std::size_t cells = n_lambda * n;
  std::vector<double> pre(cells * hidden);
  std::vector<double> mask;
  if (dropout_rng) mask = dropout_mask(cells * hidden, params.dropout, *dropout_rng);
  Tensor2 pred(n_lambda, n);
  for (std::size_t j = 0; j < n_lambda; ++j) {
    const auto& film = branches[j].film;
    for (std::size_t i = 0; i < n; ++i) {
      const auto hi = h.row(i);
      double* z = pre.data() + (j * n + i) * hidden;
      double out = params.b2[0];
      for (std::size_t k = 0; k < hidden; ++k) {
        z[k] = film[k] * hi[k] + film[hidden + k];
        const double a = gelu(z[k]);
        out += params.w2[k] * (mask.empty() ? a : a * mask[(j * n + i) * hidden + k]);
      }
      pred(j, i) = out;
    }
  }

  const double temp = params.temperature();
  const double cell_scale = 1.0 / static_cast<double>(cells);
  const double mono_scale = n_lambda > 1 ? 1.0 / static_cast<double>((n_lambda - 1) * n) : 0.0;
  GateLossBreakdown loss;
  Tensor2 dpred(n_lambda, n);
  double dtemp = 0.0;
  for (std::size_t j = 0; j < n_lambda; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pred(j, i);
      const int z = targets.labels[j * n + i];
      const double scaled = d / temp;
      loss.sign += cell_scale * bce_with_logits(scaled, z);
      const double dscaled = weights.w_sign * cell_scale * bce_with_logits_grad(scaled, z);
      dpred(j, i) += dscaled / temp;
      dtemp -= dscaled * d / (temp * temp);

      const double r = d - targets.margins(j, i);
      loss.margin += cell_scale * huber(r, weights.huber_beta);
      dpred(j, i) += weights.w_margin * cell_scale * huber_grad(r, weights.huber_beta);
    }
  }
  for (std::size_t j = 0; j + 1 < n_lambda; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = pred(j, i) - pred(j + 1, i);
      if (diff > 0.0) {
        loss.mono += mono_scale * diff;
        dpred(j, i) += weights.w_mono * mono_scale;
        dpred(j + 1, i) -= weights.w_mono * mono_scale;
      }
    }
  }
  loss.total = weights.w_sign * loss.sign + weights.w_margin * loss.margin + weights.w_mono * loss.mono;
  if (!grad) return loss;

  *grad = GateParams::zeros(params.embedding_dim, hidden);
  grad->dropout = params.dropout;
  grad->eta_t[0] = dtemp * sigmoid(params.eta_t[0]);
  Tensor2 dh(n, hidden);
  std::vector<double> dfilm(2 * hidden);
  for (std::size_t j = 0; j < n_lambda; ++j) {
    std::fill(dfilm.begin(), dfilm.end(), 0.0);
    const auto& film = branches[j].film;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = dpred(j, i);
      if (g == 0.0) continue;
      grad->b2[0] += g;
      const auto hi = h.row(i);
      auto dhi = dh.row(i);
      const double* z = pre.data() + (j * n + i) * hidden;
      for (std::size_t k = 0; k < hidden; ++k) {
        const double m = mask.empty() ? 1.0 : mask[(j * n + i) * hidden + k];
        grad->w2[k] += g * gelu(z[k]) * m;
        const double dz = g * params.w2[k] * m * gelu_grad(z[k]);
        dfilm[k] += dz * hi[k];
        dfilm[hidden + k] += dz;
        dhi[k] += dz * film[k];
      }
    }
    outer_acc(dfilm, branches[j].psi, grad->w_film);
  }
  for (std::size_t i = 0; i < n; ++i) outer_acc(dh.row(i), ln[i].output, grad->w1);
  return loss;
}

void GateConfig::validate() const {
  if (hidden == 0) throw std::invalid_argument("gate.hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("gate.dropout must lie in [0, 1)");
  if (epochs == 0 || batch_size == 0 || lambdas_per_step == 0) {
    throw std::invalid_argument("gate epochs, batch size and J must be positive");
  }
  if (!(lambda_min > 0.0 && lambda_max > lambda_min)) throw std::invalid_argument("gate lambda range is invalid");
  if (!(initial_temperature > kTemperatureFloor)) throw std::invalid_argument("gate.initial_temperature too small");
  weights.validate();
  optim.validate();
}

GateTargets make_gate_targets(std::vector<double> lambdas, std::span<const std::vector<double>> probs,
                              std::span<const std::vector<double>> costs, std::size_t local_index) {
  if (probs.size() != costs.size()) throw std::invalid_argument("make_gate_targets: size mismatch");
  std::sort(lambdas.begin(), lambdas.end());
  GateTargets t;
  t.margins = Tensor2(lambdas.size(), probs.size());
  t.labels.resize(lambdas.size() * probs.size());
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const auto tm = teacher_margin(probs[i], costs[i], lambdas[j], local_index);
      t.margins(j, i) = tm.margin;
      t.labels[j * probs.size() + i] = tm.label;
    }
  }
  t.lambdas = std::move(lambdas);
  return t;
}

namespace {

std::vector<double> sample_lambdas(const GateConfig& cfg, Rng& rng) {
  std::vector<double> out(cfg.lambdas_per_step);
  const double lo = std::log(cfg.lambda_min);
  const double hi = std::log(cfg.lambda_max);
  for (auto& l : out) l = std::exp(rng.uniform(lo, hi));
  return out;
}

}  // namespace

GateTrainingResult train_gate(const RoutingDataset& ds, const TeacherParams& teacher, const CostModel& cost_model,
                              const GateConfig& cfg, Rng& rng) {
  cfg.validate();
  if (teacher.model_ids != ds.model_ids || cost_model.model_ids() != ds.model_ids) {
    throw std::invalid_argument("train_gate: teacher, cost model and dataset disagree on the model list");
  }
  auto train = ds.indices(Split::train);
  const auto cal = ds.indices(Split::cal);
  if (train.empty()) throw std::invalid_argument("train_gate: empty training split");
  const auto probs = teacher_probabilities(teacher, ds);
  const std::size_t local = cost_model.local_index();

  // Fixed calibration-split targets for checkpoint selection.
  Rng eval_rng(rng.next_u64());
  std::vector<std::span<const double>> cal_emb;
  GateTargets cal_targets;
  if (!cal.empty()) {
    std::vector<std::vector<double>> cal_probs;
    std::vector<std::vector<double>> cal_costs;
    for (std::size_t idx : cal) {
      const auto& q = ds.queries[idx];
      cal_emb.emplace_back(q.embedding);
      cal_probs.push_back(probs[idx]);
      cal_costs.push_back(cost_model.normalized_costs(q.workload(), sample_state(cost_model.comm(), eval_rng)));
    }
    cal_targets = make_gate_targets(sample_lambdas(cfg, eval_rng), cal_probs, cal_costs, local);
  }

  GateTrainingResult result;
  GateParams params = GateParams::init(ds.embedding_dim, cfg.hidden, cfg.initial_temperature, rng);
  params.dropout = cfg.dropout;
  result.params = params;
  auto tensors = params.tensors();
  AdamWState state = make_adamw_state(tensors);
  GateParams grad;
  double best_cal = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = train.size(); i > 1; --i) {
      std::swap(train[i - 1], train[static_cast<std::size_t>(rng.uniform_index(i))]);
    }
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_size);
      std::vector<std::span<const double>> emb;
      std::vector<std::vector<double>> batch_probs;
      std::vector<std::vector<double>> batch_costs;
      auto lambdas = sample_lambdas(cfg, rng);
      for (std::size_t k = start; k < end; ++k) {
        const auto& q = ds.queries[train[k]];
        emb.emplace_back(q.embedding);
        batch_probs.push_back(probs[train[k]]);
        batch_costs.push_back(cost_model.normalized_costs(q.workload(), sample_state(cost_model.comm(), rng)));
      }
      const auto targets = make_gate_targets(std::move(lambdas), batch_probs, batch_costs, local);
      const auto loss = gate_loss(params, emb, targets, cfg.weights, &grad, &rng);
      adamw_step(tensors, std::as_const(grad).tensors(), state, cfg.optim);
      epoch_loss += loss.total;
      ++n_batches;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));

    if (cal.empty()) {
      result.params = params;
      result.selected_epoch = epoch;
      continue;
    }
    const double cal_loss = gate_loss(params, cal_emb, cal_targets, cfg.weights).total;
    result.cal_losses.push_back(cal_loss);
    if (cal_loss < best_cal) {
      best_cal = cal_loss;
      result.params = params;
      result.selected_epoch = epoch;
    }
  }
  return result;
}

std::string serialize_gate(const GateParams& params, const std::string& teacher_hash) {
  BinaryWriter w;
  w.str(kGateMagic);
  w.u32(kGateVersion);
  w.str(teacher_hash);
  w.str(kFilmLayout);
  w.u64(kLambdaFrequencies.size());
  for (double f : kLambdaFrequencies) w.f64(f);
  w.u64(params.embedding_dim);
  w.u64(params.hidden);
  w.f64(params.dropout);
  for (const auto* t : params.tensors()) w.tensor(*t);
  return w.bytes();
}

LoadedGate deserialize_gate(std::string_view blob) {
  BinaryReader r(blob);
  if (r.str() != kGateMagic) throw ArtifactError(ArtifactError::Kind::malformed, "not a gate checkpoint");
  if (r.u32() != kGateVersion) throw ArtifactError(ArtifactError::Kind::malformed, "unsupported gate version");
  LoadedGate out;
  out.teacher_hash = r.str();
  if (r.str() != kFilmLayout) throw ArtifactError(ArtifactError::Kind::malformed, "unsupported gate feature layout");
  const auto n_freq = r.u64();
  if (n_freq != kLambdaFrequencies.size()) throw ArtifactError(ArtifactError::Kind::malformed, "psi feature mismatch");
  for (double f : kLambdaFrequencies) {
    if (r.f64() != f) throw ArtifactError(ArtifactError::Kind::malformed, "psi frequency mismatch");
  }
  const auto dim = r.u64();
  const auto hidden = r.u64();
  out.params = GateParams::zeros(dim, hidden);
  out.params.dropout = r.f64();
  out.params.w1 = r.tensor(hidden, dim);
  out.params.w_film = r.tensor(2 * hidden, kLambdaFeatureDim);
  out.params.w2 = r.tensor(1, hidden);
  out.params.b2 = r.tensor(1, 1);
  out.params.eta_t = r.tensor(1, 1);
  if (!r.done()) throw ArtifactError(ArtifactError::Kind::malformed, "trailing bytes in gate checkpoint");
  return out;
}

}  // namespace cr2
