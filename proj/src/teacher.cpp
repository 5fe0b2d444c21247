#include "cr2/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cr2/artifact.hpp"

namespace cr2 {

namespace {

constexpr std::string_view kTeacherMagic = "CR2TEACH";
constexpr std::uint32_t kTeacherVersion = 1;

// Preference under the teacher utility with the documented tie rules.
bool prefers(std::size_t cand, std::size_t best, std::span<const double> utility, std::span<const double> costs,
             std::size_t local_index) {
  if (utility[cand] != utility[best]) return utility[cand] > utility[best];
  if (cand == local_index) return true;
  if (best == local_index) return false;
  if (costs[cand] != costs[best]) return costs[cand] < costs[best];
  return cand < best;
}

}  // namespace

TeacherParams TeacherParams::zeros(std::size_t dim, std::size_t hidden, std::vector<std::string> model_ids) {
  TeacherParams p;
  p.embedding_dim = dim;
  p.hidden = hidden;
  p.model_ids = std::move(model_ids);
  p.heads.resize(p.model_ids.size());
  for (auto& h : p.heads) {
    h.w1 = Tensor2(hidden, dim);
    h.b1 = Tensor2(hidden, 1);
    h.w2 = Tensor2(1, hidden);
    h.b2 = Tensor2(1, 1);
  }
  return p;
}

TeacherParams TeacherParams::init(std::size_t dim, std::size_t hidden, std::vector<std::string> model_ids, Rng& rng) {
  TeacherParams p = zeros(dim, hidden, std::move(model_ids));
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(dim));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& h : p.heads) {
    h.w1 = Tensor2::uniform(hidden, dim, in_bound, rng);
    h.b1 = Tensor2::uniform(hidden, 1, in_bound, rng);
    h.w2 = Tensor2::uniform(1, hidden, hid_bound, rng);
    h.b2 = Tensor2::uniform(1, 1, hid_bound, rng);
  }
  return p;
}

std::vector<Tensor2*> TeacherParams::tensors() {
  std::vector<Tensor2*> out;
  for (auto& h : heads) out.insert(out.end(), {&h.w1, &h.b1, &h.w2, &h.b2});
  return out;
}

std::vector<const Tensor2*> TeacherParams::tensors() const {
  std::vector<const Tensor2*> out;
  for (const auto& h : heads) out.insert(out.end(), {&h.w1, &h.b1, &h.w2, &h.b2});
  return out;
}

void TeacherLossWeights::validate() const {
  if (w_cls < 0.0 || w_rank < 0.0) throw std::invalid_argument("teacher loss weights must be non-negative");
  if (w_cls == 0.0 && w_rank == 0.0) throw std::invalid_argument("teacher loss weights must not both be zero");
}

void TeacherConfig::validate() const {
  if (hidden == 0) throw std::invalid_argument("teacher.hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("teacher.dropout must lie in [0, 1)");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("teacher epochs and batch size must be positive");
  weights.validate();
  optim.validate();
}

TeacherOutput teacher_forward(const TeacherParams& params, std::span<const double> embedding) {
  if (embedding.size() != params.embedding_dim) throw std::invalid_argument("teacher_forward: embedding dim mismatch");
  TeacherOutput out;
  std::vector<double> z(params.hidden);
  for (const auto& h : params.heads) {
    matvec(h.w1, embedding, z);
    double logit = h.b2[0];
    for (std::size_t k = 0; k < params.hidden; ++k) logit += h.w2[k] * gelu(z[k] + h.b1[k]);
    out.logits.push_back(logit);
    out.probs.push_back(sigmoid(logit));
  }
  return out;
}

TeacherLossBreakdown teacher_loss(const TeacherParams& params, const LabeledBatch& batch,
                                  const TeacherLossWeights& weights, TeacherParams* grad, Rng* dropout_rng) {
  const std::size_t n = batch.embeddings.size();
  const std::size_t n_models = params.heads.size();
  const std::size_t hidden = params.hidden;
  if (n == 0 || batch.labels.size() != n) throw std::invalid_argument("teacher_loss: empty or inconsistent batch");

  // B': queries with at least one correct and one incorrect model.
  std::size_t n_ranked = 0;
  for (const auto& y : batch.labels) {
    if (y.size() != n_models) throw std::invalid_argument("teacher_loss: label size mismatch");
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
    if (pos > 0 && pos < n_models) ++n_ranked;
  }

  if (grad) {
    *grad = TeacherParams::zeros(params.embedding_dim, hidden, params.model_ids);
  }

  const double bce_scale = 1.0 / static_cast<double>(n * n_models);
  TeacherLossBreakdown loss;
  std::vector<double> pre(n_models * hidden);
  std::vector<double> act(n_models * hidden);
  std::vector<double> mask(n_models * hidden, 1.0);
  std::vector<double> logits(n_models);
  std::vector<double> dlogit(n_models);
  std::vector<double> dz(hidden);

  for (std::size_t i = 0; i < n; ++i) {
    const auto e = batch.embeddings[i];
    const auto y = batch.labels[i];
    if (e.size() != params.embedding_dim) throw std::invalid_argument("teacher_loss: embedding dim mismatch");
    if (dropout_rng) mask = dropout_mask(n_models * hidden, params.dropout, *dropout_rng);

    for (std::size_t m = 0; m < n_models; ++m) {
      const auto& h = params.heads[m];
      std::span<double> z(pre.data() + m * hidden, hidden);
      matvec(h.w1, e, z);
      double logit = h.b2[0];
      for (std::size_t k = 0; k < hidden; ++k) {
        z[k] += h.b1[k];
        act[m * hidden + k] = gelu(z[k]);
        logit += h.w2[k] * act[m * hidden + k] * mask[m * hidden + k];
      }
      logits[m] = logit;
    }

    std::fill(dlogit.begin(), dlogit.end(), 0.0);
    for (std::size_t m = 0; m < n_models; ++m) {
      loss.bce += bce_scale * bce_with_logits(logits[m], y[m]);
      dlogit[m] += weights.w_cls * bce_scale * bce_with_logits_grad(logits[m], y[m]);
    }

    const auto n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
    if (n_pos > 0 && n_pos < n_models) {
      const double pair_scale =
          1.0 / (static_cast<double>(n_pos * (n_models - n_pos)) * static_cast<double>(n_ranked));
      for (std::size_t mp = 0; mp < n_models; ++mp) {
        if (!y[mp]) continue;
        for (std::size_t mn = 0; mn < n_models; ++mn) {
          if (y[mn]) continue;
          const double diff = logits[mn] - logits[mp];
          loss.rank += pair_scale * softplus(diff);
          const double g = weights.w_rank * pair_scale * sigmoid(diff);
          dlogit[mn] += g;
          dlogit[mp] -= g;
        }
      }
    }

    if (!grad) continue;
    for (std::size_t m = 0; m < n_models; ++m) {
      const auto& h = params.heads[m];
      auto& g = grad->heads[m];
      const double dl = dlogit[m];
      g.b2[0] += dl;
      for (std::size_t k = 0; k < hidden; ++k) {
        const std::size_t idx = m * hidden + k;
        g.w2[k] += dl * act[idx] * mask[idx];
        dz[k] = dl * h.w2[k] * mask[idx] * gelu_grad(pre[idx]);
        g.b1[k] += dz[k];
      }
      outer_acc(dz, e, g.w1);
    }
  }
  loss.total = weights.w_cls * loss.bce + weights.w_rank * loss.rank;
  return loss;
}

std::vector<double> teacher_utility(std::span<const double> probs, std::span<const double> costs, double lambda) {
  if (probs.size() != costs.size()) throw std::invalid_argument("teacher_utility: size mismatch");
  if (lambda < 0.0) throw std::invalid_argument("teacher_utility: lambda must be non-negative");
  std::vector<double> u(probs.size());
  for (std::size_t m = 0; m < probs.size(); ++m) u[m] = probs[m] - lambda * costs[m];
  return u;
}

std::size_t select_among(std::span<const double> probs, std::span<const double> costs, double lambda,
                         std::span<const std::size_t> candidates, std::size_t local_index) {
  if (candidates.empty()) throw std::invalid_argument("select_among: empty candidate set");
  const auto u = teacher_utility(probs, costs, lambda);
  std::size_t best = candidates[0];
  for (std::size_t c : candidates.subspan(1)) {
    if (prefers(c, best, u, costs, local_index)) best = c;
  }
  return best;
}

std::size_t full_info_select(std::span<const double> probs, std::span<const double> costs, double lambda,
                             std::size_t local_index) {
  std::vector<std::size_t> all(probs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return select_among(probs, costs, lambda, all, local_index);
}

TeacherMargin teacher_margin(std::span<const double> probs, std::span<const double> costs, double lambda,
                             std::size_t local_index) {
  if (probs.size() < 2) throw std::invalid_argument("teacher_margin: pool has no edge model");
  if (probs.size() != costs.size() || local_index >= probs.size())
    throw std::invalid_argument("teacher_margin: size mismatch");
  if (!(lambda >= 0.0)) throw std::invalid_argument("teacher_margin: lambda must be >= 0");
  // Pairwise form min_m (p0 - pm) + lambda (cm - c0). Subtracting two rounded
  // utilities jitters by an ulp as lambda grows; this form stays exactly
  // non-decreasing in lambda whenever the local cost is the smallest.
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (m == local_index) continue;
    margin = std::min(margin, (probs[local_index] - probs[m]) + lambda * (costs[m] - costs[local_index]));
  }
  TeacherMargin out;
  out.margin = margin;
  out.label = out.margin >= 0.0 ? 1 : 0;
  return out;
}

TeacherTrainingResult train_teacher(const RoutingDataset& ds, const TeacherConfig& cfg, Rng& rng) {
  cfg.validate();
  auto train = ds.indices(Split::train);
  if (train.empty()) throw std::invalid_argument("train_teacher: empty training split");

  TeacherTrainingResult result;
  result.params = TeacherParams::init(ds.embedding_dim, cfg.hidden, ds.model_ids, rng);
  result.params.dropout = cfg.dropout;
  auto params = result.params.tensors();
  AdamWState state = make_adamw_state(params);
  TeacherParams grad;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = train.size(); i > 1; --i) {
      std::swap(train[i - 1], train[static_cast<std::size_t>(rng.uniform_index(i))]);
    }
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train.size(), start + cfg.batch_size);
      LabeledBatch batch;
      for (std::size_t k = start; k < end; ++k) {
        const auto& q = ds.queries[train[k]];
        batch.embeddings.emplace_back(q.embedding);
        batch.labels.emplace_back(q.correct);
      }
      const auto loss = teacher_loss(result.params, batch, cfg.weights, &grad, &rng);
      const auto grads = std::as_const(grad).tensors();
      adamw_step(params, grads, state, cfg.optim);
      epoch_loss += loss.total;
      ++n_batches;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return result;
}

std::vector<std::vector<double>> teacher_probabilities(const TeacherParams& params, const RoutingDataset& ds) {
  std::vector<std::vector<double>> out;
  out.reserve(ds.queries.size());
  for (const auto& q : ds.queries) out.push_back(teacher_forward(params, q.embedding).probs);
  return out;
}

std::string serialize_teacher(const TeacherParams& params, const std::string& config_hash) {
  BinaryWriter w;
  w.str(kTeacherMagic);
  w.u32(kTeacherVersion);
  w.str(config_hash);
  w.u64(params.embedding_dim);
  w.u64(params.hidden);
  w.f64(params.dropout);
  w.u64(params.model_ids.size());
  for (const auto& id : params.model_ids) w.str(id);
  for (const auto* t : params.tensors()) w.tensor(*t);
  return w.bytes();
}

LoadedTeacher deserialize_teacher(std::string_view blob, const std::vector<std::string>& expected_models) {
  BinaryReader r(blob);
  if (r.str() != kTeacherMagic) throw ArtifactError(ArtifactError::Kind::malformed, "not a teacher checkpoint");
  if (r.u32() != kTeacherVersion) throw ArtifactError(ArtifactError::Kind::malformed, "unsupported teacher version");
  LoadedTeacher out;
  out.config_hash = r.str();
  const auto dim = r.u64();
  const auto hidden = r.u64();
  const double dropout = r.f64();
  const auto n_models = r.u64();
  std::vector<std::string> ids;
  for (std::uint64_t i = 0; i < n_models && i < 4096; ++i) ids.push_back(r.str());
  if (ids != expected_models) {
    throw ArtifactError(ArtifactError::Kind::hash_mismatch, "teacher checkpoint model list does not match the dataset");
  }
  out.params = TeacherParams::zeros(dim, hidden, ids);
  out.params.dropout = dropout;
  for (auto& h : out.params.heads) {
    h.w1 = r.tensor(hidden, dim);
    h.b1 = r.tensor(hidden, 1);
    h.w2 = r.tensor(1, hidden);
    h.b2 = r.tensor(1, 1);
  }
  if (!r.done()) throw ArtifactError(ArtifactError::Kind::malformed, "trailing bytes in teacher checkpoint");
  return out;
}

}  // namespace cr2
