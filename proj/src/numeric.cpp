#include "cr2/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace cr2 {

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor2 Tensor2::uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor2 t(rows, cols);
  for (auto& v : t.data_) v = rng.uniform(-bound, bound);
  return t;
}

void matvec(const Tensor2& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_transpose_acc(const Tensor2& w, std::span<const double> y_grad, std::span<double> x_grad) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) x_grad[c] += g * row[c];
  }
}

void outer_acc(std::span<const double> y_grad, std::span<const double> x, Tensor2& w_grad) {
  for (std::size_t r = 0; r < w_grad.rows(); ++r) {
    const double g = y_grad[r];
    if (g == 0.0) continue;
    auto row = w_grad.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += g * x[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu(double x) { return x * normal_cdf(x); }

double gelu_grad(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return normal_cdf(x) + x * pdf;
}

std::vector<double> gelu(std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return gelu(v); });
  return out;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw std::domain_error("softplus_inverse: argument must be positive");
  if (y > 30.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

double bce_with_logits(double logit, int label) {
  return softplus((1.0 - 2.0 * label) * logit);
}

double bce_with_logits_grad(double logit, int label) { return sigmoid(logit) - label; }

double huber(double r, double beta) {
  const double a = std::abs(r);
  if (a <= beta) return 0.5 * r * r;
  return beta * (a - 0.5 * beta);
}

double huber_grad(double r, double beta) {
  if (std::abs(r) <= beta) return r;
  return r > 0.0 ? beta : -beta;
}

LayerNormResult layernorm(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("layernorm: input length must be >= 2");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  LayerNormResult res;
  res.inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  res.output.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) res.output[i] = (x[i] - mean) * res.inv_std;
  return res;
}

std::vector<double> layernorm_backward(const LayerNormResult& forward, std::span<const double> output_grad) {
  const auto& y = forward.output;
  const double n = static_cast<double>(y.size());
  double mean_g = 0.0;
  double mean_gy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mean_g += output_grad[i];
    mean_gy += output_grad[i] * y[i];
  }
  mean_g /= n;
  mean_gy /= n;
  std::vector<double> dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    dx[i] = forward.inv_std * (output_grad[i] - mean_g - y[i] * mean_gy);
  }
  return dx;
}

std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng) {
  if (p <= 0.0) return std::vector<double>(n, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(n);
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

void AdamWConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adamw: learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("adamw: weight_decay must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adamw: betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adamw: epsilon must be positive");
  if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("adamw: grad_clip_norm must be positive");
}

AdamWState make_adamw_state(std::span<Tensor2* const> params) {
  AdamWState state;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->rows(), p->cols());
    state.second_moment.emplace_back(p->rows(), p->cols());
  }
  return state;
}

double global_norm(std::span<const Tensor2* const> tensors) {
  double sq = 0.0;
  for (const auto* t : tensors) {
    for (double v : t->values()) sq += v * v;
  }
  return std::sqrt(sq);
}

double adamw_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads,
                  AdamWState& state, const AdamWConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw std::invalid_argument("adamw_step: tensor count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k]) || !params[k]->same_shape(state.first_moment[k]) ||
        !params[k]->same_shape(state.second_moment[k])) {
      throw std::invalid_argument("adamw_step: shape mismatch");
    }
  }
  if (state.step < 0) throw std::invalid_argument("adamw_step: negative step counter");

  const double norm = global_norm(grads);
  const double clip = norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : 1.0;

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    const auto g = grads[k]->values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] = p[i] * decay - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  return norm;
}

std::vector<double> flatten(std::span<const Tensor2* const> tensors) {
  std::vector<double> flat;
  for (const auto* t : tensors) flat.insert(flat.end(), t->values().begin(), t->values().end());
  return flat;
}

void unflatten(std::span<const double> flat, std::span<Tensor2* const> tensors) {
  std::size_t offset = 0;
  for (auto* t : tensors) {
    auto dst = t->values();
    if (offset + dst.size() > flat.size()) throw std::invalid_argument("unflatten: size mismatch");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
  if (offset != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic_grad,
                           double h, Rng& rng, std::size_t min_coordinates) {
  if (params.size() != analytic_grad.size()) throw std::invalid_argument("grad_check: size mismatch");
  if (!(h >= 1e-6 && h <= 1e-4)) throw std::invalid_argument("grad_check: h must lie in [1e-6, 1e-4]");

  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coords.size() > min_coordinates) {
    // Partial Fisher-Yates: first `min_coordinates` entries become the sample.
    for (std::size_t i = 0; i < min_coordinates; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(min_coordinates);
  }

  std::vector<double> x(params.begin(), params.end());
  GradCheckResult result;
  for (std::size_t idx : coords) {
    const double orig = x[idx];
    x[idx] = orig + h;
    const double up = loss(x);
    x[idx] = orig - h;
    const double down = loss(x);
    x[idx] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw std::domain_error("grad_check: non-finite loss");
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic_grad[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace cr2
