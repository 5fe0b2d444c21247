#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cr2/random.hpp"

namespace cr2 {

// Dense row-major float64 matrix. Vectors are stored as (n x 1).
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  void fill(double v);

  // Entries drawn from U(-bound, bound).
  static Tensor2 uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng);

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = W x  (W: rows x cols, x: cols, y: rows)
void matvec(const Tensor2& w, std::span<const double> x, std::span<double> y);
// x_grad += W^T y_grad
void matvec_transpose_acc(const Tensor2& w, std::span<const double> y_grad, std::span<double> x_grad);
// W_grad += y_grad x^T
void outer_acc(std::span<const double> y_grad, std::span<const double> x, Tensor2& w_grad);
double dot(std::span<const double> a, std::span<const double> b);

double sigmoid(double x);
double logit(double p);
double normal_cdf(double x);

// Exact erf-form GELU: x * Phi(x).
double gelu(double x);
double gelu_grad(double x);
std::vector<double> gelu(std::span<const double> x);

// log(1 + e^x), overflow/underflow safe.
double softplus(double x);
// Inverse of softplus for y > 0.
double softplus_inverse(double y);

// Binary cross-entropy on a logit, written as softplus((1 - 2y) * logit).
double bce_with_logits(double logit, int label);
// d/dlogit of bce_with_logits.
double bce_with_logits_grad(double logit, int label);

inline constexpr double kDefaultHuberBeta = 0.1;
double huber(double r, double beta = kDefaultHuberBeta);
double huber_grad(double r, double beta = kDefaultHuberBeta);

inline constexpr double kLayerNormEpsilon = 1e-5;

// Affine-free layer normalization.
struct LayerNormResult {
  std::vector<double> output;
  double inv_std = 0.0;
};
LayerNormResult layernorm(std::span<const double> x);
// Gradient w.r.t. the input given the forward output and upstream gradient.
std::vector<double> layernorm_backward(const LayerNormResult& forward, std::span<const double> output_grad);

// Inverted dropout mask: each entry is 0 or 1/(1-p).
std::vector<double> dropout_mask(std::size_t n, double p, Rng& rng);

struct AdamWConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 1.0;

  void validate() const;
};

struct AdamWState {
  std::vector<Tensor2> first_moment;
  std::vector<Tensor2> second_moment;
  std::int64_t step = 0;
};

AdamWState make_adamw_state(std::span<Tensor2* const> params);

// One AdamW update with decoupled weight decay. Gradients are clipped by their
// global L2 norm before the moment updates. Returns the pre-clip norm.
double adamw_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads,
                  AdamWState& state, const AdamWConfig& cfg);

double global_norm(std::span<const Tensor2* const> tensors);

// Flattened views used by the optimizer-independent tooling (gradient checks,
// hashing of parameter sets).
std::vector<double> flatten(std::span<const Tensor2* const> tensors);
void unflatten(std::span<const double> flat, std::span<Tensor2* const> tensors);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

// Central finite differences against an analytic gradient on a random subsample
// of at least `min_coordinates` coordinates (all coordinates when fewer exist).
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic_grad,
                           double h, Rng& rng, std::size_t min_coordinates = 200);

}  // namespace cr2
