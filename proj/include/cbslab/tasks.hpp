#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>

#include "cbslab/random.hpp"
#include "cbslab/spectral_problem.hpp"

namespace cbslab {

/// A trainable toy task: loss and gradient on a freshly drawn batch, plus
/// loss on a fixed held-out validation set.
template <typename Scalar = double>
class Task {
 public:
  virtual ~Task() = default;
  virtual Eigen::Index dim() const = 0;
  virtual VectorX<Scalar> initial_params(GaussianStream<Scalar>& rng) const = 0;
  /// Draws batch_size samples from rng, writes the gradient, returns the
  /// batch loss.
  virtual Scalar batch_loss_grad(const VectorX<Scalar>& params,
                                 Eigen::Index batch_size,
                                 GaussianStream<Scalar>& rng,
                                 VectorX<Scalar>& grad) const = 0;
  virtual Scalar validation_loss(const VectorX<Scalar>& params) const = 0;
};

/// Least squares on a spectral problem: loss is the mean squared residual,
/// the training stream draws fresh samples, and validation uses a fixed
/// held-out batch drawn once from its own seed.
template <typename Scalar = double>
class LeastSquaresTask : public Task<Scalar> {
 public:
  LeastSquaresTask(SpectralProblem<Scalar> problem,
                   Eigen::Index validation_size, std::uint64_t validation_seed)
      : problem_(std::move(problem)) {
    if (validation_size < 1)
      throw std::invalid_argument("validation size must be >= 1");
    GaussianStream<Scalar> rng(validation_seed);
    validation_ = sample_batch(problem_, validation_size, rng);
  }

  Eigen::Index dim() const override { return problem_.dim(); }

  VectorX<Scalar> initial_params(GaussianStream<Scalar>&) const override {
    return problem_.init_coeffs;
  }

  Scalar batch_loss_grad(const VectorX<Scalar>& params,
                         Eigen::Index batch_size, GaussianStream<Scalar>& rng,
                         VectorX<Scalar>& grad) const override {
    Batch<Scalar> batch = sample_batch(problem_, batch_size, rng);
    const VectorX<Scalar> residual =
        batch.covariates * params - batch.responses;
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(batch_size);
    grad.noalias() =
        Scalar(2) * inv_n * (batch.covariates.transpose() * residual);
    return residual.squaredNorm() * inv_n;
  }

  Scalar validation_loss(const VectorX<Scalar>& params) const override {
    const VectorX<Scalar> residual =
        validation_.covariates * params - validation_.responses;
    return residual.squaredNorm() /
           static_cast<Scalar>(validation_.size());
  }

  const SpectralProblem<Scalar>& problem() const { return problem_; }

 private:
  SpectralProblem<Scalar> problem_;
  Batch<Scalar> validation_;
};

/// Teacher-student regression through a single tanh hidden layer on
/// standard Gaussian inputs; a nonconvex smoke task. The teacher weights
/// and the validation set come from the task seed, so the task is fixed
/// across runs. Parameter layout: [vec(W) column-major | v], with
/// student output f(x) = v . tanh(W x).
template <typename Scalar = double>
class TeacherStudentTask : public Task<Scalar> {
 public:
  TeacherStudentTask(Eigen::Index input_dim, Eigen::Index hidden_dim,
                     Scalar noise_std, std::uint64_t task_seed,
                     Eigen::Index validation_size)
      : input_dim_(input_dim), hidden_dim_(hidden_dim), noise_std_(noise_std) {
    if (input_dim < 1 || hidden_dim < 1)
      throw std::invalid_argument("layer dimensions must be >= 1");
    if (validation_size < 1)
      throw std::invalid_argument("validation size must be >= 1");
    GaussianStream<Scalar> rng(task_seed);
    teacher_w_.resize(hidden_dim, input_dim);
    teacher_v_.resize(hidden_dim);
    const Scalar w_scale = Scalar(1) / std::sqrt(static_cast<Scalar>(input_dim));
    const Scalar v_scale =
        Scalar(1) / std::sqrt(static_cast<Scalar>(hidden_dim));
    for (Eigen::Index j = 0; j < input_dim; ++j)
      for (Eigen::Index i = 0; i < hidden_dim; ++i)
        teacher_w_(i, j) = w_scale * rng();
    for (Eigen::Index i = 0; i < hidden_dim; ++i)
      teacher_v_[i] = v_scale * rng();

    validation_x_.resize(validation_size, input_dim);
    validation_y_.resize(validation_size);
    for (Eigen::Index r = 0; r < validation_size; ++r) {
      for (Eigen::Index j = 0; j < input_dim; ++j)
        validation_x_(r, j) = rng();
      validation_y_[r] = noise_std * rng();
    }
    validation_y_ +=
        (validation_x_ * teacher_w_.transpose()).array().tanh().matrix() *
        teacher_v_;
  }

  Eigen::Index dim() const override {
    return hidden_dim_ * input_dim_ + hidden_dim_;
  }

  VectorX<Scalar> initial_params(GaussianStream<Scalar>& rng) const override {
    VectorX<Scalar> params(dim());
    const Scalar w_scale =
        Scalar(1) / std::sqrt(static_cast<Scalar>(input_dim_));
    const Scalar v_scale =
        Scalar(1) / std::sqrt(static_cast<Scalar>(hidden_dim_));
    for (Eigen::Index i = 0; i < hidden_dim_ * input_dim_; ++i)
      params[i] = w_scale * rng();
    for (Eigen::Index i = 0; i < hidden_dim_; ++i)
      params[hidden_dim_ * input_dim_ + i] = v_scale * rng();
    return params;
  }

  Scalar batch_loss_grad(const VectorX<Scalar>& params,
                         Eigen::Index batch_size, GaussianStream<Scalar>& rng,
                         VectorX<Scalar>& grad) const override {
    MatrixX<Scalar> x(batch_size, input_dim_);
    VectorX<Scalar> y(batch_size);
    // same per-sample draw order as the validation set: inputs, then noise
    for (Eigen::Index r = 0; r < batch_size; ++r) {
      for (Eigen::Index j = 0; j < input_dim_; ++j) x(r, j) = rng();
      y[r] = noise_std_ * rng();
    }
    y += (x * teacher_w_.transpose()).array().tanh().matrix() * teacher_v_;
    return loss_grad_on(params, x, y, &grad);
  }

  Scalar validation_loss(const VectorX<Scalar>& params) const override {
    return loss_grad_on(params, validation_x_, validation_y_, nullptr);
  }

 private:
  Scalar loss_grad_on(const VectorX<Scalar>& params, const MatrixX<Scalar>& x,
                      const VectorX<Scalar>& y,
                      VectorX<Scalar>* grad) const {
    if (params.size() != dim())
      throw std::invalid_argument("parameter length != task dimension");
    const Eigen::Index n = x.rows();
    const auto w = Eigen::Map<const MatrixX<Scalar>>(params.data(),
                                                     hidden_dim_, input_dim_);
    const auto v = params.segment(hidden_dim_ * input_dim_, hidden_dim_);
    const MatrixX<Scalar> hidden =
        (x * w.transpose()).array().tanh().matrix();          // n x h
    const VectorX<Scalar> residual = hidden * v - y;           // n
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    if (grad != nullptr) {
      grad->resize(dim());
      auto grad_w = Eigen::Map<MatrixX<Scalar>>(grad->data(), hidden_dim_,
                                                input_dim_);
      // d loss / d pre-activation: (residual v^T) o (1 - hidden^2)
      const MatrixX<Scalar> delta =
          ((residual * v.transpose()).array() *
           (Scalar(1) - hidden.array().square()))
              .matrix();
      grad_w.noalias() = Scalar(2) * inv_n * (delta.transpose() * x);
      grad->segment(hidden_dim_ * input_dim_, hidden_dim_).noalias() =
          Scalar(2) * inv_n * (hidden.transpose() * residual);
    }
    return residual.squaredNorm() * inv_n;
  }

  Eigen::Index input_dim_;
  Eigen::Index hidden_dim_;
  Scalar noise_std_;
  MatrixX<Scalar> teacher_w_;
  VectorX<Scalar> teacher_v_;
  MatrixX<Scalar> validation_x_;
  VectorX<Scalar> validation_y_;
};

}  // namespace cbslab
