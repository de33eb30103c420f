#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "floeseg/error.hpp"
#include "floeseg/rng.hpp"
#include "floeseg/tensor.hpp"

namespace floeseg::nn {

template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<Scalar>> m;
  std::vector<Tensor<Scalar>> v;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update over a parameter list. Moment tensors are created lazily
/// on the first call.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>*> params, const std::vector<const Tensor<Scalar>*>& grads,
               AdamState<Scalar>& state) {
  if (params.size() != grads.size()) throw Error(ErrorCode::ShapeMismatch, "parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || state.m[i].shape() != params[i]->shape()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient " + std::to_string(i) + " shape differs from its parameter");
    }
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(state.beta1);
  const Scalar b2 = static_cast<Scalar>(state.beta2);
  const Scalar correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const Scalar correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const Scalar lr = static_cast<Scalar>(state.learning_rate);
  const Scalar eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i]->values().array();
    auto m = state.m[i].values().array();
    auto v = state.v[i].values().array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    params[i]->values().array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

/// He-normal weights: Normal(0, 2 / fan_in) drawn from `rng`.
template <typename Scalar>
Tensor<Scalar> init_params(std::vector<Eigen::Index> shape, Eigen::Index fan_in, Rng& rng) {
  if (fan_in < 1) throw Error(ErrorCode::BadConfig, "fan_in must be at least 1");
  Tensor<Scalar> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace floeseg::nn
