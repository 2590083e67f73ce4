// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mercatran/nn/tape.hpp"

namespace mercatran::nn {

// Warmup then inverse-sqrt decay, scaled by `factor`, with an additional
// step decay of `gamma` every `decay_epochs` epochs.
struct NoamSchedule {
  double factor = 1.0;
  int model_dim = 64;
  int warmup_steps = 4000;
  int decay_epochs = 25;
  double gamma = 1.0;

  // step is 1-based.
  double Rate(std::int64_t step, int epoch) const {
    const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
    const double warm = static_cast<double>(std::max(warmup_steps, 1));
    const double base = factor / std::sqrt(static_cast<double>(model_dim)) *
                        std::min(1.0 / std::sqrt(s), s / (warm * std::sqrt(warm)));
    const int decays = decay_epochs > 0 ? epoch / decay_epochs : 0;
    return base * std::pow(gamma, decays);
  }
};

template <typename Scalar>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
};

// One bias-corrected Adam update with learning rate `lr`. Moment buffers are
// created on the first call; later calls must pass the same parameter list.
template <typename Scalar>
void AdamStep(std::span<Parameter<Scalar>* const> params, AdamState<Scalar>& state, double lr) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw Error(ErrorCode::kShapeMismatch, "adam: parameter count changed");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto step_size = static_cast<Scalar>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<Scalar>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<Scalar>& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || state.m[i].rows() != p.value.rows() ||
        state.m[i].cols() != p.value.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "adam: shape mismatch for " + p.name);
    }
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    const auto g = p.grad.array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p.value.array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
}

}  // namespace mercatran::nn
