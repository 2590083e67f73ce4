// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "mercatran/nn/tape.hpp"

namespace mercatran::nn {

// Builds a scalar program on the given tape from the input variable.
using ScalarProgram = std::function<Var<double>(Tape<double>&, const Var<double>&)>;

// Max elementwise relative error |a - b| / max(|a|, |b|, 1e-8) between the
// tape gradient and central finite differences with step h.
inline double GradCheck(const ScalarProgram& f, const Matrix<double>& x, double h = 1e-5) {
  Matrix<double> analytic;
  {
    Tape<double> tape;
    auto in = tape.Input(x);
    auto out = f(tape, in);
    tape.Backward(out);
    analytic = tape.has_grad(in.id) ? tape.grad(in.id) : Matrix<double>::Zero(x.rows(), x.cols());
  }
  auto eval = [&f](const Matrix<double>& at) {
    Tape<double> tape;
    auto in = tape.Constant(at);
    return f(tape, in).value()(0, 0);
  };
  double worst = 0.0;
  Matrix<double> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = eval(probe);
    probe.data()[i] = orig - h;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mercatran::nn
