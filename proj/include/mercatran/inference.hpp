// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Gradient-free entry points over a frozen model. All functions only read the
// model, so one instance can serve many threads.

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "mercatran/model.hpp"

namespace mercatran {

// Unit item embeddings, one row per item.
template <typename Scalar>
nn::Matrix<Scalar> EncodeItems(const MercatranModel<Scalar>& model, std::span<const TokenizedItem> items) {
  if (items.empty()) return nn::Matrix<Scalar>(0, model.config().d_model);
  nn::Tape<Scalar> tape;
  Forward<Scalar> fwd(tape, model);
  std::vector<const TokenizedItem*> ptrs;
  for (const auto& it : items) ptrs.push_back(&it);
  return fwd.ItemTower(ptrs).value();
}

template <typename Scalar>
nn::Matrix<Scalar> EncodeItem(const MercatranModel<Scalar>& model, const TokenizedItem& item) {
  return EncodeItems(model, std::span<const TokenizedItem>(&item, 1));
}

namespace inference_detail {

template <typename Scalar>
void CheckHistory(const MercatranModel<Scalar>& model, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kEmptyHistory, "history has no events");
  if (static_cast<int>(n) > model.config().max_history) {
    throw Error(ErrorCode::kHistoryTooLong,
                std::to_string(n) + " events > max_history " + std::to_string(model.config().max_history));
  }
}

template <typename Scalar>
nn::Var<Scalar> Memory(Forward<Scalar>& fwd, std::span<const TokenizedItem> history) {
  std::vector<std::vector<const TokenizedItem*>> h(1);
  for (const auto& it : history) h[0].push_back(&it);
  const int n = static_cast<int>(history.size());
  return fwd.Encoder(fwd.HistoryInput(h, n), {n}, n);
}

}  // namespace inference_detail

// Encoder memory [|history|, d].
template <typename Scalar>
nn::Matrix<Scalar> EncodeHistory(const MercatranModel<Scalar>& model, std::span<const TokenizedItem> history) {
  inference_detail::CheckHistory(model, history.size());
  nn::Tape<Scalar> tape;
  Forward<Scalar> fwd(tape, model);
  return inference_detail::Memory(fwd, history).value();
}

// Teacher-forced decoding: input rows are [BOS, t_1, ..., t_{S-1}], so the
// prediction at step s only sees targets before s. `targets` is [S, d].
template <typename Scalar>
nn::Matrix<Scalar> DecodeTeacherForced(const MercatranModel<Scalar>& model, const nn::Matrix<Scalar>& memory,
                                       const nn::Matrix<Scalar>& targets) {
  const int steps = model.config().forecast_steps;
  const int d = model.config().d_model;
  if (targets.rows() != steps || targets.cols() != d || memory.cols() != d || memory.rows() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "decode_teacher_forced expects [S, d] targets and [n, d] memory");
  }
  nn::Tape<Scalar> tape;
  Forward<Scalar> fwd(tape, model);
  const int n = static_cast<int>(memory.rows());
  auto prefix = tape.Borrow(targets);
  auto prev = nn::GatherRows(prefix, [&] {
    std::vector<Eigen::Index> rows;
    for (int s = 0; s + 1 < steps; ++s) rows.push_back(s);
    return rows;
  }());
  return fwd.Decoder(fwd.DecoderInput(prev, 1, steps), steps, tape.Borrow(memory), {n}, n).value();
}

// Autoregressive query generation: step 1 decodes from [BOS]; step s feeds
// back the model's own outputs for steps < s. Returns [S, d] unit rows.
template <typename Scalar>
nn::Matrix<Scalar> GenerateQueryVectors(const MercatranModel<Scalar>& model, std::span<const TokenizedItem> history) {
  inference_detail::CheckHistory(model, history.size());
  const int steps = model.config().forecast_steps;
  const int d = model.config().d_model;
  nn::Tape<Scalar> tape;
  Forward<Scalar> fwd(tape, model);
  const int n = static_cast<int>(history.size());
  auto memory = inference_detail::Memory(fwd, history);
  nn::Matrix<Scalar> out(steps, d);
  for (int s = 1; s <= steps; ++s) {
    auto prev = tape.Constant(out.topRows(s - 1));
    auto pred = fwd.Decoder(fwd.DecoderInput(prev, 1, s), s, memory, {n}, n);
    out.row(s - 1) = pred.value().row(s - 1);
  }
  return out;
}

// Symmetric contrastive loss on plain matrices. Rows of both inputs must be
// unit norm to within 1e-3 (Error kNonUnitRows otherwise).
template <typename Scalar>
Scalar ContrastiveStepLoss(const nn::Matrix<Scalar>& predictions, const nn::Matrix<Scalar>& targets, Scalar temperature) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols() || predictions.rows() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "contrastive loss needs equal [B, d] inputs with B >= 1");
  }
  if (!(temperature > Scalar(0))) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  for (const auto* m : {&predictions, &targets}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      if (std::abs(m->row(i).norm() - Scalar(1)) > Scalar(1e-3)) {
        throw Error(ErrorCode::kNonUnitRows, "row " + std::to_string(i) + " is not unit norm");
      }
    }
  }
  nn::Tape<Scalar> tape;
  return ContrastiveLoss(tape.Borrow(predictions), tape.Borrow(targets), temperature).value()(0, 0);
}

}  // namespace mercatran
