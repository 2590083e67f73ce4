// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Parameters of the three-tower model and its differentiable forward pass.
//
//   item tower     token embeddings -> mean pool -> N x [FFN, residual, LN]
//                  -> L2 normalise
//   history tower  pooled event content + sinusoidal positions
//                  -> N x transformer encoder block (no causal mask)
//   decoder tower  [BOS, t1, ..., t_{S-1}] + positions -> N x decoder block
//                  (causal self-attention, cross-attention to the history
//                  memory) -> L2 normalise
//
// All three towers share the token embedding table. Everything here is
// templated on the scalar so the same code runs in float for training and in
// double for gradient checks.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mercatran/error.hpp"
#include "mercatran/nn/ops.hpp"
#include "mercatran/nn/tape.hpp"
#include "mercatran/preprocess.hpp"
#include "mercatran/rng.hpp"

namespace mercatran {

struct ModelConfig {
  int d_model = 64;
  int d_ff = 1024;
  int heads = 8;
  int blocks = 2;
  int max_history = kMaxHistory;
  int forecast_steps = kForecastSteps;
  int max_tokens = kDefaultMaxTokens;
  int vocab_size = kDefaultVocabLimit;
  int batch_size = 256;
  double temperature = 0.07;
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;
  // Learning-rate schedule (see nn::NoamSchedule).
  double lr_factor = 1.0;
  int warmup_steps = 4000;
  int decay_epochs = 25;
  double decay_gamma = 1.0;
  std::uint64_t seed = 1234;

  bool operator==(const ModelConfig&) const = default;
};

// Throws Error(kInvalidConfig).
void ValidateModelConfig(const ModelConfig& c);
nlohmann::json ModelConfigToJson(const ModelConfig& c);
// Missing keys keep their defaults.
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

template <typename Scalar>
struct LinearParams {
  nn::Parameter<Scalar> w;  // [in, out]
  nn::Parameter<Scalar> b;  // [1, out]; empty when the layer has no bias
};

template <typename Scalar>
struct NormParams {
  nn::Parameter<Scalar> gamma;
  nn::Parameter<Scalar> beta;
};

template <typename Scalar>
struct FfnParams {
  LinearParams<Scalar> up;
  LinearParams<Scalar> down;
};

template <typename Scalar>
struct AttentionParams {
  LinearParams<Scalar> q, k, v, o;
};

template <typename Scalar>
struct ItemBlockParams {
  FfnParams<Scalar> ffn;
  NormParams<Scalar> norm;
};

template <typename Scalar>
struct EncoderBlockParams {
  AttentionParams<Scalar> self_attn;
  NormParams<Scalar> norm1;
  FfnParams<Scalar> ffn;
  NormParams<Scalar> norm2;
};

template <typename Scalar>
struct DecoderBlockParams {
  AttentionParams<Scalar> self_attn;
  NormParams<Scalar> norm1;
  AttentionParams<Scalar> cross_attn;
  NormParams<Scalar> norm2;
  FfnParams<Scalar> ffn;
  NormParams<Scalar> norm3;
};

template <typename Scalar>
class MercatranModel {
 public:
  using Mat = nn::Matrix<Scalar>;

  // Xavier-uniform projections, N(0, 1/sqrt(d)) embeddings and BOS, zero
  // biases, unit LayerNorm gains.
  explicit MercatranModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Stable order; names are unique and used as checkpoint keys.
  std::vector<nn::Parameter<Scalar>*> Parameters();
  std::vector<const nn::Parameter<Scalar>*> Parameters() const;

  template <typename Other>
  MercatranModel<Other> Cast() const;

  // [max(max_history, forecast_steps), d] sinusoidal table.
  const Mat& positional() const { return positional_; }

  nn::Parameter<Scalar> embedding;  // [vocab, d]
  nn::Parameter<Scalar> bos;        // [1, d]
  std::vector<ItemBlockParams<Scalar>> item_blocks;
  std::vector<EncoderBlockParams<Scalar>> encoder_blocks;
  std::vector<DecoderBlockParams<Scalar>> decoder_blocks;

 private:
  template <typename Fn>
  void ForEach(Fn&& fn);

  ModelConfig config_;
  Mat positional_;
};

// Forward context -----------------------------------------------------------------

// Binds one model to one tape. With a mutable model and `track_grads`, every
// parameter becomes a differentiable leaf (gradients land in Parameter::grad);
// otherwise parameters are borrowed read-only and the model may be shared
// across threads.
template <typename Scalar>
class Forward {
 public:
  using V = nn::Var<Scalar>;

  Forward(nn::Tape<Scalar>& tape, MercatranModel<Scalar>& model, bool track_grads, CounterRng* dropout_rng)
      : tape_(tape), model_(model), mutable_model_(track_grads ? &model : nullptr), rng_(dropout_rng) {}

  Forward(nn::Tape<Scalar>& tape, const MercatranModel<Scalar>& model) : tape_(tape), model_(model) {}

  nn::Tape<Scalar>& tape() { return tape_; }
  const MercatranModel<Scalar>& model() const { return model_; }
  const ModelConfig& config() const { return model_.config(); }
  bool training() const { return rng_ != nullptr && config().dropout > 0.0; }

  V P(const nn::Parameter<Scalar>& p);
  // Uses `v` wherever `p` is read (gradient checks against one parameter).
  void Bind(const nn::Parameter<Scalar>& p, const V& v) { leaves_.insert_or_assign(&p, v); }
  V Linear(const V& x, const LinearParams<Scalar>& lin);
  V Ffn(const V& x, const FfnParams<Scalar>& ffn);
  V Attention(const V& x, const V& memory, const AttentionParams<Scalar>& att, const nn::AttentionLayout& layout);
  V Norm(const V& x, const NormParams<Scalar>& norm);
  V Drop(const V& x);

  // Mean of token embeddings per item; rows follow `items`.
  V PooledContent(std::span<const TokenizedItem* const> items);

  // Unit-norm item embeddings, one row per item.
  V ItemTower(std::span<const TokenizedItem* const> items);

  // Padded batch of histories: example b occupies rows [b * stride,
  // b * stride + lengths[b]); remaining rows are zero content.
  V HistoryInput(std::span<const std::vector<const TokenizedItem*>> histories, int stride);

  // Encoder stack over a padded input (content already scaled, no
  // positions). Adds positions, runs the blocks without causal mask.
  V Encoder(const V& input, const std::vector<int>& lengths, int stride);

  // Decoder over a [batch * steps, d] input (already scaled), attending to
  // `memory`. Returns L2-normalised predictions.
  V Decoder(const V& input, int steps, const V& memory, const std::vector<int>& memory_lengths, int memory_stride);

  // Decoder input rows [BOS, prev_0, ..., prev_{steps-2}] per example, where
  // `previous` holds `steps - 1` rows per example (or zero rows when steps == 1).
  V DecoderInput(const V& previous, int batch, int steps);

 private:
  nn::Tape<Scalar>& tape_;
  const MercatranModel<Scalar>& model_;
  MercatranModel<Scalar>* mutable_model_ = nullptr;
  CounterRng* rng_ = nullptr;
  std::unordered_map<const nn::Parameter<Scalar>*, V> leaves_;
};

// Symmetric in-batch contrastive loss between row-aligned predictions and
// targets: L = P T^T / tau, loss = (CE(rows of L) + CE(columns of L)) / 2.
template <typename Scalar>
nn::Var<Scalar> ContrastiveLoss(const nn::Var<Scalar>& predictions, const nn::Var<Scalar>& targets, Scalar temperature) {
  auto logits = nn::Scale(nn::MatMulNT(predictions, targets), Scalar(1) / temperature);
  auto rows = nn::CrossEntropyDiagonal(logits);
  auto cols = nn::CrossEntropyDiagonal(nn::Transpose(logits));
  return nn::Scale(nn::Add(rows, cols), Scalar(0.5));
}

// Teacher-forced multi-step loss: mean over steps of ContrastiveLoss between
// decoder predictions and item-tower embeddings of the true items.
template <typename Scalar>
nn::Var<Scalar> TrainingLoss(Forward<Scalar>& fwd, std::span<const SbrExample* const> batch);

}  // namespace mercatran

#include "mercatran/model_impl.hpp"
