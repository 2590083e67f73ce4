// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

// Template definitions for model.hpp; include model.hpp instead.

#pragma once

#include <algorithm>
#include <numbers>
#include <utility>

namespace mercatran {

namespace model_detail {

template <typename Scalar>
void InitParameter(nn::Parameter<Scalar>& p, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  p.name = name;
  p.value.resize(rows, cols);
  p.grad.setZero(rows, cols);
}

inline bool EndsWith(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace model_detail

template <typename Scalar>
template <typename Fn>
void MercatranModel<Scalar>::ForEach(Fn&& fn) {
  auto linear = [&](const std::string& prefix, LinearParams<Scalar>& l) {
    fn(prefix + ".w", l.w);
    fn(prefix + ".b", l.b);
  };
  auto norm = [&](const std::string& prefix, NormParams<Scalar>& n) {
    fn(prefix + ".gamma", n.gamma);
    fn(prefix + ".beta", n.beta);
  };
  auto ffn = [&](const std::string& prefix, FfnParams<Scalar>& f) {
    linear(prefix + ".up", f.up);
    linear(prefix + ".down", f.down);
  };
  auto attn = [&](const std::string& prefix, AttentionParams<Scalar>& a) {
    linear(prefix + ".q", a.q);
    // No key bias: it adds the same q.b to every score of a query row, which
    // softmax removes, so it could never receive a gradient.
    fn(prefix + ".k.w", a.k.w);
    linear(prefix + ".v", a.v);
    linear(prefix + ".o", a.o);
  };
  fn(std::string("embedding"), embedding);
  fn(std::string("bos"), bos);
  for (std::size_t i = 0; i < item_blocks.size(); ++i) {
    const std::string p = "item." + std::to_string(i);
    ffn(p + ".ffn", item_blocks[i].ffn);
    norm(p + ".norm", item_blocks[i].norm);
  }
  for (std::size_t i = 0; i < encoder_blocks.size(); ++i) {
    const std::string p = "encoder." + std::to_string(i);
    attn(p + ".self_attn", encoder_blocks[i].self_attn);
    norm(p + ".norm1", encoder_blocks[i].norm1);
    ffn(p + ".ffn", encoder_blocks[i].ffn);
    norm(p + ".norm2", encoder_blocks[i].norm2);
  }
  for (std::size_t i = 0; i < decoder_blocks.size(); ++i) {
    const std::string p = "decoder." + std::to_string(i);
    attn(p + ".self_attn", decoder_blocks[i].self_attn);
    norm(p + ".norm1", decoder_blocks[i].norm1);
    attn(p + ".cross_attn", decoder_blocks[i].cross_attn);
    norm(p + ".norm2", decoder_blocks[i].norm2);
    ffn(p + ".ffn", decoder_blocks[i].ffn);
    norm(p + ".norm3", decoder_blocks[i].norm3);
  }
}

template <typename Scalar>
MercatranModel<Scalar>::MercatranModel(const ModelConfig& config) : config_(config) {
  ValidateModelConfig(config);
  const Eigen::Index d = config.d_model, f = config.d_ff;
  item_blocks.resize(static_cast<std::size_t>(config.blocks));
  encoder_blocks.resize(static_cast<std::size_t>(config.blocks));
  decoder_blocks.resize(static_cast<std::size_t>(config.blocks));

  // Shapes first, then values keyed by parameter name.
  ForEach([&](const std::string& name, nn::Parameter<Scalar>& p) {
    Eigen::Index rows = 1, cols = d;
    if (name == "embedding") {
      rows = config.vocab_size;
    } else if (model_detail::EndsWith(name, ".up.w")) {
      rows = d;
      cols = f;
    } else if (model_detail::EndsWith(name, ".up.b")) {
      cols = f;
    } else if (model_detail::EndsWith(name, ".down.w")) {
      rows = f;
    } else if (model_detail::EndsWith(name, ".w")) {
      rows = d;
    }
    model_detail::InitParameter(p, name, rows, cols);

    CounterRng rng(config.seed, Fnv1a64(name));
    if (name == "embedding" || name == "bos") {
      const double std = 1.0 / std::sqrt(static_cast<double>(d));
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(rng.Normal() * std);
    } else if (model_detail::EndsWith(name, ".w")) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        p.value.data()[i] = static_cast<Scalar>((2.0 * rng.Uniform() - 1.0) * a);
      }
    } else if (model_detail::EndsWith(name, ".gamma")) {
      p.value.setOnes();
    } else {
      p.value.setZero();
    }
  });

  const int positions = std::max(config.max_history, config.forecast_steps);
  positional_.resize(positions, d);
  for (int pos = 0; pos < positions; ++pos) {
    for (Eigen::Index i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      positional_(pos, i) = static_cast<Scalar>(std::sin(pos * freq));
      if (i + 1 < d) positional_(pos, i + 1) = static_cast<Scalar>(std::cos(pos * freq));
    }
  }
}

template <typename Scalar>
std::vector<nn::Parameter<Scalar>*> MercatranModel<Scalar>::Parameters() {
  std::vector<nn::Parameter<Scalar>*> out;
  ForEach([&out](const std::string&, nn::Parameter<Scalar>& p) { out.push_back(&p); });
  return out;
}

template <typename Scalar>
std::vector<const nn::Parameter<Scalar>*> MercatranModel<Scalar>::Parameters() const {
  std::vector<const nn::Parameter<Scalar>*> out;
  for (auto* p : const_cast<MercatranModel*>(this)->Parameters()) out.push_back(p);
  return out;
}

template <typename Scalar>
template <typename Other>
MercatranModel<Other> MercatranModel<Scalar>::Cast() const {
  MercatranModel<Other> out(config_);
  auto dst = out.Parameters();
  auto src = Parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->value = src[i]->value.template cast<Other>();
    dst[i]->ZeroGrad();
  }
  return out;
}

// Forward ---------------------------------------------------------------------------

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::P(const nn::Parameter<Scalar>& p) {
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return it->second;
  // The parameter belongs to mutable_model_ whenever that is set.
  V v = mutable_model_ ? tape_.Leaf(const_cast<nn::Parameter<Scalar>&>(p)) : tape_.Borrow(p.value);
  leaves_.emplace(&p, v);
  return v;
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Linear(const V& x, const LinearParams<Scalar>& lin) {
  const V y = nn::MatMul(x, P(lin.w));
  return lin.b.value.size() == 0 ? y : nn::AddRowBias(y, P(lin.b));
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Ffn(const V& x, const FfnParams<Scalar>& ffn) {
  return Linear(nn::Gelu(Linear(x, ffn.up)), ffn.down);
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Attention(const V& x, const V& memory, const AttentionParams<Scalar>& att,
                                                       const nn::AttentionLayout& layout) {
  V q = Linear(x, att.q);
  V k = Linear(memory, att.k);
  V v = Linear(memory, att.v);
  return Linear(nn::MultiHeadAttention(q, k, v, layout, config().heads), att.o);
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Norm(const V& x, const NormParams<Scalar>& norm) {
  return nn::LayerNorm(x, P(norm.gamma), P(norm.beta), static_cast<Scalar>(config().layer_norm_eps));
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Drop(const V& x) {
  if (!training()) return x;
  return nn::Dropout(x, static_cast<Scalar>(config().dropout), *rng_);
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::PooledContent(std::span<const TokenizedItem* const> items) {
  std::vector<std::vector<std::int32_t>> segments;
  segments.reserve(items.size());
  for (const auto* item : items) {
    std::vector<std::int32_t> ids;
    for (auto id : item->token_ids) {
      if (id < 0 || id >= config().vocab_size) {
        throw Error(ErrorCode::kTokenOutOfRange, "token id " + std::to_string(id));
      }
      if (id != Vocab::kPad) ids.push_back(id);
    }
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    segments.push_back(std::move(ids));
  }
  return nn::GatherMeanRows(P(model_.embedding), std::move(segments));
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::ItemTower(std::span<const TokenizedItem* const> items) {
  V x = nn::Scale(PooledContent(items), std::sqrt(static_cast<Scalar>(config().d_model)));
  for (const auto& block : model_.item_blocks) x = Norm(nn::Add(x, Drop(Ffn(x, block.ffn))), block.norm);
  return nn::L2NormalizeRows(x);
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::HistoryInput(std::span<const std::vector<const TokenizedItem*>> histories,
                                                          int stride) {
  std::vector<const TokenizedItem*> flat;
  std::vector<Eigen::Index> rows;
  const auto zero_row = [&] {
    std::size_t n = 0;
    for (const auto& h : histories) n += h.size();
    return static_cast<Eigen::Index>(n);
  }();
  for (const auto& h : histories) {
    if (h.empty()) throw Error(ErrorCode::kEmptyHistory, "history has no events");
    if (static_cast<int>(h.size()) > stride) throw Error(ErrorCode::kHistoryTooLong, "history longer than stride");
    for (int pos = 0; pos < stride; ++pos) {
      if (pos < static_cast<int>(h.size())) {
        rows.push_back(static_cast<Eigen::Index>(flat.size()));
        flat.push_back(h[static_cast<std::size_t>(pos)]);
      } else {
        rows.push_back(zero_row);
      }
    }
  }
  V pooled = PooledContent(flat);
  V padded = nn::GatherRows(nn::ConcatRows(pooled, tape_.Constant(nn::Matrix<Scalar>::Zero(1, config().d_model))),
                            std::move(rows));
  return nn::Scale(padded, std::sqrt(static_cast<Scalar>(config().d_model)));
}

namespace model_detail {

template <typename Scalar>
nn::Matrix<Scalar> TilePositions(const nn::Matrix<Scalar>& table, int batch, int stride) {
  if (stride > table.rows()) throw Error(ErrorCode::kHistoryTooLong, "sequence longer than positional table");
  nn::Matrix<Scalar> out(static_cast<Eigen::Index>(batch) * stride, table.cols());
  for (int b = 0; b < batch; ++b) out.middleRows(static_cast<Eigen::Index>(b) * stride, stride) = table.topRows(stride);
  return out;
}

}  // namespace model_detail

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Encoder(const V& input, const std::vector<int>& lengths, int stride) {
  const int batch = static_cast<int>(lengths.size());
  V x = nn::Add(input, tape_.Constant(model_detail::TilePositions(model_.positional(), batch, stride)));
  x = Drop(x);
  nn::AttentionLayout layout{batch, stride, stride, lengths, lengths, false};
  for (const auto& block : model_.encoder_blocks) {
    x = Norm(nn::Add(x, Drop(Attention(x, x, block.self_attn, layout))), block.norm1);
    x = Norm(nn::Add(x, Drop(Ffn(x, block.ffn))), block.norm2);
  }
  return x;
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::Decoder(const V& input, int steps, const V& memory,
                                                     const std::vector<int>& memory_lengths, int memory_stride) {
  const int batch = static_cast<int>(memory_lengths.size());
  if (input.rows() != static_cast<Eigen::Index>(batch) * steps) {
    throw Error(ErrorCode::kShapeMismatch, "decoder input rows != batch * steps");
  }
  V x = nn::Add(input, tape_.Constant(model_detail::TilePositions(model_.positional(), batch, steps)));
  x = Drop(x);
  const std::vector<int> step_lengths(static_cast<std::size_t>(batch), steps);
  nn::AttentionLayout self_layout{batch, steps, steps, step_lengths, step_lengths, true};
  nn::AttentionLayout cross_layout{batch, steps, memory_stride, step_lengths, memory_lengths, false};
  for (const auto& block : model_.decoder_blocks) {
    x = Norm(nn::Add(x, Drop(Attention(x, x, block.self_attn, self_layout))), block.norm1);
    x = Norm(nn::Add(x, Drop(Attention(x, memory, block.cross_attn, cross_layout))), block.norm2);
    x = Norm(nn::Add(x, Drop(Ffn(x, block.ffn))), block.norm3);
  }
  return nn::L2NormalizeRows(x);
}

template <typename Scalar>
typename Forward<Scalar>::V Forward<Scalar>::DecoderInput(const V& previous, int batch, int steps) {
  const Eigen::Index prev_per = steps - 1;
  if (previous.rows() != static_cast<Eigen::Index>(batch) * prev_per) {
    throw Error(ErrorCode::kShapeMismatch, "decoder prefix rows != batch * (steps - 1)");
  }
  V source = prev_per > 0 ? nn::ConcatRows(P(model_.bos), previous) : P(model_.bos);
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(batch * steps));
  for (int b = 0; b < batch; ++b) {
    rows.push_back(0);
    for (Eigen::Index j = 0; j < prev_per; ++j) rows.push_back(1 + b * prev_per + j);
  }
  return nn::Scale(nn::GatherRows(source, std::move(rows)), std::sqrt(static_cast<Scalar>(config().d_model)));
}

template <typename Scalar>
nn::Var<Scalar> TrainingLoss(Forward<Scalar>& fwd, std::span<const SbrExample* const> batch) {
  const ModelConfig& cfg = fwd.config();
  const int steps = cfg.forecast_steps;
  const int b = static_cast<int>(batch.size());
  if (b == 0) throw Error(ErrorCode::kInvalidArgument, "empty batch");

  std::vector<const TokenizedItem*> target_items;
  std::vector<std::vector<const TokenizedItem*>> histories;
  std::vector<int> lengths;
  int stride = 1;
  for (const SbrExample* ex : batch) {
    if (static_cast<int>(ex->targets.size()) != steps) {
      throw Error(ErrorCode::kShapeMismatch, "example needs exactly " + std::to_string(steps) + " targets");
    }
    if (ex->history.empty()) throw Error(ErrorCode::kEmptyHistory, ex->user_id);
    if (static_cast<int>(ex->history.size()) > cfg.max_history) throw Error(ErrorCode::kHistoryTooLong, ex->user_id);
    for (const auto& t : ex->targets) target_items.push_back(&t.tokens);
    auto& h = histories.emplace_back();
    for (const auto& e : ex->history) h.push_back(&e.tokens);
    lengths.push_back(static_cast<int>(h.size()));
    stride = std::max(stride, lengths.back());
  }

  auto targets = fwd.ItemTower(target_items);  // [b * steps, d]
  std::vector<Eigen::Index> prefix_rows;
  for (int i = 0; i < b; ++i) {
    for (int s = 0; s + 1 < steps; ++s) prefix_rows.push_back(static_cast<Eigen::Index>(i) * steps + s);
  }
  auto prefix = steps > 1 ? nn::GatherRows(targets, prefix_rows)
                          : fwd.tape().Constant(nn::Matrix<Scalar>::Zero(0, cfg.d_model));
  auto memory = fwd.Encoder(fwd.HistoryInput(histories, stride), lengths, stride);
  auto predictions = fwd.Decoder(fwd.DecoderInput(prefix, b, steps), steps, memory, lengths, stride);

  nn::Var<Scalar> total{};
  for (int s = 0; s < steps; ++s) {
    std::vector<Eigen::Index> rows;
    for (int i = 0; i < b; ++i) rows.push_back(static_cast<Eigen::Index>(i) * steps + s);
    auto loss = ContrastiveLoss(nn::GatherRows(predictions, rows), nn::GatherRows(targets, rows),
                                static_cast<Scalar>(cfg.temperature));
    total = s == 0 ? loss : nn::Add(total, loss);
  }
  return nn::Scale(total, Scalar(1) / static_cast<Scalar>(steps));
}

}  // namespace mercatran
