// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/model.hpp"

namespace mercatran {

void ValidateModelConfig(const ModelConfig& c) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidConfig, why); };
  if (c.d_model <= 0 || c.d_ff <= 0 || c.heads <= 0 || c.blocks < 0) fail("sizes must be positive");
  if (c.d_model % c.heads != 0) fail("d_model must be divisible by heads");
  if (c.forecast_steps < 1) fail("forecast_steps must be >= 1");
  if (c.max_history < 1) fail("max_history must be >= 1");
  if (c.max_tokens < 1) fail("max_tokens must be >= 1");
  if (c.vocab_size <= Vocab::kNumReserved || c.vocab_size > kDefaultVocabLimit) fail("vocab_size must be in (3, 32768]");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.temperature > 0.0)) fail("temperature must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(c.layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  if (!(c.lr_factor > 0.0) || c.warmup_steps < 1 || c.decay_epochs < 0 || !(c.decay_gamma > 0.0)) {
    fail("invalid learning-rate schedule");
  }
}

nlohmann::json ModelConfigToJson(const ModelConfig& c) {
  return {
      {"d_model", c.d_model},
      {"d_ff", c.d_ff},
      {"heads", c.heads},
      {"blocks", c.blocks},
      {"max_history", c.max_history},
      {"forecast_steps", c.forecast_steps},
      {"max_tokens", c.max_tokens},
      {"vocab_size", c.vocab_size},
      {"batch_size", c.batch_size},
      {"temperature", c.temperature},
      {"dropout", c.dropout},
      {"layer_norm_eps", c.layer_norm_eps},
      {"lr_factor", c.lr_factor},
      {"warmup_steps", c.warmup_steps},
      {"decay_epochs", c.decay_epochs},
      {"decay_gamma", c.decay_gamma},
      {"seed", c.seed},
  };
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.heads = j.value("heads", c.heads);
  c.blocks = j.value("blocks", c.blocks);
  c.max_history = j.value("max_history", c.max_history);
  c.forecast_steps = j.value("forecast_steps", c.forecast_steps);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.temperature = j.value("temperature", c.temperature);
  c.dropout = j.value("dropout", c.dropout);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  c.lr_factor = j.value("lr_factor", c.lr_factor);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
  c.decay_gamma = j.value("decay_gamma", c.decay_gamma);
  c.seed = j.value("seed", c.seed);
  ValidateModelConfig(c);
  return c;
}

template class MercatranModel<float>;
template class MercatranModel<double>;

}  // namespace mercatran
