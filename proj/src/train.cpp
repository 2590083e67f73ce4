// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/train.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mercatran/nn/adam.hpp"
#include "mercatran/rng.hpp"

namespace mercatran {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

}  // namespace

std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(Mix64(seed ^ kShuffleStream), static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.UniformInt(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult Train(const std::vector<SbrExample>& examples, const ModelConfig& config, const TrainOptions& options) {
  ValidateModelConfig(config);
  if (options.epochs < 0) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 0");
  if (options.epochs > 0 && examples.empty()) throw Error(ErrorCode::kInvalidArgument, "no training examples");

  TrainResult result{MercatranModel<float>(config), {}};
  const auto& dir = options.checkpoint_dir;
  if (options.resume && !dir.empty() && std::filesystem::exists(dir / "last")) {
    Checkpoint ck = LoadCheckpoint(dir / "last");
    if (!(ck.model.config() == config)) throw Error(ErrorCode::kInvalidConfig, "checkpoint config differs from requested");
    if (!ck.progress) throw Error(ErrorCode::kCorruptFile, "checkpoint has no training progress");
    result.model = std::move(ck.model);
    result.progress = std::move(*ck.progress);
  }
  if (!dir.empty()) std::filesystem::create_directories(dir);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : result.progress.log) best = std::min(best, e.loss);

  const nn::NoamSchedule schedule{config.lr_factor, config.d_model, config.warmup_steps, config.decay_epochs,
                                  config.decay_gamma};
  auto params = result.model.Parameters();
  const int last_epoch = options.stop_after_epoch > 0 ? std::min(options.stop_after_epoch, options.epochs) : options.epochs;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = result.progress.epochs_completed; epoch < last_epoch; ++epoch) {
    const auto order = EpochOrder(examples.size(), config.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double lr = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      std::vector<const SbrExample*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&examples[order[i]]);

      for (auto* p : params) p->ZeroGrad();
      const std::int64_t step = result.progress.adam.step + 1;
      CounterRng dropout_rng(Mix64(config.seed ^ kDropoutStream), static_cast<std::uint64_t>(step));
      nn::Tape<float> tape;
      Forward<float> fwd(tape, result.model, true, &dropout_rng);
      auto loss = TrainingLoss<float>(fwd, batch);
      tape.Backward(loss);
      lr = schedule.Rate(step, epoch);
      nn::AdamStep<float>(params, result.progress.adam, lr);
      loss_sum += static_cast<double>(loss.value()(0, 0));
      ++batches;
    }
    const EpochLog entry{epoch + 1, result.progress.adam.step, loss_sum / static_cast<double>(batches), lr};
    result.progress.log.push_back(entry);
    result.progress.epochs_completed = epoch + 1;
    if (!dir.empty()) {
      SaveCheckpoint(dir / "last", result.model, &result.progress, options.vocab);
      if (entry.loss < best) {
        best = entry.loss;
        SaveCheckpoint(dir / "best", result.model, &result.progress, options.vocab);
      }
    }
    if (options.on_epoch) options.on_epoch(entry);
  }
  for (auto* p : params) p->ZeroGrad();
  return result;
}

}  // namespace mercatran
