// Copyright 2026 The Mercatran Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mercatran/checkpoint.hpp"

#include <cstdio>
#include <span>

#include "mercatran/binary_io.hpp"
#include "mercatran/rng.hpp"

namespace mercatran {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "MTRN1";

struct TensorRef {
  std::string name;
  const nn::Matrix<float>* value;
};

std::vector<TensorRef> CollectTensors(const MercatranModel<float>& model, const TrainingProgress* progress) {
  std::vector<TensorRef> out;
  const auto params = model.Parameters();
  for (const auto* p : params) out.push_back({p->name, &p->value});
  if (progress != nullptr && !progress->adam.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam.m/" + params[i]->name, &progress->adam.m[i]});
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam.v/" + params[i]->name, &progress->adam.v[i]});
  }
  return out;
}

json LogToJson(const std::vector<EpochLog>& log) {
  json arr = json::array();
  for (const auto& e : log) arr.push_back({{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}});
  return arr;
}

}  // namespace

std::string ModelVersion(const MercatranModel<float>& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : model.Parameters()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p->value.size()) * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void SaveCheckpoint(const std::filesystem::path& path, const MercatranModel<float>& model,
                    const TrainingProgress* progress, const json& vocab) {
  const auto tensors = CollectTensors(model, progress);
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.value->size()) * sizeof(float);
    entries.push_back({{"name", t.name},
                       {"shape", {t.value->rows(), t.value->cols()}},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"bytes", bytes}});
    offset += bytes;
  }
  json manifest = {{"version", 1},
                   {"config", ModelConfigToJson(model.config())},
                   {"tensors", std::move(entries)},
                   {"payload_bytes", offset},
                   {"model_version", ModelVersion(model)}};
  if (progress != nullptr) {
    manifest["progress"] = {{"epochs_completed", progress->epochs_completed},
                            {"log", LogToJson(progress->log)},
                            {"adam", {{"step", progress->adam.step},
                                      {"beta1", progress->adam.beta1},
                                      {"beta2", progress->adam.beta2},
                                      {"eps", progress->adam.eps}}}};
  }
  if (!vocab.is_null()) manifest["vocab"] = vocab;

  ByteWriter w;
  w.Header(kMagic, manifest);
  for (const auto& t : tensors) w.Floats(std::span<const float>(t.value->data(), static_cast<std::size_t>(t.value->size())));
  w.WriteFile(path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  ByteReader r = ByteReader::FromFile(path);
  const json manifest = r.Header(kMagic);
  try {
    if (manifest.at("version").get<int>() != 1) throw Error(ErrorCode::kCorruptFile, "unsupported checkpoint version");
    const ModelConfig config = ModelConfigFromJson(manifest.at("config"));
    Checkpoint ck{MercatranModel<float>(config), std::nullopt, nullptr, ""};
    const auto& entries = manifest.at("tensors");
    const auto payload_bytes = manifest.at("payload_bytes").get<std::uint64_t>();
    if (r.remaining() != payload_bytes) throw Error(ErrorCode::kCorruptFile, "payload length does not match manifest");

    auto params = ck.model.Parameters();
    const bool has_progress = manifest.contains("progress");
    if (has_progress) {
      const auto& p = manifest.at("progress");
      TrainingProgress prog;
      prog.epochs_completed = p.at("epochs_completed").get<int>();
      for (const auto& e : p.at("log")) {
        prog.log.push_back({e.at("epoch").get<int>(), e.at("step").get<std::int64_t>(), e.at("loss").get<double>(),
                            e.at("lr").get<double>()});
      }
      const auto& a = p.at("adam");
      prog.adam.step = a.at("step").get<std::int64_t>();
      prog.adam.beta1 = a.at("beta1").get<double>();
      prog.adam.beta2 = a.at("beta2").get<double>();
      prog.adam.eps = a.at("eps").get<double>();
      ck.progress = std::move(prog);
    }
    const std::size_t expected_adam = has_progress && entries.size() > params.size() ? 2 * params.size() : 0;
    if (entries.size() != params.size() + expected_adam) {
      throw Error(ErrorCode::kCorruptFile, "tensor count does not match config");
    }
    if (expected_adam > 0) {
      for (const auto* p : params) {
        ck.progress->adam.m.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
        ck.progress->adam.v.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      nn::Matrix<float>* dst;
      std::string expected_name;
      const std::size_t k = i % params.size();
      if (i < params.size()) {
        dst = &params[k]->value;
        expected_name = params[k]->name;
      } else if (i < 2 * params.size()) {
        dst = &ck.progress->adam.m[k];
        expected_name = "adam.m/" + params[k]->name;
      } else {
        dst = &ck.progress->adam.v[k];
        expected_name = "adam.v/" + params[k]->name;
      }
      const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
      if (e.at("name").get<std::string>() != expected_name || shape.size() != 2 || shape[0] != dst->rows() ||
          shape[1] != dst->cols() || e.at("dtype").get<std::string>() != "f32" ||
          e.at("offset").get<std::uint64_t>() != offset) {
        throw Error(ErrorCode::kCorruptFile, "tensor '" + e.at("name").get<std::string>() + "' does not match config");
      }
      r.Floats(std::span<float>(dst->data(), static_cast<std::size_t>(dst->size())));
      offset += static_cast<std::uint64_t>(dst->size()) * sizeof(float);
    }
    for (auto* p : params) p->ZeroGrad();
    if (manifest.contains("vocab")) ck.vocab = manifest.at("vocab");
    ck.model_version = ModelVersion(ck.model);
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace mercatran
