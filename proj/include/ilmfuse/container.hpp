#pragma once

// Portable weight container (`.cont`).
//
// Byte layout, all integers little-endian:
//
//   offset 0   4 bytes   magic "ILMC"
//   offset 4   u32       format version (currently 1)
//   offset 8   u64       header length in bytes
//   offset 16  ...       UTF-8 JSON header
//              ...       zero padding up to the next multiple of 64
//              ...       tensor payloads, float32 row-major, header order
//              u64       FNV-1a 64 checksum of the payload bytes
//
// Header object:
//   {"kind": "rnnt"|"aed"|"lm"|"features",
//    "hyperparams": {...},
//    "tensors": [{"name": str, "shape": [int...], "dtype": "f32"}, ...],
//    "vocabulary": {"tokens": [str...], "sos_id": 0, "eos_id": 1,
//                   "blank_id": |V|  (rnnt only)}}
//
// Fused LSTM gate blocks are stored in (input, forget, cell, output) order.
// The header is serialized with sorted keys and tensors in name order, so
// saving the same container twice yields identical bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ilmfuse/tensor.hpp"
#include "ilmfuse/vocabulary.hpp"

namespace ilmfuse {

inline constexpr char kContainerMagic[4] = {'I', 'L', 'M', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kPayloadAlignment = 64;

enum class ModelKind { kRnnt, kAed, kLm, kFeatures };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

struct ModelContainer {
  ModelKind kind = ModelKind::kLm;
  nlohmann::json hyperparams = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;
  Vocabulary vocabulary;

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.contains(name); }

  std::int64_t hp_int(const std::string& key) const;
  bool hp_bool(const std::string& key, bool fallback) const;
  std::string hp_string(const std::string& key) const;

  bool operator==(const ModelContainer&) const = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::int64_t> shape;
};

/// Every tensor the container's kind and hyperparameters call for.
std::vector<TensorSpec> required_tensors(const ModelContainer& container);

/// Full structural check. Throws ValidationError naming the first problem.
void validate_container(const ModelContainer& container);

/// FNV-1a 64 over the little-endian float payload, in container order.
std::uint64_t payload_checksum(const ModelContainer& container);

std::vector<std::uint8_t> serialize_container(const ModelContainer& container);
ModelContainer parse_container(const std::vector<std::uint8_t>& bytes, const std::string& origin);

ModelContainer load_container(const std::filesystem::path& path);
void save_container(const ModelContainer& container, const std::filesystem::path& path);

/// Single-tensor feature container used for utterance features.
ModelContainer make_feature_container(Tensor features);

}  // namespace ilmfuse
