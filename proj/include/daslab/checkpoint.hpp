#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "daslab/adam.hpp"
#include "daslab/model_spec.hpp"
#include "daslab/network.hpp"

namespace daslab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  Params<float> params;
  AdamState<float> adam;
};

/// Little-endian layout (see README, "Checkpoint format"):
///   "DASLABCK" | u32 version | u32 scalar bytes (4) | u64 spec length | spec text
///   | u64 P | f32[P] params | u64 t | f64 beta1, beta2, epsilon, lr | f32[P] m | f32[P] v
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace daslab
