// Binary model checkpoints: a fixed magic and version, a JSON metadata blob
// (model variant, preprocessing settings, vocabulary, normalization stats),
// then every parameter tensor as name + extents + float32 payload.

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "moodseq/layers.hpp"

namespace moodseq {

inline constexpr char kCheckpointMagic[4] = {'M', 'S', 'E', 'Q'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, CheckpointTensor> tensors;  // keyed by parameter name
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamList<float>& params);

Checkpoint read_checkpoint(const std::string& path);

// Copies checkpoint tensors into the matching parameters in place. Every
// parameter must be present with the exact shape, and vice versa.
void load_into(ParamList<float>& params, const Checkpoint& ckpt);

}  // namespace moodseq
