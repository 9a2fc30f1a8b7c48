#pragma once

#include <string>

#include "colpro/model.hpp"

namespace colpro {

/// Binary checkpoint: "colpro-ckpt v1" tag, config block, backbone digest,
/// then raw little-endian doubles per tensor in a fixed order (backbone,
/// prompts, heads). Loading verifies the tag and the recorded digest against
/// the reloaded backbone.
void save_checkpoint(const std::string& path, const Model& model,
                     const PromptSet& prompts);

struct Checkpoint {
  Model model;
  PromptSet prompts;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace colpro
