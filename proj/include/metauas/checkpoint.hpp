#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "metauas/segnet.hpp"

namespace metauas {

inline constexpr int kCheckpointSchema = 1;

/// Stores the SegNet parameters (and the encoder's only when it was fine-tuned) plus a metadata
/// record: schema version, encoder id and seed, input size, align/fusion modes. Atomic write.
void save_checkpoint(const std::filesystem::path& file, MetaUasModel& model, const nlohmann::json& extra = {});

nlohmann::json read_checkpoint_meta(const std::filesystem::path& file);

/// Rebuilds the model from the file. `encoder_weights`, when non-empty, overrides the stored
/// TorchScript path (the weights themselves never live in the checkpoint).
std::unique_ptr<MetaUasModel> load_checkpoint(const std::filesystem::path& file,
                                              const std::string& encoder_weights = {});

}  // namespace metauas
