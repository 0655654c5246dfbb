#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "metauas/synth.hpp"

namespace metauas {

enum class AlignMode { none, hard, soft };
enum class FusionMode { concat, add, absdiff };
enum class PromptPolicy { fixed_random, pool_match, best_match };

std::string to_string(AlignMode mode);
std::string to_string(FusionMode mode);
std::string to_string(PromptPolicy policy);
AlignMode align_mode_from_string(const std::string& name);
FusionMode fusion_mode_from_string(const std::string& name);
PromptPolicy prompt_policy_from_string(const std::string& name);

struct ModelConfig {
  // "conv-tiny" / "conv-small" are built in and seeded; any other id names a TorchScript
  // feature extractor whose file is given by encoder_weights.
  std::string encoder = "conv-tiny";
  std::string encoder_weights;
  std::uint64_t encoder_seed = 0;
  int input_size = 256;
  AlignMode align = AlignMode::soft;
  FusionMode fusion = FusionMode::absdiff;  // concat learns far slower on the seeded encoders
  double temperature = 1.0;
  int decoder_channels = 128;  // width of the deepest decoder level; halves per level up
  bool finetune_encoder = false;
  bool operator==(const ModelConfig&) const = default;
  void validate() const;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 5e-4;
  double grad_clip = 10.0;
  int max_pairs = 2000;  // 0 = use the whole train split
  int max_steps = 0;     // 0 = no step limit
  bool augment = true;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string device = "cpu";
  int checkpoint_every = 1;  // epochs; 0 = final checkpoint only
  bool validate_each_epoch = true;
  bool operator==(const TrainConfig&) const = default;
  void validate() const;
};

struct EvalConfig {
  std::string dataset_root;
  std::string checkpoint;
  PromptPolicy policy = PromptPolicy::fixed_random;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double pro_fpr_cap = 0.3;
  int pro_grid = 200;
  bool save_maps = false;
  bool write_csv = true;
  int workers = 1;
  bool operator==(const EvalConfig&) const = default;
  void validate() const;
};

struct RunConfig {
  synth::SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  bool operator==(const RunConfig&) const = default;
  void validate() const;
};

nlohmann::json to_json(const synth::AugmentConfig& c);
nlohmann::json to_json(const synth::SynthConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const RunConfig& c);

// Parsers start from defaults, overwrite the keys present and reject unknown keys (ConfigError).
synth::AugmentConfig augment_config_from_json(const nlohmann::json& j, synth::AugmentConfig base = {});
synth::SynthConfig synth_config_from_json(const nlohmann::json& j, synth::SynthConfig base = {});
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_run_config(const std::filesystem::path& file);
void save_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& file);

/// Writes to a temporary sibling, then renames over the target.
void write_file_atomic(const std::filesystem::path& file, const std::string& contents);

}  // namespace metauas
