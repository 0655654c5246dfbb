#include "metauas/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace metauas {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads keys off a JSON object, remembering which were consumed so leftovers can be rejected.
class StrictReader {
 public:
  StrictReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(section_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(section_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

json interval(const synth::Interval& i) { return json::array({i.lo, i.hi}); }

void read_interval(StrictReader& r, const char* key, synth::Interval& out) {
  std::vector<double> v{out.lo, out.hi};
  r.get(key, v);
  if (v.size() != 2) throw ConfigError(std::string(key) + ": expected [lo, hi]");
  out = {v[0], v[1]};
}

}  // namespace

std::string to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::none: return "none";
    case AlignMode::hard: return "hard";
    case AlignMode::soft: return "soft";
  }
  return "soft";
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::concat: return "concat";
    case FusionMode::add: return "add";
    case FusionMode::absdiff: return "absdiff";
  }
  return "concat";
}

std::string to_string(PromptPolicy policy) {
  switch (policy) {
    case PromptPolicy::fixed_random: return "fixed-random";
    case PromptPolicy::pool_match: return "pool-match";
    case PromptPolicy::best_match: return "best-match";
  }
  return "fixed-random";
}

AlignMode align_mode_from_string(const std::string& name) {
  if (name == "none") return AlignMode::none;
  if (name == "hard") return AlignMode::hard;
  if (name == "soft") return AlignMode::soft;
  throw ConfigError("unknown align mode: " + name);
}

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "concat") return FusionMode::concat;
  if (name == "add") return FusionMode::add;
  if (name == "absdiff") return FusionMode::absdiff;
  throw ConfigError("unknown fusion mode: " + name);
}

PromptPolicy prompt_policy_from_string(const std::string& name) {
  if (name == "fixed-random") return PromptPolicy::fixed_random;
  if (name == "pool-match") return PromptPolicy::pool_match;
  if (name == "best-match") return PromptPolicy::best_match;
  throw ConfigError("unknown prompt policy: " + name);
}

void ModelConfig::validate() const {
  if (input_size < 32 || input_size % 32 != 0) throw ConfigError("model.input_size must be a positive multiple of 32");
  if (!(temperature > 0.0)) throw ConfigError("model.temperature must be > 0");
  if (decoder_channels < 8) throw ConfigError("model.decoder_channels must be >= 8");
  if (encoder.empty()) throw ConfigError("model.encoder must be set");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (max_pairs < 0 || max_steps < 0 || checkpoint_every < 0) throw ConfigError("train: counts must be >= 0");
  if (threads < 1) throw ConfigError("train.threads must be >= 1");
}

void EvalConfig::validate() const {
  if (!(pro_fpr_cap > 0.0 && pro_fpr_cap <= 1.0)) throw ConfigError("eval.pro_fpr_cap must lie in (0, 1]");
  if (pro_grid < 0 || pro_grid == 1) throw ConfigError("eval.pro_grid must be 0 (exact) or >= 2");
  if (seeds.empty()) throw ConfigError("eval.seeds must be nonempty");
  if (workers < 1) throw ConfigError("eval.workers must be >= 1");
}

void RunConfig::validate() const {
  synth.validate();
  model.validate();
  train.validate();
  eval.validate();
}

json to_json(const synth::AugmentConfig& c) {
  return {{"enabled", c.enabled},       {"scale", interval(c.scale)},
          {"translate_px", c.translate_px}, {"rotation_deg", interval(c.rotation_deg)},
          {"brightness", c.brightness}, {"contrast", c.contrast},
          {"saturation", c.saturation}};
}

json to_json(const synth::SynthConfig& c) {
  return {{"p_local", c.p_local},
          {"perlin_periods", c.perlin_periods},
          {"perlin_octaves", c.perlin_octaves},
          {"perlin_threshold", c.perlin_threshold},
          {"paste_count", json::array({c.paste_count.lo, c.paste_count.hi})},
          {"paste_scale_jitter", c.paste_scale_jitter},
          {"blend", interval(c.blend)},
          {"paste_probability", c.paste_probability},
          {"max_selected_instances", c.max_selected_instances},
          {"split_ratio", c.split_ratio},
          {"image_size", c.image_size},
          {"pairs_per_source", c.pairs_per_source},
          {"max_attempts", c.max_attempts},
          {"augment", to_json(c.augment)},
          {"seed", c.seed}};
}

json to_json(const ModelConfig& c) {
  return {{"encoder", c.encoder},
          {"encoder_weights", c.encoder_weights},
          {"encoder_seed", c.encoder_seed},
          {"input_size", c.input_size},
          {"align", to_string(c.align)},
          {"fusion", to_string(c.fusion)},
          {"temperature", c.temperature},
          {"decoder_channels", c.decoder_channels},
          {"finetune_encoder", c.finetune_encoder}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"max_pairs", c.max_pairs},
          {"max_steps", c.max_steps},
          {"augment", c.augment},
          {"seed", c.seed},
          {"threads", c.threads},
          {"device", c.device},
          {"checkpoint_every", c.checkpoint_every},
          {"validate_each_epoch", c.validate_each_epoch}};
}

json to_json(const EvalConfig& c) {
  return {{"dataset_root", c.dataset_root}, {"checkpoint", c.checkpoint},
          {"policy", to_string(c.policy)},  {"seeds", c.seeds},
          {"pro_fpr_cap", c.pro_fpr_cap},   {"pro_grid", c.pro_grid},
          {"save_maps", c.save_maps},       {"write_csv", c.write_csv},
          {"workers", c.workers}};
}

json to_json(const RunConfig& c) {
  return {{"synth", to_json(c.synth)},
          {"model", to_json(c.model)},
          {"train", to_json(c.train)},
          {"eval", to_json(c.eval)}};
}

synth::AugmentConfig augment_config_from_json(const json& j, synth::AugmentConfig c) {
  StrictReader r(j, "augment");
  r.get("enabled", c.enabled);
  read_interval(r, "scale", c.scale);
  r.get("translate_px", c.translate_px);
  read_interval(r, "rotation_deg", c.rotation_deg);
  r.get("brightness", c.brightness);
  r.get("contrast", c.contrast);
  r.get("saturation", c.saturation);
  r.finish();
  return c;
}

synth::SynthConfig synth_config_from_json(const json& j, synth::SynthConfig c) {
  StrictReader r(j, "synth");
  r.get("p_local", c.p_local);
  r.get("perlin_periods", c.perlin_periods);
  r.get("perlin_octaves", c.perlin_octaves);
  r.get("perlin_threshold", c.perlin_threshold);
  std::vector<int> paste{c.paste_count.lo, c.paste_count.hi};
  r.get("paste_count", paste);
  if (paste.size() != 2) throw ConfigError("synth.paste_count: expected [lo, hi]");
  c.paste_count = {paste[0], paste[1]};
  r.get("paste_scale_jitter", c.paste_scale_jitter);
  read_interval(r, "blend", c.blend);
  r.get("paste_probability", c.paste_probability);
  r.get("max_selected_instances", c.max_selected_instances);
  r.get("split_ratio", c.split_ratio);
  r.get("image_size", c.image_size);
  r.get("pairs_per_source", c.pairs_per_source);
  r.get("max_attempts", c.max_attempts);
  if (const json* a = r.sub("augment")) c.augment = augment_config_from_json(*a, c.augment);
  r.get("seed", c.seed);
  r.finish();
  return c;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  StrictReader r(j, "model");
  r.get("encoder", c.encoder);
  r.get("encoder_weights", c.encoder_weights);
  r.get("encoder_seed", c.encoder_seed);
  r.get("input_size", c.input_size);
  std::string align = to_string(c.align);
  r.get("align", align);
  c.align = align_mode_from_string(align);
  std::string fusion = to_string(c.fusion);
  r.get("fusion", fusion);
  c.fusion = fusion_mode_from_string(fusion);
  r.get("temperature", c.temperature);
  r.get("decoder_channels", c.decoder_channels);
  r.get("finetune_encoder", c.finetune_encoder);
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  StrictReader r(j, "train");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("weight_decay", c.weight_decay);
  r.get("grad_clip", c.grad_clip);
  r.get("max_pairs", c.max_pairs);
  r.get("max_steps", c.max_steps);
  r.get("augment", c.augment);
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  r.get("device", c.device);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("validate_each_epoch", c.validate_each_epoch);
  r.finish();
  return c;
}

EvalConfig eval_config_from_json(const json& j, EvalConfig c) {
  StrictReader r(j, "eval");
  r.get("dataset_root", c.dataset_root);
  r.get("checkpoint", c.checkpoint);
  std::string policy = to_string(c.policy);
  r.get("policy", policy);
  c.policy = prompt_policy_from_string(policy);
  r.get("seeds", c.seeds);
  r.get("pro_fpr_cap", c.pro_fpr_cap);
  r.get("pro_grid", c.pro_grid);
  r.get("save_maps", c.save_maps);
  r.get("write_csv", c.write_csv);
  r.get("workers", c.workers);
  r.finish();
  return c;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  StrictReader r(j, "config");
  if (const json* s = r.sub("synth")) c.synth = synth_config_from_json(*s, c.synth);
  if (const json* s = r.sub("model")) c.model = model_config_from_json(*s, c.model);
  if (const json* s = r.sub("train")) c.train = train_config_from_json(*s, c.train);
  if (const json* s = r.sub("eval")) c.eval = eval_config_from_json(*s, c.eval);
  r.finish();
  return c;
}

json load_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

RunConfig load_run_config(const fs::path& file) {
  RunConfig c = run_config_from_json(load_json(file));
  c.validate();
  return c;
}

void write_file_atomic(const fs::path& file, const std::string& contents) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, file);
}

void save_json(const fs::path& file, const json& j) { write_file_atomic(file, j.dump(2) + "\n"); }

}  // namespace metauas
