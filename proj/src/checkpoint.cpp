#include "metauas/checkpoint.hpp"

#include <sstream>

#include "metauas/common.hpp"
#include "metauas/config.hpp"

namespace metauas {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMetaKey = "__meta__";

std::vector<std::pair<std::string, torch::Tensor>> named_state(MetaUasModel& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : model.segnet()->named_parameters()) out.emplace_back("segnet." + p.key(), p.value());
  for (const auto& b : model.segnet()->named_buffers()) out.emplace_back("segnet." + b.key(), b.value());
  if (model.config().finetune_encoder) {
    int i = 0;
    for (const auto& p : model.encoder().parameters()) out.emplace_back("encoder." + std::to_string(i++), p);
  }
  return out;
}

torch::serialize::InputArchive open_archive(const fs::path& file) {
  if (!fs::exists(file)) throw DataError("checkpoint not found: " + file.string());
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(file.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + file.string() + ": " + e.what_without_backtrace());
  }
  return ar;
}

nlohmann::json meta_of(torch::serialize::InputArchive& ar, const fs::path& file) {
  c10::IValue v;
  if (!ar.try_read(kMetaKey, v) || !v.isString()) throw DataError("checkpoint has no metadata: " + file.string());
  auto j = nlohmann::json::parse(v.toStringRef());
  if (j.value("schema_version", 0) != kCheckpointSchema) {
    throw DataError("unsupported checkpoint schema in " + file.string());
  }
  return j;
}

}  // namespace

void save_checkpoint(const fs::path& file, MetaUasModel& model, const nlohmann::json& extra) {
  nlohmann::json meta = {
      {"schema_version", kCheckpointSchema},
      {"encoder", model.config().encoder},
      {"encoder_seed", model.config().encoder_seed},
      {"input_size", model.config().input_size},
      {"align", to_string(model.config().align)},
      {"fusion", to_string(model.config().fusion)},
      {"model", to_json(model.config())},
  };
  if (!extra.is_null()) meta["extra"] = extra;
  torch::serialize::OutputArchive ar;
  for (auto& [name, t] : named_state(model)) ar.write(name, t.detach().to(torch::kCPU));
  ar.write(kMetaKey, c10::IValue(meta.dump()));
  std::ostringstream bytes;
  ar.save_to(bytes);
  if (!file.parent_path().empty()) fs::create_directories(file.parent_path());
  write_file_atomic(file, bytes.str());
}

nlohmann::json read_checkpoint_meta(const fs::path& file) {
  auto ar = open_archive(file);
  return meta_of(ar, file);
}

std::unique_ptr<MetaUasModel> load_checkpoint(const fs::path& file, const std::string& encoder_weights) {
  auto ar = open_archive(file);
  const auto meta = meta_of(ar, file);
  ModelConfig cfg = model_config_from_json(meta.at("model"));
  if (!encoder_weights.empty()) cfg.encoder_weights = encoder_weights;
  auto model = std::make_unique<MetaUasModel>(cfg, 0);
  torch::NoGradGuard guard;
  for (auto& [name, t] : named_state(*model)) {
    torch::Tensor stored;
    if (!ar.try_read(name, stored)) throw DataError("checkpoint is missing tensor " + name);
    if (!stored.sizes().equals(t.sizes())) throw DataError("checkpoint tensor " + name + " has the wrong shape");
    t.copy_(stored);
  }
  model->eval();
  return model;
}

}  // namespace metauas
