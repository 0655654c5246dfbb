// metauas: synth | train | eval | predict | bench, plus toy data generators.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "metauas/checkpoint.hpp"
#include "metauas/common.hpp"
#include "metauas/config.hpp"
#include "metauas/image_io.hpp"
#include "metauas/inference.hpp"
#include "metauas/pipeline.hpp"
#include "metauas/synth.hpp"
#include "metauas/toy_data.hpp"
#include "metauas/trainer.hpp"

namespace fs = std::filesystem;
using namespace metauas;

namespace {

constexpr const char* kVersion = "0.1.0";

fs::path cache_dir() {
  if (const char* env = std::getenv("METAUAS_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return fs::temp_directory_path() / "metauas-cache";
}

RunConfig base_config(const std::string& file) {
  return file.empty() ? RunConfig{} : load_run_config(file);
}

// Flags the subcommands share; each is applied only when given, so they win over the file.
struct ModelFlags {
  std::optional<int> input_size;
  std::string align, fusion, encoder, encoder_weights;
  std::optional<std::uint64_t> encoder_seed;

  void add(CLI::App* app) {
    app->add_option("--input-size", input_size, "model input side (multiple of 32)");
    app->add_option("--align", align, "none | hard | soft");
    app->add_option("--fusion", fusion, "concat | add | absdiff");
    app->add_option("--encoder", encoder, "conv-tiny | conv-small | <scripted id>");
    app->add_option("--encoder-weights", encoder_weights, "TorchScript feature extractor");
    app->add_option("--encoder-seed", encoder_seed);
  }
  void apply(ModelConfig& m) const {
    if (input_size) m.input_size = *input_size;
    if (!align.empty()) m.align = align_mode_from_string(align);
    if (!fusion.empty()) m.fusion = fusion_mode_from_string(fusion);
    if (!encoder.empty()) m.encoder = encoder;
    if (!encoder_weights.empty()) m.encoder_weights = encoder_weights;
    if (encoder_seed) m.encoder_seed = *encoder_seed;
  }
};

int cmd_synth(const std::string& config_file, const std::string& corpus_path, const std::string& out,
              const std::string& inpainter_spec, int workers, std::optional<std::uint64_t> seed,
              std::optional<int> image_size, bool no_augment) {
  RunConfig cfg = base_config(config_file);
  if (seed) cfg.synth.seed = *seed;
  if (image_size) cfg.synth.image_size = *image_size;
  if (no_augment) cfg.synth.augment.enabled = false;
  cfg.synth.validate();
  auto corpus = synth::open_corpus(corpus_path);
  auto inpainter = synth::make_inpainter(inpainter_spec, cache_dir() / "inpaint");
  synth::BuildOptions opts;
  opts.workers = workers;
  const auto manifest = synth::build_dataset(*corpus, out, cfg.synth, *inpainter, opts);
  std::cout << "wrote " << manifest.pairs.size() << " pairs to " << fs::path(out) / "manifest.json" << '\n';
  for (const auto& [type, n] : manifest.counts) std::cout << "  " << type << ": " << n << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaUAS: one-prompt anomaly segmentation via change segmentation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_file;

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "build a synthetic change-segmentation dataset");
  std::string corpus_path, synth_out, inpainter_spec = "diffusion";
  int synth_workers = 1;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_size;
  bool no_augment = false;
  synth_cmd->add_option("--corpus", corpus_path, "COCO json or images/ + masks/ directory")->required();
  synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();
  synth_cmd->add_option("--config", config_file, "run config (json)");
  synth_cmd->add_option("--inpainter", inpainter_spec, "diffusion | external:<cmd> | precomputed:<dir>");
  synth_cmd->add_option("--workers", synth_workers);
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--image-size", synth_size);
  synth_cmd->add_flag("--no-augment", no_augment, "store augmentation disabled in the manifest config");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on a synthetic manifest");
  std::string manifest_path, train_out;
  std::optional<int> epochs, batch, max_pairs, max_steps, threads;
  std::optional<std::uint64_t> train_seed;
  std::string device;
  ModelFlags train_model;
  train_cmd->add_option("--manifest", manifest_path)->required();
  train_cmd->add_option("--config", config_file);
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--batch", batch);
  train_cmd->add_option("--max-pairs", max_pairs);
  train_cmd->add_option("--max-steps", max_steps);
  train_cmd->add_option("--threads", threads);
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--device", device, "cpu | cuda[:N] (METAUAS_DEVICE overrides)");
  train_model.add(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on an MVTec-layout dataset");
  std::string eval_ckpt, eval_root, eval_out, policy;
  std::vector<std::uint64_t> seeds;
  std::optional<double> pro_cap;
  std::optional<int> pro_grid;
  bool save_maps = false;
  std::string eval_encoder_weights;
  eval_cmd->add_option("--checkpoint", eval_ckpt);
  eval_cmd->add_option("--dataset", eval_root);
  eval_cmd->add_option("--out", eval_out, "report directory")->required();
  eval_cmd->add_option("--config", config_file);
  eval_cmd->add_option("--policy", policy, "fixed-random | pool-match | best-match");
  eval_cmd->add_option("--seeds", seeds)->delimiter(',');
  eval_cmd->add_option("--pro-fpr-cap", pro_cap);
  eval_cmd->add_option("--pro-grid", pro_grid, "0 = every unique score");
  eval_cmd->add_option("--encoder-weights", eval_encoder_weights);
  eval_cmd->add_flag("--save-maps", save_maps);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "anomaly map for one query/prompt pair");
  std::string pred_ckpt, pred_query, pred_prompt, pred_out, pred_encoder_weights;
  predict_cmd->add_option("--checkpoint", pred_ckpt)->required();
  predict_cmd->add_option("--query", pred_query)->required();
  predict_cmd->add_option("--prompt", pred_prompt)->required();
  predict_cmd->add_option("--out", pred_out, "16-bit PNG; a .json sidecar is written next to it")->required();
  predict_cmd->add_option("--encoder-weights", pred_encoder_weights);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "parameter counts and forward latency");
  std::string bench_ckpt, bench_out;
  int iterations = 100, large_batch = 32;
  ModelFlags bench_model;
  bench_cmd->add_option("--checkpoint", bench_ckpt, "omit to bench a freshly initialized model");
  bench_cmd->add_option("--config", config_file);
  bench_cmd->add_option("--iterations", iterations);
  bench_cmd->add_option("--batch", large_batch);
  bench_cmd->add_option("--out", bench_out, "write the report as json");
  bench_model.add(bench_cmd);

  // toy data
  auto* toy_cmd = app.add_subcommand("toy-corpus", "write a procedural instance-annotated corpus");
  std::string toy_out;
  int toy_count = 100, toy_size = 64;
  std::uint64_t toy_seed = 0;
  toy_cmd->add_option("--out", toy_out)->required();
  toy_cmd->add_option("--count", toy_count);
  toy_cmd->add_option("--size", toy_size);
  toy_cmd->add_option("--seed", toy_seed);

  auto* mvtec_cmd = app.add_subcommand("toy-mvtec", "write a small MVTec-layout test set");
  std::string mvtec_out;
  toy::MvtecSpec mvtec;
  mvtec_cmd->add_option("--out", mvtec_out)->required();
  mvtec_cmd->add_option("--size", mvtec.size);
  mvtec_cmd->add_option("--seed", mvtec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) {
      return cmd_synth(config_file, corpus_path, synth_out, inpainter_spec, synth_workers, synth_seed, synth_size,
                       no_augment);
    }
    if (*train_cmd) {
      RunConfig cfg = base_config(config_file);
      if (epochs) cfg.train.epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      if (max_pairs) cfg.train.max_pairs = *max_pairs;
      if (max_steps) cfg.train.max_steps = *max_steps;
      if (threads) cfg.train.threads = *threads;
      if (train_seed) cfg.train.seed = *train_seed;
      if (!device.empty()) cfg.train.device = device;
      train_model.apply(cfg.model);
      cfg.validate();
      const auto manifest = synth::load_manifest(manifest_path);
      cfg.synth = manifest.config;
      const fs::path ck = fit_manifest(manifest, cfg.train, cfg.model, train_out);
      save_json(fs::path(train_out) / "run_config.json", {{"version", kVersion}, {"config", to_json(cfg)}});
      std::cout << "final checkpoint: " << ck.string() << '\n';
      return 0;
    }
    if (*eval_cmd) {
      RunConfig cfg = base_config(config_file);
      if (!eval_ckpt.empty()) cfg.eval.checkpoint = eval_ckpt;
      if (!eval_root.empty()) cfg.eval.dataset_root = eval_root;
      if (!policy.empty()) cfg.eval.policy = prompt_policy_from_string(policy);
      if (!seeds.empty()) cfg.eval.seeds = seeds;
      if (pro_cap) cfg.eval.pro_fpr_cap = *pro_cap;
      if (pro_grid) cfg.eval.pro_grid = *pro_grid;
      if (save_maps) cfg.eval.save_maps = true;
      if (!eval_encoder_weights.empty()) cfg.model.encoder_weights = eval_encoder_weights;
      if (cfg.eval.dataset_root.empty()) throw ConfigError("eval needs --dataset or eval.dataset_root");
      const auto out = run_eval(cfg, eval_out);
      std::cout << metrics::render_table(out.summary);
      return 0;
    }
    if (*predict_cmd) {
      auto model = load_checkpoint(pred_ckpt, pred_encoder_weights);
      configure_threads(1);
      const AnomalyMap m = predict(*model, load_image(pred_query), load_image(pred_prompt));
      save_map_u16(pred_out, m.values);
      fs::path sidecar = pred_out;
      sidecar.replace_extension(".json");
      save_json(sidecar, {{"image_score", m.image_score},
                          {"prompt_id", fs::path(pred_prompt).filename().string()},
                          {"query_id", fs::path(pred_query).filename().string()},
                          {"checkpoint", pred_ckpt}});
      std::cout << "image_score " << m.image_score << '\n';
      return 0;
    }
    if (*bench_cmd) {
      configure_threads(1);
      std::unique_ptr<MetaUasModel> model;
      if (!bench_ckpt.empty()) {
        model = load_checkpoint(bench_ckpt);
      } else {
        RunConfig cfg = base_config(config_file);
        bench_model.apply(cfg.model);
        model = std::make_unique<MetaUasModel>(cfg.model, 0);
      }
      const auto report = to_json(bench(*model, iterations, large_batch));
      std::cout << report.dump(2) << '\n';
      if (!bench_out.empty()) save_json(bench_out, report);
      return 0;
    }
    if (*toy_cmd) {
      toy::write_corpus(toy_out, toy_count, toy_size, toy_seed);
      return 0;
    }
    if (*mvtec_cmd) {
      toy::write_mvtec(mvtec_out, mvtec);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 4;
}
