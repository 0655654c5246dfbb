#include "metauas/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>

#include "metauas/checkpoint.hpp"
#include "metauas/common.hpp"
#include "metauas/dataset_index.hpp"
#include "metauas/image_io.hpp"
#include "metauas/inference.hpp"
#include "metauas/tensor_convert.hpp"

namespace metauas {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> seeds_for(const EvalConfig& config) {
  if (config.policy == PromptPolicy::best_match) return {config.seeds.empty() ? 0 : config.seeds.front()};
  return config.seeds;
}

}  // namespace

EvalOutputs run_eval(MetaUasModel& model, const EvalConfig& config, const fs::path& out_dir,
                     const nlohmann::json& echo) {
  config.validate();
  const DatasetIndex index = ingest_dataset(config.dataset_root);
  const int s = model.config().input_size;
  const auto seeds = seeds_for(config);
  std::vector<std::vector<metrics::ClassResults>> per_seed(seeds.size());
  EmbeddingCache cache;

  for (const ClassIndex& cls : index.classes) {
    PromptSources sources;
    auto& normals = sources.normals[cls.name];
    for (const auto& p : cls.train_good) normals.push_back({p.stem().string(), resize_image(load_image(p), s, s)});
    std::vector<QueryItem> queries;
    std::map<std::string, const TestEntry*> by_id;
    for (const TestEntry& t : cls.test) {
      queries.push_back({t.id, cls.name, resize_image(load_image(t.image), s, s)});
      by_id[t.id] = &t;
    }
    for (size_t k = 0; k < seeds.size(); ++k) {
      const auto maps = predict_batch(model, queries, config.policy, sources, seeds[k], &cache);
      metrics::ClassResults cr;
      cr.name = cls.name;
      for (const AnomalyMap& m : maps) {
        const TestEntry& t = *by_id.at(m.query_id);
        metrics::ImageResult r;
        r.id = t.id;
        r.map = m.values;
        r.score = m.image_score;
        r.anomalous = t.anomalous;
        r.gt = t.anomalous ? resize_mask(load_mask(t.mask), s, s) : cv::Mat::zeros(s, s, CV_8UC1);
        if (config.save_maps && !out_dir.empty()) {
          const fs::path dir = out_dir / "maps" / ("seed_" + std::to_string(seeds[k])) / cls.name / t.defect;
          fs::create_directories(dir);
          save_map_u16(dir / (t.image.stem().string() + ".png"), m.values);
        }
        cr.images.push_back(std::move(r));
      }
      per_seed[k].push_back(std::move(cr));
    }
    std::cerr << "evaluated " << cls.name << " (" << cls.test.size() << " images)\n";
  }

  metrics::ProOptions pro{config.pro_fpr_cap, config.pro_grid};
  EvalOutputs out;
  for (auto& results : per_seed) out.runs.push_back(metrics::evaluate(std::move(results), pro));
  nlohmann::json cfg_echo = echo.is_null() ? nlohmann::json::object() : echo;
  cfg_echo["eval"] = to_json(config);
  cfg_echo["eval"]["seeds_used"] = seeds;
  cfg_echo["model"] = to_json(model.config());
  out.summary = metrics::summarize(out.runs, cfg_echo);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "report.json", metrics::to_json(out.summary).dump(2) + "\n");
    write_file_atomic(out_dir / "report.txt", metrics::render_table(out.summary));
    if (config.write_csv) write_file_atomic(out_dir / "report.csv", metrics::render_csv(out.summary));
  }
  return out;
}

EvalOutputs run_eval(const RunConfig& config, const fs::path& out_dir) {
  config.eval.validate();
  if (config.eval.checkpoint.empty()) throw ConfigError("eval.checkpoint is not set");
  configure_threads(config.train.threads);
  auto model = load_checkpoint(config.eval.checkpoint, config.model.encoder_weights);
  model->to(resolve_device(config.train.device));
  nlohmann::json echo = {{"checkpoint", config.eval.checkpoint}};
  return run_eval(*model, config.eval, out_dir, echo);
}

BenchReport bench(MetaUasModel& model, int iterations, int large_batch) {
  BenchReport r;
  r.learnable_params = model.learnable_count();
  r.encoder_params = model.encoder().parameter_count();
  r.total_params = model.config().finetune_encoder ? r.learnable_params : r.learnable_params + r.encoder_params;
  r.iterations = std::max(1, iterations);
  r.large_batch = std::max(1, large_batch);
  model.eval();
  torch::NoGradGuard guard;
  const int64_t s = model.config().input_size;
  auto time_batch = [&](int64_t b) {
    auto q = torch::randn({b, 3, s, s}).to(model.device());
    auto p = torch::randn({b, 3, s, s}).to(model.device());
    for (int i = 0; i < 3; ++i) model.forward(q, p);
    std::vector<double> ms;
    for (int i = 0; i < r.iterations; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      auto out = model.forward(q, p);
      (void)out.sum().item<float>();
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
    return ms[ms.size() / 2];
  };
  r.median_ms_batch1 = time_batch(1);
  r.median_ms_large_batch = time_batch(r.large_batch);
  r.per_pair_ms_large_batch = r.median_ms_large_batch / r.large_batch;
  return r;
}

nlohmann::json to_json(const BenchReport& r) {
  return {{"total_params", r.total_params},
          {"learnable_params", r.learnable_params},
          {"encoder_params", r.encoder_params},
          {"iterations", r.iterations},
          {"median_ms_batch1", r.median_ms_batch1},
          {"large_batch", r.large_batch},
          {"median_ms_large_batch", r.median_ms_large_batch},
          {"per_pair_ms_large_batch", r.per_pair_ms_large_batch}};
}

HeldOutScores score_held_out(MetaUasModel& model, const PairSource& pairs, const synth::AugmentConfig& jitter,
                             std::uint64_t seed, int batch_size) {
  if (pairs.size() == 0) throw std::invalid_argument("held-out split is empty");
  model.eval();
  torch::NoGradGuard guard;
  metrics::ScoredSet pixels, images;
  HeldOutScores out;
  const size_t step = static_cast<size_t>(std::max(1, batch_size));
  for (size_t start = 0; start < pairs.size(); start += step) {
    std::vector<TrainingPair> pos, neg;
    for (size_t k = start; k < std::min(pairs.size(), start + step); ++k) {
      TrainingPair p = pairs.get(k);
      Rng rng(record_seed(seed, p.id));
      synth::ChangePair cp{p.prompt, p.query, p.mask};
      cp = synth::augment_pair(cp, jitter, rng);
      pos.push_back({p.id, cp.prompt, cp.query, cp.mask});
      synth::ChangePair same{p.prompt, p.prompt, cv::Mat::zeros(p.mask.size(), CV_8UC1)};
      same = synth::augment_pair(same, jitter, rng);
      neg.push_back({p.id + "/same", same.prompt, same.query, same.mask});
    }
    for (const auto* set : {&pos, &neg}) {
      const bool positive = set == &pos;
      const Batch b = make_batch(model, *set);
      auto pred = model.forward(b.query, b.prompt).to(torch::kCPU);
      for (int64_t i = 0; i < pred.size(0); ++i) {
        cv::Mat map = tensor_to_map(pred[i]);
        double lo = 0, hi = 0;
        cv::minMaxLoc(map, &lo, &hi);
        images.push(hi, positive);
        if (positive) {
          cv::Mat gt;
          tensor_to_map(b.mask[i].to(torch::kCPU)).convertTo(gt, CV_8U);
          pixels.append_pixels(map, gt);
          ++out.positives;
        } else {
          ++out.negatives;
        }
      }
    }
  }
  out.pixel_auroc = metrics::auroc(pixels);
  out.image_auroc = metrics::auroc(images);
  return out;
}

}  // namespace metauas
