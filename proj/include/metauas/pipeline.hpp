#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "metauas/config.hpp"
#include "metauas/metrics.hpp"
#include "metauas/segnet.hpp"
#include "metauas/trainer.hpp"

namespace metauas {

struct EvalOutputs {
  metrics::SummaryReport summary;
  std::vector<metrics::MetricsReport> runs;  // one per seed (a single run for best-match)
};

/// Evaluates `model` on an MVTec-layout dataset. fixed-random and pool-match repeat over every
/// configured seed; best-match runs once. Maps are compared with masks at the model input size.
/// When `out_dir` is non-empty writes report.json, report.txt, report.csv and optional maps.
EvalOutputs run_eval(MetaUasModel& model, const EvalConfig& config, const std::filesystem::path& out_dir = {},
                     const nlohmann::json& echo = {});
/// Loads config.eval.checkpoint and evaluates it.
EvalOutputs run_eval(const RunConfig& config, const std::filesystem::path& out_dir);

struct BenchReport {
  int64_t total_params = 0;
  int64_t learnable_params = 0;
  int64_t encoder_params = 0;
  int iterations = 0;
  int large_batch = 32;
  double median_ms_batch1 = 0;       // one pair
  double median_ms_large_batch = 0;  // whole batch
  double per_pair_ms_large_batch = 0;
};

/// Warm-up, then the median wall time of `iterations` forward passes at batch 1 and `large_batch`.
BenchReport bench(MetaUasModel& model, int iterations = 100, int large_batch = 32);
nlohmann::json to_json(const BenchReport& report);

struct HeldOutScores {
  double pixel_auroc = 0;
  double image_auroc = 0;
  int positives = 0;
  int negatives = 0;
};

/// Scores a held-out split. Each pair is optionally re-augmented with `jitter` (seeded per
/// pair). Pixel AUROC pools the pixels of the change pairs; image AUROC ranks the max of each map
/// of a change pair against the max of a no-change pair built from the same prompt and an
/// independently jittered copy of it.
HeldOutScores score_held_out(MetaUasModel& model, const PairSource& pairs, const synth::AugmentConfig& jitter,
                             std::uint64_t seed, int batch_size = 16);

}  // namespace metauas
