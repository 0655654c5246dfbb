#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "metauas/config.hpp"
#include "metauas/segnet.hpp"
#include "metauas/synth.hpp"

namespace metauas {

struct TrainingPair {
  std::string id;
  cv::Mat prompt;
  cv::Mat query;
  cv::Mat mask;
};

class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual size_t size() const = 0;
  virtual TrainingPair get(size_t index) const = 0;
};

class MemoryPairs final : public PairSource {
 public:
  explicit MemoryPairs(std::vector<TrainingPair> pairs) : pairs_(std::move(pairs)) {}
  size_t size() const override { return pairs_.size(); }
  TrainingPair get(size_t index) const override { return pairs_.at(index); }

 private:
  std::vector<TrainingPair> pairs_;
};

/// Pairs of one manifest split, read from disk on demand. `limit` = 0 keeps all of them;
/// otherwise the first `limit` in manifest order.
class ManifestPairs final : public PairSource {
 public:
  ManifestPairs(synth::DatasetManifest manifest, synth::Split split, size_t limit = 0);
  size_t size() const override { return entries_.size(); }
  TrainingPair get(size_t index) const override;

 private:
  synth::DatasetManifest manifest_;
  std::vector<synth::ManifestEntry> entries_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean pixel binary cross-entropy with predictions clamped to [eps, 1 - eps].
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps = 1e-7);

struct TrainState {
  int64_t step = 0;
  double running_loss = 0.0;  // mean of the last 50 step losses
  double best_val = -1.0;
  std::vector<double> losses;     // one per step
  std::vector<double> val_auroc;  // one per validated epoch
  std::filesystem::path last_checkpoint;
};

struct FitOptions {
  std::filesystem::path run_dir;  // empty: nothing is written
  synth::AugmentConfig augment;
  std::function<void(const TrainState&)> on_step;
};

/// Optimizes the SegNet parameters of `model` (encoder stays frozen unless the model was built
/// with finetune_encoder). Throws std::invalid_argument on an empty train source and
/// NonFiniteLoss (after writing a diagnostic snapshot) when a loss is NaN or infinite.
TrainState fit(MetaUasModel& model, const PairSource& train, const PairSource* val, const TrainConfig& config,
               const FitOptions& options = {});

/// Builds a model from `model_config` (initialized from `config.seed`), trains on the manifest's
/// train split with the manifest's augmentation settings and writes everything to `run_dir`.
/// Returns the final checkpoint path.
std::filesystem::path fit_manifest(const synth::DatasetManifest& manifest, const TrainConfig& config,
                                   const ModelConfig& model_config, const std::filesystem::path& run_dir);

/// Pixel AUROC of the model's maps against the masks of every pair in `pairs`.
double validate(MetaUasModel& model, const PairSource& pairs, int batch_size = 16);
double validate(const std::filesystem::path& checkpoint, const synth::DatasetManifest& manifest);

/// Stacks preprocessed pairs into (query, prompt, mask) batches at the model's input size.
struct Batch {
  torch::Tensor query, prompt, mask;
};
Batch make_batch(const MetaUasModel& model, const std::vector<TrainingPair>& pairs);

/// Sets the torch intra-op thread count (and the OpenCV one) once per process.
void configure_threads(int threads);
torch::Device resolve_device(const std::string& requested);

}  // namespace metauas
