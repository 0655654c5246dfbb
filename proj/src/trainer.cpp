#include "metauas/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include <opencv2/core/utility.hpp>

#include "metauas/checkpoint.hpp"
#include "metauas/common.hpp"
#include "metauas/image_io.hpp"
#include "metauas/metrics.hpp"
#include "metauas/tensor_convert.hpp"

namespace metauas {

namespace fs = std::filesystem;

ManifestPairs::ManifestPairs(synth::DatasetManifest manifest, synth::Split split, size_t limit)
    : manifest_(std::move(manifest)) {
  for (const auto* e : manifest_.split(split)) {
    if (limit != 0 && entries_.size() >= limit) break;
    entries_.push_back(*e);
  }
}

TrainingPair ManifestPairs::get(size_t index) const {
  const auto& e = entries_.at(index);
  auto files = synth::load_pair(manifest_, e);
  return {e.pair_id, std::move(files.prompt), std::move(files.query), std::move(files.mask)};
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
  if (!pred.sizes().equals(target.sizes())) throw std::invalid_argument("bce_loss: shape mismatch");
  auto p = pred.clamp(eps, 1.0 - eps);
  auto y = target.to(p.scalar_type());
  return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean();
}

void configure_threads(int threads) {
  if (threads < 1) threads = 1;
  if (at::get_num_threads() != threads) at::set_num_threads(threads);
  cv::setNumThreads(threads);
}

torch::Device resolve_device(const std::string& requested) {
  std::string name = requested;
  if (const char* env = std::getenv("METAUAS_DEVICE"); env != nullptr && *env != '\0') name = env;
  if (name == "cpu") return torch::kCPU;
  if (name.rfind("cuda", 0) == 0) {
    if (!torch::cuda::is_available()) throw ConfigError("device " + name + " requested but CUDA is unavailable");
    return torch::Device(name);
  }
  throw ConfigError("unknown device: " + name);
}

Batch make_batch(const MetaUasModel& model, const std::vector<TrainingPair>& pairs) {
  const int s = model.config().input_size;
  std::vector<torch::Tensor> q, p, m;
  for (const auto& pair : pairs) {
    q.push_back(model.preprocess(pair.query));
    p.push_back(model.preprocess(pair.prompt));
    m.push_back(mask_to_tensor(resize_mask(pair.mask, s, s)).to(model.device()));
  }
  return {torch::stack(q), torch::stack(p), torch::stack(m)};
}

namespace {

TrainingPair augmented(const TrainingPair& pair, const synth::AugmentConfig& aug, std::uint64_t seed) {
  synth::ChangePair cp;
  cp.prompt = pair.prompt;
  cp.query = pair.query;
  cp.mask = pair.mask;
  Rng rng(seed);
  auto out = synth::augment_pair(cp, aug, rng);
  return {pair.id, std::move(out.prompt), std::move(out.query), std::move(out.mask)};
}

double trailing_mean(const std::vector<double>& v, size_t window) {
  const size_t n = std::min(window, v.size());
  if (n == 0) return 0.0;
  return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / static_cast<double>(n);
}

}  // namespace

TrainState fit(MetaUasModel& model, const PairSource& train, const PairSource* val, const TrainConfig& config,
               const FitOptions& options) {
  config.validate();
  if (train.size() == 0) throw std::invalid_argument("training split is empty");
  configure_threads(config.threads);

  const bool write = !options.run_dir.empty();
  std::ofstream loss_log, val_log;
  if (write) {
    fs::create_directories(options.run_dir);
    loss_log.open(options.run_dir / "loss.csv");
    loss_log << "step,loss\n" << std::setprecision(9);
    val_log.open(options.run_dir / "val.csv");
    val_log << "epoch,pixel_auroc\n" << std::setprecision(9);
  }

  auto params = model.learnable_parameters();
  torch::optim::AdamW optimizer(
      params, torch::optim::AdamWOptions(config.learning_rate).weight_decay(config.weight_decay));

  size_t limit = train.size();
  if (config.max_pairs > 0) limit = std::min(limit, static_cast<size_t>(config.max_pairs));
  const size_t batch = static_cast<size_t>(config.batch_size);

  TrainState state;
  bool stop = false;
  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    model.train();
    std::vector<size_t> order(limit);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle(mix_seed(config.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle);

    for (size_t start = 0; start < limit && !stop; start += batch) {
      std::vector<TrainingPair> items;
      for (size_t k = start; k < std::min(limit, start + batch); ++k) {
        TrainingPair pair = train.get(order[k]);
        if (config.augment && !options.augment.is_identity()) {
          const std::uint64_t s = mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1), order[k]);
          pair = augmented(pair, options.augment, s);
        }
        items.push_back(std::move(pair));
      }
      const Batch b = make_batch(model, items);
      optimizer.zero_grad();
      auto pred = model.forward(b.query, b.prompt);
      auto loss = bce_loss(pred, b.mask);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        if (write) {
          save_checkpoint(options.run_dir / "nonfinite.ckpt", model, {{"step", state.step}});
          save_json(options.run_dir / "nonfinite.json",
                    {{"step", state.step}, {"epoch", epoch}, {"loss", std::to_string(value)}});
        }
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(state.step));
      }
      loss.backward();
      if (config.grad_clip > 0) torch::nn::utils::clip_grad_norm_(params, config.grad_clip);
      optimizer.step();

      ++state.step;
      state.losses.push_back(value);
      state.running_loss = trailing_mean(state.losses, 50);
      if (write) loss_log << state.step << ',' << value << '\n';
      if (options.on_step) options.on_step(state);
      if (config.max_steps > 0 && state.step >= config.max_steps) stop = true;
    }

    if (val != nullptr && val->size() > 0 && config.validate_each_epoch) {
      const double v = validate(model, *val, config.batch_size);
      state.val_auroc.push_back(v);
      state.best_val = std::max(state.best_val, v);
      if (write) val_log << epoch + 1 << ',' << v << '\n' << std::flush;
    }
    if (write && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      const fs::path ck = options.run_dir / ("epoch_" + std::to_string(epoch + 1) + ".ckpt");
      save_checkpoint(ck, model, {{"epoch", epoch + 1}, {"step", state.step}});
      state.last_checkpoint = ck;
    }
    if (write) loss_log.flush();
  }
  if (write) {
    const fs::path ck = options.run_dir / "final.ckpt";
    save_checkpoint(ck, model, {{"step", state.step}});
    state.last_checkpoint = ck;
  }
  model.eval();
  return state;
}

fs::path fit_manifest(const synth::DatasetManifest& manifest, const TrainConfig& config,
                      const ModelConfig& model_config, const fs::path& run_dir) {
  ManifestPairs train(manifest, synth::Split::train);
  if (train.size() == 0) throw std::invalid_argument("manifest train split is empty");
  ManifestPairs val(manifest, synth::Split::val);
  configure_threads(config.threads);
  MetaUasModel model(model_config, config.seed);
  model.to(resolve_device(config.device));
  fs::create_directories(run_dir);
  save_json(run_dir / "config.json", {{"model", to_json(model_config)},
                                      {"train", to_json(config)},
                                      {"manifest", (manifest.root / "manifest.json").string()}});
  FitOptions options;
  options.run_dir = run_dir;
  options.augment = manifest.config.augment;
  options.on_step = [&](const TrainState& s) {
    if (s.step % 25 == 0) std::cerr << "step " << s.step << " loss " << s.running_loss << '\n';
  };
  return fit(model, train, val.size() > 0 ? &val : nullptr, config, options).last_checkpoint;
}

double validate(MetaUasModel& model, const PairSource& pairs, int batch_size) {
  if (pairs.size() == 0) throw std::invalid_argument("validation split is empty");
  model.eval();
  torch::NoGradGuard guard;
  metrics::ScoredSet set;
  const size_t step = static_cast<size_t>(std::max(1, batch_size));
  for (size_t start = 0; start < pairs.size(); start += step) {
    std::vector<TrainingPair> items;
    for (size_t k = start; k < std::min(pairs.size(), start + step); ++k) items.push_back(pairs.get(k));
    const Batch b = make_batch(model, items);
    auto pred = model.forward(b.query, b.prompt).to(torch::kCPU);
    for (int64_t i = 0; i < pred.size(0); ++i) {
      cv::Mat map = tensor_to_map(pred[i]);
      cv::Mat gt = tensor_to_map(b.mask[i].to(torch::kCPU));
      cv::Mat gt8;
      gt.convertTo(gt8, CV_8U);
      set.append_pixels(map, gt8);
    }
  }
  return metrics::auroc(set);
}

double validate(const fs::path& checkpoint, const synth::DatasetManifest& manifest) {
  auto model = load_checkpoint(checkpoint);
  ManifestPairs val(manifest, synth::Split::val);
  return validate(*model, val);
}

}  // namespace metauas
