#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "metauas/checkpoint.hpp"
#include "metauas/common.hpp"
#include "support.hpp"

using namespace metauas;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metauas_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig small_model() {
  ModelConfig c;
  c.input_size = 64;
  c.decoder_channels = 32;
  return c;
}

TrainConfig quick_train(int steps) {
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 4;
  t.learning_rate = 1e-3;
  t.max_steps = steps;
  t.validate_each_epoch = false;
  t.checkpoint_every = 0;
  return t;
}

// Pinned from one run of PinnedValidation below; depends on every seeded component.
constexpr double kPinnedValAuroc = 0.526047510;

}  // namespace

TEST(BceLoss, Examples) {
  auto half = torch::full({1, 1, 4, 4}, 0.5);
  auto y = (torch::rand({1, 1, 4, 4}) > 0.5).to(torch::kFloat32);
  EXPECT_NEAR(bce_loss(half, y).item<double>(), std::log(2.0), 1e-6);
  auto eps = torch::tensor({1e-7, 1 - 1e-7}, torch::kFloat64);
  EXPECT_LE(bce_loss(eps, torch::tensor({0.0, 1.0}, torch::kFloat64)).item<double>(), 2e-7);
  EXPECT_NEAR(bce_loss(torch::full({4}, 0.9, torch::kFloat64), torch::ones({4}, torch::kFloat64)).item<double>(),
              -std::log(0.9), 1e-12);
  EXPECT_THROW(bce_loss(torch::zeros({2}), torch::zeros({3})), std::invalid_argument);
}

TEST(BceLoss, FiniteWhenSaturated) {
  auto pred = torch::tensor({0.0, 1.0, 0.0, 1.0});
  auto y = torch::tensor({1.0, 0.0, 0.0, 1.0});
  EXPECT_TRUE(std::isfinite(bce_loss(pred, y).item<double>()));
}

TEST(Fit, EmptySplitRejected) {
  MetaUasModel model(small_model(), 0);
  EXPECT_THROW(fit(model, MemoryPairs({}), nullptr, quick_train(1)), std::invalid_argument);
}

TEST(Fit, EncoderFrozenSegNetUpdated) {
  MetaUasModel model(small_model(), 0);
  MemoryPairs pairs(support::toy_pairs(8, 64, 1));
  const auto enc_before = support::snapshot(model.encoder().parameters());
  const auto net_before = support::snapshot(model.learnable_parameters());
  const auto state = fit(model, pairs, nullptr, quick_train(2));
  EXPECT_EQ(state.step, 2);
  EXPECT_EQ(state.losses.size(), 2u);
  EXPECT_EQ(support::snapshot(model.encoder().parameters()), enc_before);
  EXPECT_NE(support::snapshot(model.learnable_parameters()), net_before);
}

TEST(Fit, RunDirectoryLayout) {
  const auto dir = scratch("fit_layout");
  MetaUasModel model(small_model(), 0);
  MemoryPairs pairs(support::toy_pairs(8, 64, 2));
  auto cfg = quick_train(0);
  cfg.epochs = 2;
  cfg.checkpoint_every = 1;
  cfg.validate_each_epoch = true;
  FitOptions opts;
  opts.run_dir = dir;
  const auto state = fit(model, pairs, &pairs, cfg, opts);
  EXPECT_EQ(state.step, 4);
  EXPECT_EQ(state.val_auroc.size(), 2u);
  for (const char* f : {"loss.csv", "val.csv", "epoch_1.ckpt", "epoch_2.ckpt", "final.ckpt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  std::ifstream in(dir / "loss.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,loss");
  int rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  EXPECT_EQ(rows, 4);
}

TEST(Fit, NonFiniteLossAbortsWithSnapshot) {
  const auto dir = scratch("fit_nan");
  MetaUasModel model(small_model(), 0);
  {
    torch::NoGradGuard guard;
    model.segnet()->head_parameters()[0].fill_(std::numeric_limits<float>::quiet_NaN());
  }
  MemoryPairs pairs(support::toy_pairs(4, 64, 3));
  FitOptions opts;
  opts.run_dir = dir;
  EXPECT_THROW(fit(model, pairs, nullptr, quick_train(3), opts), NonFiniteLoss);
  EXPECT_TRUE(fs::exists(dir / "nonfinite.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "nonfinite.json"));
}

TEST(Fit, SeedDeterminism) {
  MemoryPairs pairs(support::toy_pairs(8, 64, 4));
  MemoryPairs val(support::toy_pairs(4, 64, 40));
  auto run = [&] {
    auto cfg = quick_train(4);
    cfg.seed = 7;
    MetaUasModel model(small_model(), cfg.seed);
    FitOptions opts;
    opts.augment = synth::AugmentConfig{};
    fit(model, pairs, nullptr, cfg, opts);
    return validate(model, val, 4);
  };
  EXPECT_NEAR(run(), run(), 1e-4);
}

TEST(Fit, GradientsMatchCentralDifferences) {
  MetaUasModel model(small_model(), 5);
  const auto items = support::toy_pairs(2, 64, 5);
  const Batch b = make_batch(model, items);
  const auto r = support::check_align_gradients(model, b, 16, 1);
  EXPECT_EQ(r.checked, 16);
  EXPECT_LT(r.worst_relative, 1e-3);
}

TEST(Validate, ConstantPredictionsScoreHalf) {
  MetaUasModel model(small_model(), 0);
  {
    torch::NoGradGuard guard;
    for (auto& p : model.segnet()->head_parameters()) p.zero_();
  }
  MemoryPairs val(support::toy_pairs(4, 64, 6));
  EXPECT_DOUBLE_EQ(validate(model, val, 2), 0.5);
  EXPECT_THROW(validate(model, MemoryPairs({}), 2), std::invalid_argument);
}

TEST(Validate, PinnedValidation) {
  MemoryPairs pairs(support::toy_pairs(8, 64, 8));
  MemoryPairs val(support::toy_pairs(4, 64, 80));
  MetaUasModel model(small_model(), 0);
  fit(model, pairs, nullptr, quick_train(3));
  const double auc = validate(model, val, 4);
  EXPECT_NEAR(auc, kPinnedValAuroc, 1e-6);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = scratch("ckpt");
  auto cfg = small_model();
  cfg.align = AlignMode::hard;
  cfg.fusion = FusionMode::absdiff;
  MetaUasModel model(cfg, 3);
  model.eval();
  save_checkpoint(dir / "m.ckpt", model, {{"note", "x"}});
  const auto meta = read_checkpoint_meta(dir / "m.ckpt");
  EXPECT_EQ(meta.at("schema_version").get<int>(), kCheckpointSchema);
  EXPECT_EQ(meta.at("align").get<std::string>(), "hard");
  EXPECT_EQ(meta.at("extra").at("note").get<std::string>(), "x");
  auto back = load_checkpoint(dir / "m.ckpt");
  back->eval();
  EXPECT_EQ(back->config(), cfg);
  torch::NoGradGuard guard;
  auto q = torch::randn({1, 3, 64, 64}), p = torch::randn({1, 3, 64, 64});
  EXPECT_TRUE(torch::equal(model.forward(q, p), back->forward(q, p)));
}

TEST(Checkpoint, BadFilesAreDataErrors) {
  const auto dir = scratch("ckpt_bad");
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), DataError);
}

TEST(Device, Resolution) {
  EXPECT_EQ(resolve_device("cpu"), torch::Device(torch::kCPU));
  EXPECT_THROW(resolve_device("tpu"), ConfigError);
}
