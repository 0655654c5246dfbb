#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

#include "metauas/checkpoint.hpp"
#include "metauas/config.hpp"
#include "metauas/pipeline.hpp"
#include "metauas/toy_data.hpp"
#include "support.hpp"

using namespace metauas;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metauas_pipe_" + name);
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

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EvalConfig toy_eval(const fs::path& root) {
  EvalConfig e;
  e.dataset_root = root.string();
  e.seeds = {0, 1};
  return e;
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(METAUAS_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST(Eval, ToyDatasetReportFiles) {
  const auto dir = scratch("eval");
  toy::write_mvtec(dir / "data", {});
  MetaUasModel model(small_model(), 0);
  const auto out = run_eval(model, toy_eval(dir / "data"), dir / "report");
  for (const char* f : {"report.json", "report.txt", "report.csv"}) EXPECT_TRUE(fs::exists(dir / "report" / f)) << f;
  EXPECT_EQ(out.runs.size(), 2u);
  EXPECT_EQ(out.summary.runs, 2);
  ASSERT_EQ(out.summary.rows.size(), 3u);
  EXPECT_EQ(out.summary.rows.back(), "mean");
  for (const auto& cell : out.summary.cells.at("mean")) {
    ASSERT_TRUE(cell.mean.has_value());
    EXPECT_GE(*cell.mean, 0.0);
    EXPECT_LE(*cell.mean, 1.0);
  }
  const auto& disc = out.runs[0].classes[0];
  EXPECT_EQ(disc.name, "disc");
  EXPECT_EQ(disc.normal_images, 3);
  EXPECT_EQ(disc.anomalous_images, 4);
}

TEST(Eval, RerunIsIdentical) {
  const auto dir = scratch("rerun");
  toy::write_mvtec(dir / "data", {});
  MetaUasModel model(small_model(), 0);
  run_eval(model, toy_eval(dir / "data"), dir / "a");
  run_eval(model, toy_eval(dir / "data"), dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "report.txt"), slurp(dir / "b" / "report.txt"));
}

TEST(Eval, BestMatchRunsOnce) {
  const auto dir = scratch("best");
  toy::write_mvtec(dir / "data", {});
  MetaUasModel model(small_model(), 0);
  auto cfg = toy_eval(dir / "data");
  cfg.policy = PromptPolicy::best_match;
  const auto out = run_eval(model, cfg);
  EXPECT_EQ(out.runs.size(), 1u);
  EXPECT_FALSE(out.summary.cells.at("mean")[0].std.has_value());
}

TEST(Eval, MissingMaskIsDataError) {
  const auto dir = scratch("nomask");
  toy::write_mvtec(dir / "data", {});
  for (const auto& e : fs::recursive_directory_iterator(dir / "data" / "grid" / "ground_truth")) {
    if (e.is_regular_file()) {
      fs::remove(e.path());
      break;
    }
  }
  MetaUasModel model(small_model(), 0);
  EXPECT_THROW(run_eval(model, toy_eval(dir / "data")), DataError);
}

TEST(Bench, ParameterPartition) {
  MetaUasModel model(small_model(), 0);
  const auto r = bench(model, 2, 2);
  EXPECT_EQ(r.total_params, r.learnable_params + r.encoder_params);
  EXPECT_GT(r.learnable_params, 0);
  EXPECT_GT(r.median_ms_batch1, 0.0);
  EXPECT_NEAR(r.per_pair_ms_large_batch, r.median_ms_large_batch / 2, 1e-9);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("total_params").get<int64_t>(), r.total_params);
}

TEST(HeldOut, CountsAndRange) {
  MetaUasModel model(small_model(), 0);
  MemoryPairs pairs(support::toy_pairs(6, 64, 9));
  synth::AugmentConfig none;
  none.enabled = false;
  const auto a = score_held_out(model, pairs, none, 1, 4);
  EXPECT_EQ(a.positives, 6);
  EXPECT_EQ(a.negatives, 6);
  EXPECT_GE(a.pixel_auroc, 0.0);
  EXPECT_LE(a.pixel_auroc, 1.0);
  const auto b = score_held_out(model, pairs, none, 1, 4);
  EXPECT_DOUBLE_EQ(a.pixel_auroc, b.pixel_auroc);
  EXPECT_DOUBLE_EQ(a.image_auroc, b.image_auroc);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli_codes");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --bogus-flag"), 2);
  EXPECT_EQ(run_cli("bench --align sideways"), 2);
  EXPECT_EQ(run_cli("predict --checkpoint " + (dir / "missing.ckpt").string() + " --query a.png --prompt b.png --out " +
                    (dir / "o.png").string()),
            3);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(run_cli("bench --config " + (dir / "bad.json").string()), 2);
}

TEST(Cli, PredictWritesMapAndSidecar) {
  const auto dir = scratch("cli_predict");
  MetaUasModel model(small_model(), 0);
  save_checkpoint(dir / "m.ckpt", model);
  const auto q = toy::make_record("q", 64, 1), p = toy::make_record("p", 64, 2);
  cv::imwrite((dir / "q.png").string(), q.image);
  cv::imwrite((dir / "p.png").string(), p.image);
  ASSERT_EQ(run_cli("predict --checkpoint " + (dir / "m.ckpt").string() + " --query " + (dir / "q.png").string() +
                    " --prompt " + (dir / "p.png").string() + " --out " + (dir / "map.png").string()),
            0);
  const cv::Mat m = cv::imread((dir / "map.png").string(), cv::IMREAD_UNCHANGED);
  ASSERT_FALSE(m.empty());
  EXPECT_EQ(m.type(), CV_16UC1);
  EXPECT_EQ(m.rows, 64);
  const auto side = load_json(dir / "map.json");
  EXPECT_EQ(side.at("query_id").get<std::string>(), "q.png");
  double hi = 0;
  cv::minMaxLoc(m, nullptr, &hi);
  EXPECT_NEAR(side.at("image_score").get<double>(), hi / 65535.0, 1.0 / 65535);
}

TEST(Cli, ToyEndToEnd) {
  const auto dir = scratch("cli_e2e");
  const std::string d = dir.string();
  ASSERT_EQ(run_cli("toy-corpus --out " + d + "/corpus --count 16 --size 64"), 0);
  ASSERT_EQ(run_cli("synth --corpus " + d + "/corpus --out " + d + "/syn --image-size 64"), 0);
  ASSERT_EQ(run_cli("train --manifest " + d + "/syn/manifest.json --out " + d +
                    "/run --input-size 64 --max-steps 2 --batch 4 --epochs 1"),
            0);
  ASSERT_EQ(run_cli("toy-mvtec --out " + d + "/mv"), 0);
  ASSERT_EQ(run_cli("eval --checkpoint " + d + "/run/final.ckpt --dataset " + d + "/mv --out " + d + "/rep --seeds 0"), 0);
  const auto report = load_json(dir / "rep" / "report.json");
  EXPECT_FALSE(report.empty());
  EXPECT_EQ(run_cli("eval --checkpoint " + d + "/run/final.ckpt --out " + d + "/rep2"), 2);
  EXPECT_EQ(run_cli("synth --corpus " + d + "/nowhere --out " + d + "/syn2"), 3);
}
