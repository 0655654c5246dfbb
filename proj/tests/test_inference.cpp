#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metauas/common.hpp"
#include "metauas/inference.hpp"
#include "metauas/toy_data.hpp"

using namespace metauas;

namespace {

EmbeddingVector vec(std::vector<double> v) {
  auto t = torch::tensor(v, torch::kFloat64);
  return {t, t.norm().item<double>()};
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return -1;
  return dot / std::sqrt(na * nb);
}

ModelConfig small_model() {
  ModelConfig c;
  c.input_size = 64;
  c.decoder_channels = 32;
  return c;
}

cv::Mat image(std::uint64_t seed) { return toy::make_record("x", 64, seed).image; }

std::vector<NamedImage> normals(const std::string& prefix, int n, std::uint64_t seed) {
  std::vector<NamedImage> out;
  for (int i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), image(mix_seed(seed, i))});
  return out;
}

}  // namespace

TEST(Cosine, MatchesOracleAndArgmax) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 2 + trial % 7, n = 1 + trial % 5;
    std::vector<double> q(d);
    for (auto& x : q) x = g(rng);
    std::vector<EmbeddingVector> cands;
    size_t expect = 0;
    double best = -2;
    for (int k = 0; k < n; ++k) {
      std::vector<double> c(d);
      for (auto& x : c) x = g(rng);
      const double s = oracle_cosine(q, c);
      EXPECT_NEAR(cosine(vec(q), vec(c)), s, 1e-12);
      if (s > best) best = s, expect = static_cast<size_t>(k);
      cands.push_back(vec(c));
    }
    EXPECT_EQ(argmax_cosine(vec(q), cands), expect);
  }
}

TEST(Cosine, TiesZeroNormAndScale) {
  const auto q = vec({1, 0});
  std::vector<EmbeddingVector> same{vec({0, 1}), vec({2, 0}), vec({5, 0})};
  EXPECT_EQ(argmax_cosine(q, same), 1u);
  EXPECT_DOUBLE_EQ(cosine(vec({0, 0}), q), -1.0);
  EXPECT_DOUBLE_EQ(cosine(q, vec({0, 0})), -1.0);
  std::vector<EmbeddingVector> with_zero{vec({0, 0}), vec({-1, 0})};
  EXPECT_EQ(argmax_cosine(q, with_zero), 0u);
  EXPECT_NEAR(cosine(vec({3, 4}), vec({1, 2})), cosine(vec({30, 40}), vec({0.1, 0.2})), 1e-12);
  EXPECT_THROW(argmax_cosine(q, std::vector<EmbeddingVector>{}), std::invalid_argument);
}

TEST(PromptPool, BuildSortsAndRejects) {
  MetaUasModel model(small_model(), 0);
  std::vector<std::pair<std::string, NamedImage>> prompts{{"wood", {"w", image(1)}}, {"bottle", {"b", image(2)}}};
  const auto pool = PromptPool::build(model, prompts);
  ASSERT_EQ(pool.size(), 2u);
  EXPECT_EQ(pool.entries()[0].class_id, "bottle");
  EXPECT_EQ(pool.entry("wood").prompt_id, "w");
  EXPECT_THROW(pool.entry("cable"), std::out_of_range);
  EXPECT_THROW(PromptPool::build(model, {}), std::invalid_argument);
  prompts.push_back({"wood", {"w2", image(3)}});
  EXPECT_THROW(PromptPool::build(model, prompts), std::invalid_argument);
}

TEST(PromptPool, SelfMatchAndSingleton) {
  MetaUasModel model(small_model(), 0);
  std::vector<std::pair<std::string, NamedImage>> prompts;
  for (int i = 0; i < 4; ++i) prompts.push_back({"c" + std::to_string(i), {"p", image(100 + i)}});
  const auto pool = PromptPool::build(model, prompts);
  for (const auto& [cls, img] : prompts) EXPECT_EQ(match_prompt(model, img.image, pool), cls);
  const auto one = PromptPool::build(model, {{"only", {"p", image(5)}}});
  EXPECT_EQ(match_prompt(model, image(6), one), "only");
}

TEST(BestPrompt, DuplicatesAndSingleton) {
  MetaUasModel model(small_model(), 0);
  const cv::Mat q = image(7);
  std::vector<cv::Mat> set{image(8), q.clone(), image(9), q.clone()};
  EXPECT_EQ(select_best_prompt(model, q, set), 1u);
  EXPECT_EQ(select_best_prompt(model, q, std::vector<cv::Mat>{image(10)}), 0u);
  EXPECT_THROW(select_best_prompt(model, q, std::vector<cv::Mat>{}), std::invalid_argument);
}

TEST(BestPrompt, CacheHitsOnRepeatNormals) {
  MetaUasModel model(small_model(), 0);
  EmbeddingCache cache;
  std::vector<cv::Mat> set{image(20), image(21), image(22)};
  const size_t a = select_best_prompt(model, image(23), set, &cache);
  const size_t b = select_best_prompt(model, image(24), set, &cache);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(a, select_best_prompt(model, image(23), set));
  EXPECT_EQ(b, select_best_prompt(model, image(24), set));
  set.push_back(image(25));
  select_best_prompt(model, image(23), set, &cache);
  EXPECT_EQ(cache.misses(), 2u);
}

TEST(Predict, ImageScoreIsMapMax) {
  MetaUasModel model(small_model(), 0);
  const auto m = predict(model, image(30), image(31));
  EXPECT_EQ(m.values.rows, 64);
  EXPECT_EQ(m.values.cols, 64);
  EXPECT_EQ(m.values.type(), CV_32FC1);
  double lo = 0, hi = 0;
  cv::minMaxLoc(m.values, &lo, &hi);
  EXPECT_DOUBLE_EQ(m.image_score, hi);
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
}

TEST(FixedRandom, DeterministicPerSeed) {
  PromptSources src;
  src.normals["a"] = normals("a", 6, 1);
  src.normals["b"] = normals("b", 6, 2);
  const auto x = fixed_random_prompts(src, 3);
  EXPECT_EQ(x, fixed_random_prompts(src, 3));
  for (const auto& [cls, idx] : x) EXPECT_LT(idx, 6u);
  bool differs = false;
  for (std::uint64_t s = 0; s < 10 && !differs; ++s) differs = fixed_random_prompts(src, s) != x;
  EXPECT_TRUE(differs);
  src.normals["c"] = {};
  EXPECT_THROW(fixed_random_prompts(src, 3), DataError);
}

TEST(PredictBatch, OrderingAndPolicies) {
  MetaUasModel model(small_model(), 0);
  PromptSources src;
  src.normals["b"] = normals("nb", 3, 40);
  src.normals["a"] = normals("na", 3, 41);
  std::vector<QueryItem> queries{{"q2", "b", image(50)}, {"q1", "b", image(51)}, {"q9", "a", image(52)}};
  const auto picks = fixed_random_prompts(src, 0);

  const auto out = predict_batch(model, queries, PromptPolicy::fixed_random, src, 0, nullptr, 2);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].query_id, "q9");
  EXPECT_EQ(out[1].query_id, "q1");
  EXPECT_EQ(out[2].query_id, "q2");
  // Batched forward agrees with single-pair predict.
  const auto single = predict(model, queries[1].image, src.normals["b"][picks.at("b")].image);
  EXPECT_EQ(out[1].prompt_id, src.normals["b"][picks.at("b")].id);
  EXPECT_LT(cv::norm(single.values, out[1].values, cv::NORM_INF), 1e-5);

  // A single normal leaves nothing to choose: best-match equals fixed-random.
  PromptSources one;
  one.normals["b"] = {src.normals["b"][0]};
  one.normals["a"] = {src.normals["a"][0]};
  const auto f = predict_batch(model, queries, PromptPolicy::fixed_random, one, 0);
  const auto b = predict_batch(model, queries, PromptPolicy::best_match, one, 0);
  for (size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f[i].prompt_id, b[i].prompt_id);
    EXPECT_EQ(cv::norm(f[i].values, b[i].values, cv::NORM_INF), 0.0);
  }

  const auto p = predict_batch(model, queries, PromptPolicy::pool_match, src, 0);
  for (const auto& m : p) EXPECT_FALSE(m.prompt_id.empty());

  queries.push_back({"qz", "zzz", image(53)});
  EXPECT_THROW(predict_batch(model, queries, PromptPolicy::fixed_random, src, 0), DataError);
}
