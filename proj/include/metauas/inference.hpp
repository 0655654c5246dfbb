#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "metauas/config.hpp"
#include "metauas/encoder.hpp"
#include "metauas/segnet.hpp"

namespace metauas {

struct AnomalyMap {
  cv::Mat values;  // CV_32FC1 in [0, 1], model input resolution
  double image_score = 0.0;  // max of values
  std::string prompt_id;
  std::string query_id;
  std::string class_id;
};

struct NamedImage {
  std::string id;
  cv::Mat image;
};

struct PromptEntry {
  std::string class_id;
  std::string prompt_id;
  EmbeddingVector embedding;
  FeaturePyramid pyramid;  // batch of one
};

/// Class-aware prompt pool, one prompt per class, sorted by class id. Immutable once built.
class PromptPool {
 public:
  /// Throws std::invalid_argument on an empty list or duplicate class ids.
  static PromptPool build(MetaUasModel& model, const std::vector<std::pair<std::string, NamedImage>>& prompts);

  size_t size() const { return entries_.size(); }
  const std::vector<PromptEntry>& entries() const { return entries_; }
  const PromptEntry& entry(const std::string& class_id) const;

 private:
  std::vector<PromptEntry> entries_;
};

/// Cosine similarity; -1 when either vector has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
/// Index of the most similar candidate, ties to the smallest index. Empty input: invalid_argument.
size_t argmax_cosine(const EmbeddingVector& query, std::span<const EmbeddingVector> candidates);

EmbeddingVector embed(MetaUasModel& model, const cv::Mat& image);
std::vector<EmbeddingVector> embed_all(MetaUasModel& model, std::span<const cv::Mat> images);

/// Normal-set embeddings keyed by a fingerprint of (encoder, input size, image contents).
class EmbeddingCache {
 public:
  const std::vector<EmbeddingVector>& get(MetaUasModel& model, std::span<const cv::Mat> images);
  size_t misses() const { return misses_; }

 private:
  std::mutex mutex_;
  std::map<std::uint64_t, std::vector<EmbeddingVector>> entries_;
  size_t misses_ = 0;
};

std::string match_prompt(MetaUasModel& model, const cv::Mat& query, const PromptPool& pool);
size_t select_best_prompt(MetaUasModel& model, const cv::Mat& query, std::span<const cv::Mat> normals,
                          EmbeddingCache* cache = nullptr);

AnomalyMap predict(MetaUasModel& model, const cv::Mat& query, const cv::Mat& prompt);

struct QueryItem {
  std::string id;
  std::string class_id;
  cv::Mat image;
};

struct PromptSources {
  std::map<std::string, std::vector<NamedImage>> normals;  // per class, in a fixed order
  const PromptPool* pool = nullptr;  // pool-match; built from the fixed-random picks when null
};

/// fixed-random: the prompt index drawn for every class under `seed`.
std::map<std::string, size_t> fixed_random_prompts(const PromptSources& sources, std::uint64_t seed);

/// Applies the policy to every query. Results are ordered by (class id, query id).
std::vector<AnomalyMap> predict_batch(MetaUasModel& model, const std::vector<QueryItem>& queries, PromptPolicy policy,
                                      const PromptSources& sources, std::uint64_t seed,
                                      EmbeddingCache* cache = nullptr, int chunk = 8);

}  // namespace metauas
