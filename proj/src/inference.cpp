#include "metauas/inference.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "metauas/common.hpp"
#include "metauas/image_io.hpp"
#include "metauas/tensor_convert.hpp"

namespace metauas {

namespace {

FeaturePyramid encode_one(MetaUasModel& model, const cv::Mat& image) {
  return model.encode(model.preprocess(image).unsqueeze(0));
}

FeaturePyramid expand(const FeaturePyramid& p, int64_t b) {
  FeaturePyramid out;
  for (int i = 0; i < kStages; ++i) out.stages[i] = p.stages[i].expand({b, -1, -1, -1});
  return out;
}

AnomalyMap to_map(const torch::Tensor& prob) {
  AnomalyMap m;
  m.values = tensor_to_map(prob);
  double lo = 0, hi = 0;
  cv::minMaxLoc(m.values, &lo, &hi);
  m.image_score = hi;
  return m;
}

}  // namespace

PromptPool PromptPool::build(MetaUasModel& model, const std::vector<std::pair<std::string, NamedImage>>& prompts) {
  if (prompts.empty()) throw std::invalid_argument("prompt pool needs at least one prompt");
  PromptPool pool;
  torch::NoGradGuard guard;
  for (const auto& [cls, img] : prompts) {
    for (const auto& e : pool.entries_) {
      if (e.class_id == cls) throw std::invalid_argument("duplicate class id in prompt pool: " + cls);
    }
    PromptEntry e;
    e.class_id = cls;
    e.prompt_id = img.id;
    e.pyramid = encode_one(model, img.image);
    e.embedding = to_embedding(embed_global(e.pyramid)[0]);
    pool.entries_.push_back(std::move(e));
  }
  std::sort(pool.entries_.begin(), pool.entries_.end(),
            [](const PromptEntry& a, const PromptEntry& b) { return a.class_id < b.class_id; });
  return pool;
}

const PromptEntry& PromptPool::entry(const std::string& class_id) const {
  for (const auto& e : entries_) {
    if (e.class_id == class_id) return e;
  }
  throw std::out_of_range("prompt pool has no class " + class_id);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return -1.0;
  return torch::dot(a.values, b.values).item<double>() / (a.norm * b.norm);
}

size_t argmax_cosine(const EmbeddingVector& query, std::span<const EmbeddingVector> candidates) {
  if (candidates.empty()) throw std::invalid_argument("argmax_cosine over an empty set");
  size_t best = 0;
  double best_sim = cosine(query, candidates[0]);
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double s = cosine(query, candidates[i]);
    if (s > best_sim) {
      best = i;
      best_sim = s;
    }
  }
  return best;
}

EmbeddingVector embed(MetaUasModel& model, const cv::Mat& image) {
  torch::NoGradGuard guard;
  return to_embedding(embed_global(encode_one(model, image))[0]);
}

std::vector<EmbeddingVector> embed_all(MetaUasModel& model, std::span<const cv::Mat> images) {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(embed(model, img));
  return out;
}

const std::vector<EmbeddingVector>& EmbeddingCache::get(MetaUasModel& model, std::span<const cv::Mat> images) {
  std::uint64_t key = fnv1a(model.config().encoder);
  key = mix_seed(key, model.config().encoder_seed);
  key = mix_seed(key, static_cast<std::uint64_t>(model.config().input_size));
  for (const auto& img : images) key = mix_seed(key, mat_hash(img));
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    ++misses_;
    it = entries_.emplace(key, embed_all(model, images)).first;
  }
  return it->second;
}

std::string match_prompt(MetaUasModel& model, const cv::Mat& query, const PromptPool& pool) {
  if (pool.size() == 0) throw std::invalid_argument("empty prompt pool");
  std::vector<EmbeddingVector> cands;
  for (const auto& e : pool.entries()) cands.push_back(e.embedding);
  return pool.entries()[argmax_cosine(embed(model, query), cands)].class_id;
}

size_t select_best_prompt(MetaUasModel& model, const cv::Mat& query, std::span<const cv::Mat> normals,
                          EmbeddingCache* cache) {
  if (normals.empty()) throw std::invalid_argument("empty normal set");
  const EmbeddingVector q = embed(model, query);
  if (cache != nullptr) return argmax_cosine(q, cache->get(model, normals));
  const auto cands = embed_all(model, normals);
  return argmax_cosine(q, cands);
}

AnomalyMap predict(MetaUasModel& model, const cv::Mat& query, const cv::Mat& prompt) {
  model.eval();
  torch::NoGradGuard guard;
  auto prob = model.forward(model.preprocess(query).unsqueeze(0), model.preprocess(prompt).unsqueeze(0));
  return to_map(prob[0].to(torch::kCPU));
}

std::map<std::string, size_t> fixed_random_prompts(const PromptSources& sources, std::uint64_t seed) {
  std::map<std::string, size_t> out;
  for (const auto& [cls, normals] : sources.normals) {
    if (normals.empty()) throw DataError("class " + cls + " has no normal images to draw a prompt from");
    Rng rng(record_seed(seed, cls));
    out[cls] = static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(normals.size()) - 1));
  }
  return out;
}

std::vector<AnomalyMap> predict_batch(MetaUasModel& model, const std::vector<QueryItem>& queries, PromptPolicy policy,
                                      const PromptSources& sources, std::uint64_t seed, EmbeddingCache* cache,
                                      int chunk) {
  model.eval();
  torch::NoGradGuard guard;

  std::vector<size_t> order(queries.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::tie(queries[a].class_id, queries[a].id) < std::tie(queries[b].class_id, queries[b].id);
  });

  const auto normals_of = [&](const std::string& cls) -> const std::vector<NamedImage>& {
    auto it = sources.normals.find(cls);
    if (it == sources.normals.end() || it->second.empty()) throw DataError("no normal images for class " + cls);
    return it->second;
  };

  // Prompt key per query: "<class>#<index>" into the normal sets, or "pool:<class>".
  std::vector<std::pair<std::string, size_t>> prompt_of(queries.size());
  PromptPool local_pool;
  const PromptPool* pool = sources.pool;
  std::map<std::string, size_t> fixed;
  if (policy != PromptPolicy::best_match) fixed = fixed_random_prompts(sources, seed);
  if (policy == PromptPolicy::pool_match && pool == nullptr) {
    std::vector<std::pair<std::string, NamedImage>> picks;
    for (const auto& [cls, idx] : fixed) picks.emplace_back(cls, sources.normals.at(cls)[idx]);
    local_pool = PromptPool::build(model, picks);
    pool = &local_pool;
  }
  for (size_t i : order) {
    const auto& q = queries[i];
    switch (policy) {
      case PromptPolicy::fixed_random:
        normals_of(q.class_id);
        prompt_of[i] = {q.class_id, fixed.at(q.class_id)};
        break;
      case PromptPolicy::pool_match:
        prompt_of[i] = {"pool:" + match_prompt(model, q.image, *pool), 0};
        break;
      case PromptPolicy::best_match: {
        const auto& normals = normals_of(q.class_id);
        std::vector<cv::Mat> imgs;
        for (const auto& n : normals) imgs.push_back(n.image);
        prompt_of[i] = {q.class_id, select_best_prompt(model, q.image, imgs, cache)};
        break;
      }
    }
  }

  std::map<std::pair<std::string, size_t>, std::vector<size_t>> groups;
  for (size_t i : order) groups[prompt_of[i]].push_back(i);

  std::vector<AnomalyMap> results(queries.size());
  const int64_t s = model.config().input_size;
  for (const auto& [key, members] : groups) {
    FeaturePyramid prompt;
    std::string prompt_id;
    if (key.first.rfind("pool:", 0) == 0) {
      const auto& e = pool->entry(key.first.substr(5));
      prompt = e.pyramid;
      prompt_id = e.class_id + "/" + e.prompt_id;
    } else {
      const auto& img = normals_of(key.first)[key.second];
      prompt = encode_one(model, img.image);
      prompt_id = img.id;
    }
    const size_t step = static_cast<size_t>(std::max(1, chunk));
    for (size_t start = 0; start < members.size(); start += step) {
      const size_t end = std::min(members.size(), start + step);
      std::vector<torch::Tensor> batch;
      for (size_t k = start; k < end; ++k) batch.push_back(model.preprocess(queries[members[k]].image));
      const auto qp = model.encode(torch::stack(batch));
      const auto prob = model.forward_features(qp, expand(prompt, static_cast<int64_t>(end - start)), s, s)
                            .to(torch::kCPU);
      for (size_t k = start; k < end; ++k) {
        const size_t qi = members[k];
        AnomalyMap m = to_map(prob[static_cast<int64_t>(k - start)]);
        m.prompt_id = prompt_id;
        m.query_id = queries[qi].id;
        m.class_id = queries[qi].class_id;
        results[qi] = std::move(m);
      }
    }
  }

  std::vector<AnomalyMap> sorted;
  sorted.reserve(results.size());
  for (size_t i : order) sorted.push_back(std::move(results[i]));
  return sorted;
}

}  // namespace metauas
