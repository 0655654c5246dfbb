#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include <opencv2/imgproc.hpp>

#include "metauas/config.hpp"
#include "metauas/image_io.hpp"
#include "metauas/synth.hpp"

namespace metauas::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

SourceRecord fit_to_size(SourceRecord rec, int size) {
  SourceRecord out;
  out.image_id = std::move(rec.image_id);
  out.image = resize_image(rec.image, size, size);
  for (const cv::Mat& m : rec.instances) {
    cv::Mat r = resize_mask(m, size, size);
    if (cv::countNonZero(r) > 0) out.instances.push_back(std::move(r));
  }
  return out;
}

std::string pair_id_for(const std::string& source_id, int k) {
  std::string id = source_id;
  for (char& ch : id) {
    if (ch == '/' || ch == '\\' || ch == ' ' || ch == ':') ch = '_';
  }
  return id + "_" + std::to_string(k);
}

}  // namespace

DirectoryCorpus::DirectoryCorpus(fs::path root) : root_(std::move(root)) {
  const fs::path images = root_ / "images";
  if (!fs::is_directory(images)) throw DataError("corpus has no images/ directory: " + root_.string());
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      images_.emplace(entry.path().stem().string(), entry.path());
    }
  }
}

std::vector<std::string> DirectoryCorpus::ids() const {
  std::vector<std::string> out;
  out.reserve(images_.size());
  for (const auto& [id, path] : images_) out.push_back(id);
  return out;
}

SourceRecord DirectoryCorpus::load(const std::string& id) const {
  auto it = images_.find(id);
  if (it == images_.end()) throw DataError("corpus has no record " + id);
  SourceRecord rec;
  rec.image_id = id;
  rec.image = load_image(it->second);
  const fs::path mask_dir = root_ / "masks" / id;
  if (fs::is_directory(mask_dir)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(mask_dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      cv::Mat m = resize_mask(load_mask(f), rec.image.rows, rec.image.cols);
      if (cv::countNonZero(m) > 0) rec.instances.push_back(std::move(m));
    }
  }
  rec.validate();
  return rec;
}

CocoCorpus::CocoCorpus(const fs::path& annotation_file) {
  const json j = load_json(annotation_file);
  const fs::path dir = annotation_file.parent_path();
  std::map<std::int64_t, std::string> by_numeric;
  try {
    for (const json& img : j.at("images")) {
      const std::int64_t nid = img.at("id").get<std::int64_t>();
      const std::string id = std::to_string(nid);
      Entry e;
      const std::string name = img.at("file_name").get<std::string>();
      e.file = fs::exists(dir / name) ? dir / name : dir / "images" / name;
      e.height = img.value("height", 0);
      e.width = img.value("width", 0);
      entries_.emplace(id, std::move(e));
      by_numeric.emplace(nid, id);
    }
    for (const json& ann : j.value("annotations", json::array())) {
      if (ann.value("iscrowd", 0) != 0) continue;
      const json& seg = ann.value("segmentation", json());
      if (!seg.is_array() || seg.empty()) continue;
      auto it = by_numeric.find(ann.at("image_id").get<std::int64_t>());
      if (it == by_numeric.end()) continue;
      std::vector<std::vector<double>> rings;
      for (const json& ring : seg) {
        if (ring.is_array() && ring.size() >= 6) rings.push_back(ring.get<std::vector<double>>());
      }
      if (!rings.empty()) entries_[it->second].polygons.push_back(std::move(rings));
    }
  } catch (const json::exception& e) {
    throw DataError(annotation_file.string() + ": malformed COCO annotations: " + e.what());
  }
}

std::vector<std::string> CocoCorpus::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

SourceRecord CocoCorpus::load(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw DataError("corpus has no record " + id);
  SourceRecord rec;
  rec.image_id = id;
  rec.image = load_image(it->second.file);
  for (const auto& rings : it->second.polygons) {
    cv::Mat m = cv::Mat::zeros(rec.image.size(), CV_8UC1);
    std::vector<std::vector<cv::Point>> polys;
    for (const auto& ring : rings) {
      std::vector<cv::Point> pts;
      for (size_t k = 0; k + 1 < ring.size(); k += 2) {
        pts.emplace_back(static_cast<int>(std::lround(ring[k])), static_cast<int>(std::lround(ring[k + 1])));
      }
      polys.push_back(std::move(pts));
    }
    cv::fillPoly(m, polys, cv::Scalar(1));
    if (cv::countNonZero(m) > 0) rec.instances.push_back(std::move(m));
  }
  rec.validate();
  return rec;
}

std::unique_ptr<Corpus> open_corpus(const fs::path& path) {
  if (fs::is_regular_file(path) && path.extension() == ".json") return std::make_unique<CocoCorpus>(path);
  if (fs::is_directory(path)) return std::make_unique<DirectoryCorpus>(path);
  throw DataError("unreadable corpus: " + path.string());
}

std::map<std::string, Split> split_sources(const std::vector<std::string>& ids, const SynthConfig& config) {
  std::vector<std::string> order = ids;
  std::sort(order.begin(), order.end());
  Rng rng(mix_seed(config.seed, 0x5e1177));
  std::shuffle(order.begin(), order.end(), rng);
  const int n = static_cast<int>(order.size());
  int n_train = static_cast<int>(std::lround(n * config.split_ratio));
  if (n >= 2) n_train = std::clamp(n_train, 1, n - 1);
  std::map<std::string, Split> out;
  for (int i = 0; i < n; ++i) out.emplace(order[static_cast<size_t>(i)], i < n_train ? Split::train : Split::val);
  return out;
}

std::vector<PlannedPair> plan_pairs(const std::vector<std::string>& ids, const SynthConfig& config) {
  const auto splits = split_sources(ids, config);
  std::vector<PlannedPair> out;
  out.reserve(splits.size() * static_cast<size_t>(config.pairs_per_source));
  for (const auto& [source, split] : splits) {
    for (int k = 0; k < config.pairs_per_source; ++k) {
      PlannedPair p;
      p.source_id = source;
      p.pair_id = pair_id_for(source, k);
      p.split = split;
      p.seed = record_seed(config.seed, p.pair_id);
      Rng rng(mix_seed(p.seed, 1));
      p.local = std::bernoulli_distribution(config.p_local)(rng);
      out.push_back(std::move(p));
    }
  }
  return out;
}

ChangePair render_pair(const Corpus& corpus, const PlannedPair& plan, const std::vector<std::string>& split_ids,
                       const SynthConfig& config, const Inpainter& inpainter) {
  Rng rng(plan.seed);
  const SourceRecord base = fit_to_size(corpus.load(plan.source_id), config.image_size);

  auto draw_other = [&]() -> const std::string& {
    // A one-source split cannot host local or paste pairs; those get skipped, the rest still build.
    if (split_ids.size() < 2) throw DegeneratePair("split has a single source, no donor to draw");
    for (;;) {
      const auto& id = split_ids[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(split_ids.size()) - 1))];
      if (id != plan.source_id) return id;
    }
  };

  std::string last_error;
  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    try {
      ChangePair pair;
      if (plan.local || base.instances.empty()) {
        const SourceRecord donor = fit_to_size(corpus.load(draw_other()), config.image_size);
        pair = synth_local_change(base, donor, config, rng);
      } else if (std::bernoulli_distribution(config.paste_probability)(rng)) {
        const int count = uniform_int(rng, config.paste_count.lo, config.paste_count.hi);
        std::vector<PastePatch> patches;
        for (int tries = 0; static_cast<int>(patches.size()) < count && tries < 4 * count; ++tries) {
          const SourceRecord donor = fit_to_size(corpus.load(draw_other()), config.image_size);
          if (donor.instances.empty()) continue;
          const int idx = uniform_int(rng, 0, static_cast<int>(donor.instances.size()) - 1);
          patches.push_back(extract_instance_patch(donor, idx));
        }
        if (patches.empty()) throw PlacementFailed(plan.source_id + ": no donor instances available");
        pair = synth_object_paste(base, patches, config, rng);
      } else {
        std::vector<int> order(base.instances.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::shuffle(order.begin(), order.end(), rng);
        const int limit = std::min(config.max_selected_instances, static_cast<int>(order.size()));
        order.resize(static_cast<size_t>(uniform_int(rng, 1, limit)));
        std::sort(order.begin(), order.end());
        pair = synth_object_disappear(base, order, inpainter);
        if (std::bernoulli_distribution(0.5)(rng)) pair = swap_to_appear(std::move(pair));
      }
      pair.provenance.seed = plan.seed;
      return pair;
    } catch (const DegeneratePair& e) {
      last_error = e.what();
    } catch (const PlacementFailed& e) {
      last_error = e.what();
    }
  }
  throw DegeneratePair(plan.pair_id + ": every attempt failed (" + last_error + ")");
}

std::vector<const ManifestEntry*> DatasetManifest::split(Split which) const {
  std::vector<const ManifestEntry*> out;
  for (const ManifestEntry& e : pairs) {
    if (e.split == which) out.push_back(&e);
  }
  return out;
}

fs::path DatasetManifest::pair_dir(const ManifestEntry& entry) const {
  return root / std::string(to_string(entry.split)) / entry.pair_id;
}

void write_manifest(const DatasetManifest& m, const fs::path& file) {
  json pairs = json::array();
  for (const ManifestEntry& e : m.pairs) {
    pairs.push_back({{"id", e.pair_id},
                     {"split", std::string(to_string(e.split))},
                     {"change_type", std::string(to_string(e.type))},
                     {"sources", e.provenance.sources},
                     {"seed", e.provenance.seed}});
  }
  json counts = json::object();
  for (const auto& [k, v] : m.counts) counts[k] = v;
  const json j = {{"schema_version", 1},
                  {"config", to_json(m.config)},
                  {"inpainter", m.inpainter},
                  {"sources", {{"train", m.train_sources}, {"val", m.val_sources}}},
                  {"counts", counts},
                  {"pairs", pairs}};
  save_json(file, j);
}

DatasetManifest load_manifest(const fs::path& file) {
  const json j = load_json(file);
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    if (j.at("schema_version").get<int>() != 1) throw DataError("unsupported manifest schema");
    m.config = synth_config_from_json(j.at("config"));
    m.inpainter = j.value("inpainter", "");
    m.train_sources = j.at("sources").at("train").get<int>();
    m.val_sources = j.at("sources").at("val").get<int>();
    for (auto it = j.at("counts").begin(); it != j.at("counts").end(); ++it) m.counts[it.key()] = it->get<int>();
    for (const json& p : j.at("pairs")) {
      ManifestEntry e;
      e.pair_id = p.at("id").get<std::string>();
      e.split = p.at("split").get<std::string>() == "train" ? Split::train : Split::val;
      e.type = change_type_from_string(p.at("change_type").get<std::string>());
      e.provenance.sources = p.at("sources").get<std::vector<std::string>>();
      e.provenance.seed = p.at("seed").get<std::uint64_t>();
      m.pairs.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

PairFiles load_pair(const DatasetManifest& manifest, const ManifestEntry& entry) {
  const fs::path dir = manifest.pair_dir(entry);
  return {load_image(dir / "prompt.png"), load_image(dir / "query.png"), load_mask(dir / "mask.png")};
}

DatasetManifest build_dataset(const Corpus& corpus, const fs::path& out, const SynthConfig& config,
                              const Inpainter& inpainter, const BuildOptions& options) {
  config.validate();
  const std::vector<std::string> ids = corpus.ids();
  if (ids.empty()) throw DataError("corpus is empty");
  const std::vector<PlannedPair> plan = plan_pairs(ids, config);

  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  for (const auto& [id, split] : split_sources(ids, config)) (split == Split::train ? train_ids : val_ids).push_back(id);

  std::vector<std::optional<ManifestEntry>> results(plan.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&]() {
    for (size_t i = next++; i < plan.size(); i = next++) {
      const PlannedPair& p = plan[i];
      try {
        const auto& pool = p.split == Split::train ? train_ids : val_ids;
        ChangePair pair = render_pair(corpus, p, pool, config, inpainter);
        if (options.write_files) {
          const fs::path dir = out / std::string(to_string(p.split)) / p.pair_id;
          save_image(dir / "prompt.png", pair.prompt);
          save_image(dir / "query.png", pair.query);
          save_mask(dir / "mask.png", pair.mask);
        }
        results[i] = ManifestEntry{p.pair_id, p.split, pair.type, pair.provenance};
      } catch (const DegeneratePair& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: skipping " << p.pair_id << ": " << e.what() << "\n";
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        next = plan.size();
      }
    }
  };
  const int n_workers = std::max(1, options.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  DatasetManifest manifest;
  manifest.root = out;
  manifest.config = config;
  manifest.inpainter = inpainter.name();
  manifest.train_sources = static_cast<int>(train_ids.size());
  manifest.val_sources = static_cast<int>(val_ids.size());
  for (ChangeType t : {ChangeType::disappear, ChangeType::appear, ChangeType::exchange, ChangeType::local}) {
    manifest.counts[std::string(to_string(t))] = 0;
  }
  for (auto& r : results) {
    if (!r) continue;
    manifest.counts[std::string(to_string(r->type))] += 1;
    manifest.pairs.push_back(std::move(*r));
  }
  if (options.write_files) write_manifest(manifest, out / "manifest.json");
  return manifest;
}

}  // namespace metauas::synth
