#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "metauas/common.hpp"

// Synthesis of change-segmentation training pairs from an instance-annotated corpus.
namespace metauas::synth {

enum class ChangeType { disappear, appear, exchange, local };

std::string_view to_string(ChangeType type);
ChangeType change_type_from_string(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct IntInterval {
  int lo = 0;
  int hi = 0;
  bool operator==(const IntInterval&) const = default;
};

struct AugmentConfig {
  bool enabled = true;
  // Mild geometry: a frozen, untrained encoder cannot match across larger misalignment.
  Interval scale{0.95, 1.05};
  int translate_px = 2;  // max absolute shift per axis
  Interval rotation_deg{-5.0, 5.0};
  // Jitter strengths s: factors are drawn from [1 - s, 1 + s].
  double brightness = 0.1;
  double contrast = 0.1;
  double saturation = 0.1;
  bool operator==(const AugmentConfig&) const = default;

  static AugmentConfig identity();
  bool is_identity() const;
};

struct SynthConfig {
  double p_local = 0.5;
  std::vector<int> perlin_periods{2, 4, 8, 16, 32};
  int perlin_octaves = 2;
  double perlin_threshold = 0.5;
  IntInterval paste_count{1, 3};
  double paste_scale_jitter = 0.3;
  Interval blend{0.2, 1.0};
  // Share of object-level changes produced by pasting (exchange) rather than inpainting.
  double paste_probability = 0.5;
  int max_selected_instances = 3;
  double split_ratio = 0.95;
  int image_size = 256;
  int pairs_per_source = 1;
  int max_attempts = 8;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  bool operator==(const SynthConfig&) const = default;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct SourceRecord {
  cv::Mat image;                   // CV_8UC3
  std::vector<cv::Mat> instances;  // CV_8UC1 {0,1}, same size as image
  std::string image_id;

  void validate() const;
};

struct Provenance {
  std::vector<std::string> sources;
  std::uint64_t seed = 0;
};

struct ChangePair {
  cv::Mat prompt;  // CV_8UC3
  cv::Mat query;   // CV_8UC3
  cv::Mat mask;    // CV_8UC1 {0,1}; the change footprint in query coordinates
  ChangeType type = ChangeType::local;
  Provenance provenance;
};

/// A pair whose query is bit-identical to its prompt, or whose mask is empty or near-total.
class DegeneratePair : public DataError {
 public:
  using DataError::DataError;
};

class PlacementFailed : public DataError {
 public:
  using DataError::DataError;
};

/// Throws DegeneratePair unless prompt != query and 0 < |mask| < 0.9 * H * W.
void check_nondegenerate(const ChangePair& pair);

/// Thresholded, min-max normalized fractal Perlin noise. Deterministic given the generator state.
cv::Mat generate_perlin_mask(int height, int width, const SynthConfig& config, Rng& rng);

/// Local-region change: the Perlin region of the base is blended toward the donor.
ChangePair synth_local_change(const SourceRecord& base, const SourceRecord& donor,
                              const SynthConfig& config, Rng& rng);

class Inpainter {
 public:
  virtual ~Inpainter() = default;
  /// Returns a full image; only pixels inside `mask` are taken from it.
  virtual cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask,
                          const std::string& image_id) const = 0;
  virtual std::string name() const = 0;
};

/// Navier-Stokes diffusion fill (OpenCV); usable without any external model.
class DiffusionInpainter final : public Inpainter {
 public:
  explicit DiffusionInpainter(double radius = 5.0) : radius_(radius) {}
  cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask, const std::string& image_id) const override;
  std::string name() const override { return "diffusion"; }

 private:
  double radius_;
};

/// Runs a user-supplied program. `command` may reference {image}, {mask} and {output}.
class ExternalInpainter final : public Inpainter {
 public:
  ExternalInpainter(std::string command, std::filesystem::path scratch_dir);
  cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask, const std::string& image_id) const override;
  std::string name() const override { return "external"; }

 private:
  std::string command_;
  std::filesystem::path scratch_;
};

/// Reads <dir>/<image_id>.png produced ahead of time by any inpainting tool.
class PrecomputedInpainter final : public Inpainter {
 public:
  explicit PrecomputedInpainter(std::filesystem::path dir) : dir_(std::move(dir)) {}
  cv::Mat inpaint(const cv::Mat& image, const cv::Mat& mask, const std::string& image_id) const override;
  std::string name() const override { return "precomputed"; }

 private:
  std::filesystem::path dir_;
};

/// Builds an inpainter from a spec string: "diffusion", "external:<command>" or "precomputed:<dir>".
std::unique_ptr<Inpainter> make_inpainter(const std::string& spec,
                                          const std::filesystem::path& scratch_dir);

cv::Mat union_mask(const SourceRecord& record, std::span<const int> selected);

/// Object disappearance. The appear pair is obtained by swapping prompt and query (see swap_to_appear).
ChangePair synth_object_disappear(const SourceRecord& base, std::span<const int> selected,
                                  const Inpainter& inpainter);

ChangePair swap_to_appear(ChangePair pair);

struct PastePatch {
  cv::Mat image;  // CV_8UC3, tight crop around the instance
  cv::Mat mask;   // CV_8UC1 {0,1}, same size as image
  std::string source_id;
};

PastePatch extract_instance_patch(const SourceRecord& record, int instance);

/// Composites every donor patch at a random scale and in-bounds position. Throws PlacementFailed
/// when a patch cannot be placed within the retry budget.
ChangePair synth_object_paste(const SourceRecord& base, std::span<const PastePatch> donors,
                              const SynthConfig& config, Rng& rng);

/// Independent geometric transforms for prompt and query (the query's also warps the mask,
/// nearest-neighbour) and independent color jitter.
ChangePair augment_pair(const ChangePair& pair, const AugmentConfig& config, Rng& rng);

/// Geometric part only, exposed for callers that compose their own transforms.
struct Affine {
  double scale = 1.0;
  double rotation_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  bool is_identity() const { return scale == 1.0 && rotation_deg == 0.0 && tx == 0.0 && ty == 0.0; }
};
cv::Mat warp_image(const cv::Mat& image, const Affine& t);
cv::Mat warp_mask(const cv::Mat& mask, const Affine& t);

// ---------------------------------------------------------------------------------------------
// Corpus access and dataset assembly.

class Corpus {
 public:
  virtual ~Corpus() = default;
  /// Sorted, unique record ids.
  virtual std::vector<std::string> ids() const = 0;
  virtual SourceRecord load(const std::string& id) const = 0;
};

/// Directory layout: <root>/images/<id>.{png,jpg} with <root>/masks/<id>/*.png
/// (one binary mask per instance).
class DirectoryCorpus final : public Corpus {
 public:
  explicit DirectoryCorpus(std::filesystem::path root);
  std::vector<std::string> ids() const override;
  SourceRecord load(const std::string& id) const override;

 private:
  std::filesystem::path root_;
  std::map<std::string, std::filesystem::path> images_;
};

/// COCO-style instances JSON; polygon segmentations are rasterized, crowd annotations skipped.
class CocoCorpus final : public Corpus {
 public:
  explicit CocoCorpus(const std::filesystem::path& annotation_file);
  std::vector<std::string> ids() const override;
  SourceRecord load(const std::string& id) const override;

 private:
  struct Entry {
    std::filesystem::path file;
    int height = 0;
    int width = 0;
    std::vector<std::vector<std::vector<double>>> polygons;  // per instance, per ring
  };
  std::map<std::string, Entry> entries_;
};

std::unique_ptr<Corpus> open_corpus(const std::filesystem::path& path);

enum class Split { train, val };
std::string_view to_string(Split split);

struct ManifestEntry {
  std::string pair_id;
  Split split = Split::train;
  ChangeType type = ChangeType::local;
  Provenance provenance;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory holding manifest.json
  std::vector<ManifestEntry> pairs;
  std::map<std::string, int> counts;  // per change type
  int train_sources = 0;
  int val_sources = 0;
  SynthConfig config;
  std::string inpainter;

  std::vector<const ManifestEntry*> split(Split which) const;
  std::filesystem::path pair_dir(const ManifestEntry& entry) const;
};

/// Source-level split: the first round(n * ratio) ids of a seeded shuffle go to train.
std::map<std::string, Split> split_sources(const std::vector<std::string>& ids,
                                           const SynthConfig& config);

struct PlannedPair {
  std::string pair_id;
  std::string source_id;
  Split split = Split::train;
  bool local = false;
  std::uint64_t seed = 0;
};

/// Decides split, change family and seed for every pair without touching pixels.
std::vector<PlannedPair> plan_pairs(const std::vector<std::string>& ids, const SynthConfig& config);

struct BuildOptions {
  int workers = 1;
  bool write_files = true;
};

/// Renders every planned pair, writes <out>/{train,val}/<pair_id>/{prompt,query,mask}.png and
/// <out>/manifest.json. Records whose every attempt is degenerate are skipped with a warning.
DatasetManifest build_dataset(const Corpus& corpus, const std::filesystem::path& out,
                              const SynthConfig& config, const Inpainter& inpainter,
                              const BuildOptions& options = {});

/// Renders a single planned pair (exposed for tests and in-memory pipelines).
ChangePair render_pair(const Corpus& corpus, const PlannedPair& plan,
                       const std::vector<std::string>& split_ids, const SynthConfig& config,
                       const Inpainter& inpainter);

DatasetManifest load_manifest(const std::filesystem::path& manifest_file);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

struct PairFiles {
  cv::Mat prompt;
  cv::Mat query;
  cv::Mat mask;
};
PairFiles load_pair(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace metauas::synth
