#include "metauas/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <opencv2/imgproc.hpp>
#include <opencv2/photo.hpp>

#include "metauas/image_io.hpp"

namespace metauas::synth {

namespace fs = std::filesystem;

std::string_view to_string(ChangeType type) {
  switch (type) {
    case ChangeType::disappear: return "disappear";
    case ChangeType::appear: return "appear";
    case ChangeType::exchange: return "exchange";
    case ChangeType::local: return "local";
  }
  return "local";
}

ChangeType change_type_from_string(std::string_view name) {
  if (name == "disappear") return ChangeType::disappear;
  if (name == "appear") return ChangeType::appear;
  if (name == "exchange") return ChangeType::exchange;
  if (name == "local") return ChangeType::local;
  throw DataError("unknown change type: " + std::string(name));
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "val"; }

AugmentConfig AugmentConfig::identity() {
  AugmentConfig a;
  a.enabled = false;
  a.scale = {1.0, 1.0};
  a.translate_px = 0;
  a.rotation_deg = {0.0, 0.0};
  a.brightness = a.contrast = a.saturation = 0.0;
  return a;
}

bool AugmentConfig::is_identity() const {
  return !enabled || (scale.lo == 1.0 && scale.hi == 1.0 && translate_px == 0 &&
                      rotation_deg.lo == 0.0 && rotation_deg.hi == 0.0 && brightness == 0.0 &&
                      contrast == 0.0 && saturation == 0.0);
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synth config: " + what); };
  if (!(p_local >= 0.0 && p_local <= 1.0)) fail("p_local must lie in [0, 1]");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  if (perlin_periods.empty()) fail("perlin_periods must be nonempty");
  for (int p : perlin_periods) {
    if (p < 1) fail("perlin periods must be >= 1");
  }
  if (perlin_octaves < 1) fail("perlin_octaves must be >= 1");
  if (paste_count.lo < 1) fail("paste_count must start at 1");
  if (paste_count.hi < paste_count.lo) fail("paste_count interval is empty");
  if (!(blend.lo > 0.0 && blend.lo <= blend.hi && blend.hi <= 1.0)) fail("blend must satisfy 0 < lo <= hi <= 1");
  if (!(paste_scale_jitter >= 0.0 && paste_scale_jitter < 1.0)) fail("paste_scale_jitter must lie in [0, 1)");
  if (!(paste_probability >= 0.0 && paste_probability <= 1.0)) fail("paste_probability must lie in [0, 1]");
  if (max_selected_instances < 1) fail("max_selected_instances must be >= 1");
  if (image_size < 8) fail("image_size must be >= 8");
  if (pairs_per_source < 1) fail("pairs_per_source must be >= 1");
  if (max_attempts < 1) fail("max_attempts must be >= 1");
  const auto& a = augment;
  if (!(a.scale.lo > 0.0 && a.scale.lo <= a.scale.hi)) fail("augment.scale interval is invalid");
  if (a.rotation_deg.lo > a.rotation_deg.hi) fail("augment.rotation_deg interval is empty");
  if (a.translate_px < 0) fail("augment.translate_px must be >= 0");
  if (a.brightness < 0 || a.contrast < 0 || a.saturation < 0 || a.brightness >= 1 || a.contrast >= 1 ||
      a.saturation >= 1) {
    fail("augment jitter strengths must lie in [0, 1)");
  }
}

void SourceRecord::validate() const {
  if (image.empty() || image.type() != CV_8UC3) throw DataError(image_id + ": image must be 8-bit BGR");
  for (size_t i = 0; i < instances.size(); ++i) {
    const cv::Mat& m = instances[i];
    if (m.size() != image.size() || m.type() != CV_8UC1) {
      throw DataError(image_id + ": instance " + std::to_string(i) + " does not match image dims");
    }
    if (cv::countNonZero(m) == 0) throw DataError(image_id + ": instance " + std::to_string(i) + " is empty");
  }
}

void check_nondegenerate(const ChangePair& pair) {
  const int area = pair.mask.rows * pair.mask.cols;
  const int fg = cv::countNonZero(pair.mask);
  if (fg == 0) throw DegeneratePair("empty change mask");
  if (fg >= 0.9 * area) throw DegeneratePair("change mask covers >= 90% of the image");
  if (bit_identical(pair.prompt, pair.query)) throw DegeneratePair("query is identical to prompt");
}

ChangePair synth_local_change(const SourceRecord& base, const SourceRecord& donor,
                              const SynthConfig& config, Rng& rng) {
  const int h = base.image.rows;
  const int w = base.image.cols;
  const cv::Mat donor_img = resize_image(donor.image, h, w);

  cv::Mat mask;
  for (int attempt = 0;; ++attempt) {
    mask = generate_perlin_mask(h, w, config, rng);
    const int fg = cv::countNonZero(mask);
    if (fg > 0 && fg < 0.9 * h * w) break;
    if (attempt + 1 >= config.max_attempts) {
      throw DegeneratePair(base.image_id + ": perlin mask stayed degenerate after " +
                           std::to_string(config.max_attempts) + " draws");
    }
  }
  const double blend = uniform(rng, config.blend.lo, config.blend.hi);

  ChangePair pair;
  pair.prompt = base.image.clone();
  pair.query = base.image.clone();
  for (int r = 0; r < h; ++r) {
    const auto* m = mask.ptr<std::uint8_t>(r);
    const auto* d = donor_img.ptr<cv::Vec3b>(r);
    auto* q = pair.query.ptr<cv::Vec3b>(r);
    for (int c = 0; c < w; ++c) {
      if (!m[c]) continue;
      for (int k = 0; k < 3; ++k) {
        q[c][k] = cv::saturate_cast<std::uint8_t>(std::lround(blend * d[c][k] + (1.0 - blend) * q[c][k]));
      }
    }
  }
  pair.mask = mask;
  pair.type = ChangeType::local;
  pair.provenance.sources = {base.image_id, donor.image_id};
  check_nondegenerate(pair);
  return pair;
}

cv::Mat DiffusionInpainter::inpaint(const cv::Mat& image, const cv::Mat& mask, const std::string&) const {
  cv::Mat mask255 = mask * 255;
  cv::Mat out;
  cv::inpaint(image, mask255, out, radius_, cv::INPAINT_NS);
  return out;
}

ExternalInpainter::ExternalInpainter(std::string command, fs::path scratch_dir)
    : command_(std::move(command)), scratch_(std::move(scratch_dir)) {
  if (command_.empty()) throw ConfigError("external inpainter: empty command");
}

static void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
}

cv::Mat ExternalInpainter::inpaint(const cv::Mat& image, const cv::Mat& mask,
                                   const std::string& image_id) const {
  fs::create_directories(scratch_);
  const fs::path img = scratch_ / (image_id + "_image.png");
  const fs::path msk = scratch_ / (image_id + "_mask.png");
  const fs::path out = scratch_ / (image_id + "_inpainted.png");
  save_image(img, image);
  save_mask(msk, mask);
  std::string cmd = command_;
  replace_all(cmd, "{image}", img.string());
  replace_all(cmd, "{mask}", msk.string());
  replace_all(cmd, "{output}", out.string());
  if (std::system(cmd.c_str()) != 0) throw DataError("external inpainter failed for " + image_id);
  cv::Mat result = resize_image(load_image(out), image.rows, image.cols);
  std::error_code ec;
  fs::remove(img, ec);
  fs::remove(msk, ec);
  fs::remove(out, ec);
  return result;
}

cv::Mat PrecomputedInpainter::inpaint(const cv::Mat& image, const cv::Mat&,
                                      const std::string& image_id) const {
  return resize_image(load_image(dir_ / (image_id + ".png")), image.rows, image.cols);
}

std::unique_ptr<Inpainter> make_inpainter(const std::string& spec, const fs::path& scratch_dir) {
  if (spec.empty() || spec == "diffusion") return std::make_unique<DiffusionInpainter>();
  if (spec.starts_with("external:")) return std::make_unique<ExternalInpainter>(spec.substr(9), scratch_dir);
  if (spec.starts_with("precomputed:")) return std::make_unique<PrecomputedInpainter>(spec.substr(12));
  throw ConfigError("unknown inpainter: " + spec);
}

cv::Mat union_mask(const SourceRecord& record, std::span<const int> selected) {
  cv::Mat out = cv::Mat::zeros(record.image.size(), CV_8UC1);
  for (int idx : selected) {
    if (idx < 0 || idx >= static_cast<int>(record.instances.size())) {
      throw std::invalid_argument(record.image_id + ": instance index out of range");
    }
    cv::bitwise_or(out, record.instances[static_cast<size_t>(idx)], out);
  }
  return out;
}

ChangePair synth_object_disappear(const SourceRecord& base, std::span<const int> selected,
                                  const Inpainter& inpainter) {
  if (selected.empty()) throw std::invalid_argument("disappear: empty instance selection");
  ChangePair pair;
  pair.mask = union_mask(base, selected);
  cv::Mat filled;
  try {
    filled = inpainter.inpaint(base.image, pair.mask, base.image_id);
  } catch (const std::exception& e) {
    throw DataError(base.image_id + ": inpainting failed: " + e.what());
  }
  if (filled.size() != base.image.size() || filled.type() != CV_8UC3) {
    throw DataError(base.image_id + ": inpainter returned an image of the wrong shape");
  }
  pair.prompt = base.image.clone();
  pair.query = base.image.clone();
  filled.copyTo(pair.query, pair.mask);
  pair.type = ChangeType::disappear;
  pair.provenance.sources = {base.image_id};
  check_nondegenerate(pair);
  return pair;
}

ChangePair swap_to_appear(ChangePair pair) {
  std::swap(pair.prompt, pair.query);
  pair.type = ChangeType::appear;
  return pair;
}

PastePatch extract_instance_patch(const SourceRecord& record, int instance) {
  if (instance < 0 || instance >= static_cast<int>(record.instances.size())) {
    throw std::invalid_argument(record.image_id + ": instance index out of range");
  }
  const cv::Mat& m = record.instances[static_cast<size_t>(instance)];
  const cv::Rect box = cv::boundingRect(m);
  return {record.image(box).clone(), m(box).clone(), record.image_id};
}

ChangePair synth_object_paste(const SourceRecord& base, std::span<const PastePatch> donors,
                              const SynthConfig& config, Rng& rng) {
  if (donors.empty()) throw std::invalid_argument("paste: at least one donor is required");
  if (static_cast<int>(donors.size()) < config.paste_count.lo ||
      static_cast<int>(donors.size()) > config.paste_count.hi) {
    throw std::invalid_argument("paste: donor count outside the configured range");
  }
  const int h = base.image.rows;
  const int w = base.image.cols;
  ChangePair pair;
  pair.prompt = base.image.clone();
  pair.query = base.image.clone();
  pair.mask = cv::Mat::zeros(base.image.size(), CV_8UC1);
  pair.provenance.sources = {base.image_id};

  for (const PastePatch& donor : donors) {
    cv::Mat img;
    cv::Mat msk;
    bool placed = false;
    for (int attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
      const double s = uniform(rng, 1.0 - config.paste_scale_jitter, 1.0 + config.paste_scale_jitter);
      const int pw = std::max(1, static_cast<int>(std::lround(donor.image.cols * s)));
      const int ph = std::max(1, static_cast<int>(std::lround(donor.image.rows * s)));
      if (pw > w || ph > h) continue;
      img = resize_image(donor.image, ph, pw);
      msk = resize_mask(donor.mask, ph, pw);
      if (cv::countNonZero(msk) == 0) continue;
      const int x = uniform_int(rng, 0, w - pw);
      const int y = uniform_int(rng, 0, h - ph);
      const cv::Rect roi(x, y, pw, ph);
      img.copyTo(pair.query(roi), msk);
      cv::Mat target = pair.mask(roi);
      cv::bitwise_or(target, msk, target);
      placed = true;
    }
    if (!placed) throw PlacementFailed(base.image_id + ": no valid placement for a patch from " + donor.source_id);
    pair.provenance.sources.push_back(donor.source_id);
  }
  pair.type = ChangeType::exchange;
  check_nondegenerate(pair);
  return pair;
}

}  // namespace metauas::synth
