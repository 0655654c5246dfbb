#include <cmath>

#include <opencv2/imgproc.hpp>

#include "metauas/synth.hpp"

namespace metauas::synth {

namespace {

constexpr int kMaxTransformDraws = 10;

cv::Mat affine_matrix(const Affine& t, cv::Size size) {
  const cv::Point2f center((size.width - 1) * 0.5f, (size.height - 1) * 0.5f);
  cv::Mat m = cv::getRotationMatrix2D(center, t.rotation_deg, t.scale);
  // Snap round-off so quarter turns map pixel centres exactly.
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      double& v = m.at<double>(r, c);
      const double rounded = std::round(v);
      if (std::abs(v - rounded) < 1e-9) v = rounded;
    }
  }
  m.at<double>(0, 2) += t.tx;
  m.at<double>(1, 2) += t.ty;
  return m;
}

Affine draw_affine(const AugmentConfig& cfg, Rng& rng) {
  Affine t;
  t.scale = uniform(rng, cfg.scale.lo, cfg.scale.hi);
  t.rotation_deg = uniform(rng, cfg.rotation_deg.lo, cfg.rotation_deg.hi);
  if (cfg.translate_px > 0) {
    t.tx = uniform_int(rng, -cfg.translate_px, cfg.translate_px);
    t.ty = uniform_int(rng, -cfg.translate_px, cfg.translate_px);
  }
  return t;
}

// Fraction of the mask that stays inside the frame under `t`.
double retained_fraction(const cv::Mat& mask, const Affine& t) {
  const int before = cv::countNonZero(mask);
  if (before == 0) return 1.0;
  cv::Mat warped;
  cv::warpAffine(mask, warped, affine_matrix(t, mask.size()), mask.size(), cv::INTER_NEAREST,
                 cv::BORDER_CONSTANT, 0);
  return static_cast<double>(cv::countNonZero(warped)) / before;
}

cv::Mat color_jitter(const cv::Mat& image, const AugmentConfig& cfg, Rng& rng) {
  const double b = uniform(rng, 1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double c = uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double s = uniform(rng, 1.0 - cfg.saturation, 1.0 + cfg.saturation);
  if (b == 1.0 && c == 1.0 && s == 1.0) return image.clone();

  cv::Mat f;
  image.convertTo(f, CV_32FC3, b);
  cv::Mat gray;
  cv::cvtColor(f, gray, cv::COLOR_BGR2GRAY);
  const double mean = cv::mean(gray)[0];
  f = (f - cv::Scalar::all(mean)) * c + cv::Scalar::all(mean);
  cv::cvtColor(f, gray, cv::COLOR_BGR2GRAY);
  cv::Mat gray3;
  cv::cvtColor(gray, gray3, cv::COLOR_GRAY2BGR);
  f = f * s + gray3 * (1.0 - s);
  cv::Mat out;
  f.convertTo(out, CV_8UC3);
  return out;
}

}  // namespace

cv::Mat warp_image(const cv::Mat& image, const Affine& t) {
  if (t.is_identity()) return image.clone();
  cv::Mat out;
  cv::warpAffine(image, out, affine_matrix(t, image.size()), image.size(), cv::INTER_LINEAR,
                 cv::BORDER_REFLECT_101);
  return out;
}

cv::Mat warp_mask(const cv::Mat& mask, const Affine& t) {
  if (t.is_identity()) return mask.clone();
  cv::Mat out;
  cv::warpAffine(mask, out, affine_matrix(t, mask.size()), mask.size(), cv::INTER_NEAREST,
                 cv::BORDER_REFLECT_101);
  return out;
}

ChangePair augment_pair(const ChangePair& pair, const AugmentConfig& config, Rng& rng) {
  if (config.is_identity()) {
    return {pair.prompt.clone(), pair.query.clone(), pair.mask.clone(), pair.type, pair.provenance};
  }
  const Affine prompt_t = draw_affine(config, rng);
  Affine query_t;
  for (int i = 0; i < kMaxTransformDraws; ++i) {
    Affine candidate = draw_affine(config, rng);
    if (retained_fraction(pair.mask, candidate) >= 0.5) {
      query_t = candidate;
      break;
    }
  }

  ChangePair out;
  out.type = pair.type;
  out.provenance = pair.provenance;
  out.prompt = color_jitter(warp_image(pair.prompt, prompt_t), config, rng);
  out.query = color_jitter(warp_image(pair.query, query_t), config, rng);
  out.mask = warp_mask(pair.mask, query_t);
  return out;
}

}  // namespace metauas::synth
