#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "metauas/synth.hpp"

namespace metauas::synth {

namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// One octave of gradient noise with `ry` x `rx` lattice cells spanning the field, accumulated
// into `field` with the given amplitude.
void add_octave(std::vector<double>& field, int height, int width, int ry, int rx, double amplitude,
                Rng& rng) {
  const int gw = rx + 1;
  std::vector<double> gx(static_cast<size_t>(ry + 1) * gw);
  std::vector<double> gy(gx.size());
  for (size_t i = 0; i < gx.size(); ++i) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    gx[i] = std::cos(angle);
    gy[i] = std::sin(angle);
  }
  auto corner = [&](int cy, int cx, double dy, double dx) {
    const size_t k = static_cast<size_t>(cy) * gw + cx;
    return gx[k] * dx + gy[k] * dy;
  };
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) * ry / height;
    const int cy = std::min(static_cast<int>(y), ry - 1);
    const double fy = y - cy;
    const double uy = fade(fy);
    for (int c = 0; c < width; ++c) {
      const double x = (c + 0.5) * rx / width;
      const int cx = std::min(static_cast<int>(x), rx - 1);
      const double fx = x - cx;
      const double ux = fade(fx);
      const double n00 = corner(cy, cx, fy, fx);
      const double n01 = corner(cy, cx + 1, fy, fx - 1.0);
      const double n10 = corner(cy + 1, cx, fy - 1.0, fx);
      const double n11 = corner(cy + 1, cx + 1, fy - 1.0, fx - 1.0);
      const double top = n00 + ux * (n01 - n00);
      const double bottom = n10 + ux * (n11 - n10);
      field[static_cast<size_t>(r) * width + c] += amplitude * (top + uy * (bottom - top));
    }
  }
}

int pick_period(const std::vector<int>& choices, int limit, Rng& rng) {
  std::vector<int> usable;
  for (int p : choices) {
    if (p >= 1 && p <= limit) usable.push_back(p);
  }
  if (usable.empty()) {
    throw std::invalid_argument("perlin: dimension " + std::to_string(limit) +
                                " is smaller than every configured period");
  }
  return usable[static_cast<size_t>(uniform_int(rng, 0, static_cast<int>(usable.size()) - 1))];
}

}  // namespace

cv::Mat generate_perlin_mask(int height, int width, const SynthConfig& config, Rng& rng) {
  if (height < 8 || width < 8) throw std::invalid_argument("perlin: dims must be >= 8");
  if (config.perlin_octaves < 1) throw std::invalid_argument("perlin: octaves must be >= 1");
  const int ry = pick_period(config.perlin_periods, height, rng);
  const int rx = pick_period(config.perlin_periods, width, rng);

  std::vector<double> field(static_cast<size_t>(height) * width, 0.0);
  double amplitude = 1.0;
  for (int o = 0; o < config.perlin_octaves; ++o) {
    add_octave(field, height, width, ry << o, rx << o, amplitude, rng);
    amplitude *= 0.5;
  }

  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  cv::Mat mask(height, width, CV_8UC1);
  for (int r = 0; r < height; ++r) {
    auto* row = mask.ptr<std::uint8_t>(r);
    for (int c = 0; c < width; ++c) {
      const double v = span > 0.0 ? (field[static_cast<size_t>(r) * width + c] - lo) / span : 0.0;
      row[c] = v > config.perlin_threshold ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace metauas::synth
