#pragma once

// Brute-force reference implementations used to check the production metrics. They recount
// everything from scratch at each threshold; slow but hard to get wrong.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <random>
#include <set>
#include <vector>

#include <opencv2/core.hpp>

namespace oracle {

inline double auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0, pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline std::vector<double> descending_unique(const std::vector<double>& s) {
  std::set<double, std::greater<>> u(s.begin(), s.end());
  return {u.begin(), u.end()};
}

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

inline Counts count_at(const std::vector<double>& s, const std::vector<std::uint8_t>& y, double t) {
  Counts c;
  for (size_t i = 0; i < s.size(); ++i) {
    const bool pred = s[i] >= t;
    if (pred && y[i]) c.tp += 1;
    else if (pred) c.fp += 1;
    else if (y[i]) c.fn += 1;
  }
  return c;
}

inline double average_precision(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double positives = 0;
  for (auto v : y) positives += v;
  double ap = 0, prev_r = 0;
  for (double t : descending_unique(s)) {
    const Counts c = count_at(s, y, t);
    const double r = c.tp / positives;
    ap += (r - prev_r) * (c.tp / (c.tp + c.fp));
    prev_r = r;
  }
  return ap;
}

inline double f1_max(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double best = 0;
  for (double t : descending_unique(s)) {
    const Counts c = count_at(s, y, t);
    const double p = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0;
    const double r = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0;
    if (p + r > 0) best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

// Breadth-first 8-connected labelling; returns per-pixel labels (0 = background, 1..n).
inline int label8(const cv::Mat& gt, std::vector<int>& labels) {
  const int h = gt.rows, w = gt.cols;
  labels.assign(static_cast<size_t>(h * w), 0);
  int n = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!gt.at<std::uint8_t>(r, c) || labels[r * w + c]) continue;
      ++n;
      std::deque<std::pair<int, int>> q{{r, c}};
      labels[r * w + c] = n;
      while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
            if (!gt.at<std::uint8_t>(yy, xx) || labels[yy * w + xx]) continue;
            labels[yy * w + xx] = n;
            q.push_back({yy, xx});
          }
        }
      }
    }
  }
  return n;
}

// PRO over every unique score: at each threshold, recount every region's overlap and the FPR,
// trapezoid from (0, 0) up to the cap, holding the last overlap at or below the cap.
inline double pro(const std::vector<cv::Mat>& maps, const std::vector<cv::Mat>& gts, double cap) {
  std::vector<double> all;
  for (const auto& m : maps)
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c) all.push_back(m.at<float>(r, c));
  std::vector<std::vector<int>> labels(maps.size());
  std::vector<int> nregions(maps.size());
  for (size_t i = 0; i < maps.size(); ++i) nregions[i] = label8(gts[i], labels[i]);

  double px = 0, py = 0, area = 0;
  for (double t : descending_unique(all)) {
    double fp = 0, normal = 0, overlap = 0;
    int regions = 0;
    for (size_t i = 0; i < maps.size(); ++i) {
      const int w = maps[i].cols;
      std::vector<double> hit(nregions[i] + 1, 0), size(nregions[i] + 1, 0);
      for (int r = 0; r < maps[i].rows; ++r) {
        for (int c = 0; c < w; ++c) {
          const bool pred = maps[i].at<float>(r, c) >= t;
          const int l = labels[i][r * w + c];
          if (l == 0) {
            normal += 1;
            fp += pred;
          } else {
            size[l] += 1;
            hit[l] += pred;
          }
        }
      }
      for (int l = 1; l <= nregions[i]; ++l) overlap += hit[l] / size[l];
      regions += nregions[i];
    }
    const double fpr = normal > 0 ? fp / normal : 0;
    const double y = overlap / regions;
    if (fpr > cap) break;
    area += (fpr - px) * (y + py) / 2;
    px = fpr;
    py = y;
  }
  area += (cap - px) * py;
  return area / cap;
}

struct Instance {
  std::vector<cv::Mat> maps;
  std::vector<cv::Mat> gts;
};

// Random maps up to 32x32 with a few rectangle/disc regions and scores that correlate with them.
// `levels` > 0 quantizes scores so that ties are common.
inline Instance random_instance(std::mt19937_64& rng, int levels) {
  std::uniform_int_distribution<int> count(1, 3), side(4, 32);
  std::uniform_real_distribution<double> u(0, 1);
  Instance inst;
  const int n = count(rng);
  bool any = false;
  for (int k = 0; k < n; ++k) {
    const int h = side(rng), w = side(rng);
    cv::Mat gt = cv::Mat::zeros(h, w, CV_8UC1);
    const int blobs = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int b = 0; b < blobs; ++b) {
      const int y0 = std::uniform_int_distribution<int>(0, h - 1)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, w - 1)(rng);
      const int ry = std::uniform_int_distribution<int>(0, std::max(1, h / 4))(rng);
      const int rx = std::uniform_int_distribution<int>(0, std::max(1, w / 4))(rng);
      for (int y = std::max(0, y0 - ry); y <= std::min(h - 1, y0 + ry); ++y)
        for (int x = std::max(0, x0 - rx); x <= std::min(w - 1, x0 + rx); ++x) gt.at<std::uint8_t>(y, x) = 1;
    }
    cv::Mat map(h, w, CV_32FC1);
    const double gain = u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.6 * u(rng) + gain * 0.5 * gt.at<std::uint8_t>(y, x);
        if (levels > 0) v = std::floor(v * levels) / levels;
        map.at<float>(y, x) = static_cast<float>(v);
      }
    }
    any = any || cv::countNonZero(gt) > 0;
    inst.maps.push_back(map);
    inst.gts.push_back(gt);
  }
  if (!any) inst.gts[0].at<std::uint8_t>(0, 0) = 1;
  return inst;
}

inline void flatten(const Instance& inst, std::vector<double>& s, std::vector<std::uint8_t>& y) {
  s.clear();
  y.clear();
  for (size_t i = 0; i < inst.maps.size(); ++i)
    for (int r = 0; r < inst.maps[i].rows; ++r)
      for (int c = 0; c < inst.maps[i].cols; ++c) {
        s.push_back(inst.maps[i].at<float>(r, c));
        y.push_back(inst.gts[i].at<std::uint8_t>(r, c) ? 1 : 0);
      }
}

}  // namespace oracle
