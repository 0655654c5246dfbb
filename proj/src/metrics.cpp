#include "metauas/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <opencv2/imgproc.hpp>

#include "metauas/common.hpp"

namespace metauas::metrics {

namespace {

// Cumulative true/false positives after admitting every score >= threshold, for each unique
// threshold in descending order.
struct Sweep {
  std::vector<double> tp;
  std::vector<double> fp;
  std::vector<double> threshold;
  double positives = 0;
  double negatives = 0;
};

Sweep sweep(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) throw std::invalid_argument("scores and labels differ in length");
  std::vector<size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return set.scores[a] > set.scores[b]; });
  Sweep s;
  double tp = 0;
  double fp = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = set.scores[order[i]];
    for (; i < order.size() && set.scores[order[i]] == t; ++i) {
      if (set.labels[order[i]]) tp += 1;
      else fp += 1;
    }
    s.tp.push_back(tp);
    s.fp.push_back(fp);
    s.threshold.push_back(t);
  }
  s.positives = tp;
  s.negatives = fp;
  return s;
}

}  // namespace

void ScoredSet::append_pixels(const cv::Mat& map, const cv::Mat& gt) {
  CV_Assert(map.type() == CV_32FC1);
  const bool has_gt = !gt.empty();
  if (has_gt) CV_Assert(gt.size() == map.size() && gt.type() == CV_8UC1);
  scores.reserve(scores.size() + map.total());
  labels.reserve(labels.size() + map.total());
  for (int r = 0; r < map.rows; ++r) {
    const float* m = map.ptr<float>(r);
    const std::uint8_t* g = has_gt ? gt.ptr<std::uint8_t>(r) : nullptr;
    for (int c = 0; c < map.cols; ++c) push(m[c], g != nullptr && g[c] != 0);
  }
}

double auroc(const ScoredSet& set) {
  const Sweep s = sweep(set);
  if (s.positives == 0 || s.negatives == 0) throw UndefinedMetric("AUROC needs both classes");
  double acc = 0;
  double tp_before = 0;
  double fp_before = 0;
  for (size_t g = 0; g < s.tp.size(); ++g) {
    const double dtp = s.tp[g] - tp_before;
    const double dfp = s.fp[g] - fp_before;
    acc += dfp * (tp_before + 0.5 * dtp);
    tp_before = s.tp[g];
    fp_before = s.fp[g];
  }
  return acc / (s.positives * s.negatives);
}

double average_precision(const ScoredSet& set) {
  const Sweep s = sweep(set);
  if (s.positives == 0) throw UndefinedMetric("AP needs at least one positive");
  double ap = 0;
  double prev_recall = 0;
  for (size_t g = 0; g < s.tp.size(); ++g) {
    const double recall = s.tp[g] / s.positives;
    const double precision = s.tp[g] / (s.tp[g] + s.fp[g]);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double f1_max(const ScoredSet& set) {
  const Sweep s = sweep(set);
  if (s.positives == 0) throw UndefinedMetric("F1max needs at least one positive");
  double best = 0;
  for (size_t g = 0; g < s.tp.size(); ++g) {
    const double fn = s.positives - s.tp[g];
    best = std::max(best, 2 * s.tp[g] / (2 * s.tp[g] + s.fp[g] + fn));
  }
  return best;
}

int label_regions(const cv::Mat& gt, cv::Mat& labels) {
  CV_Assert(gt.type() == CV_8UC1);
  return cv::connectedComponents(gt, labels, 8, CV_32S) - 1;
}

double pro(std::span<const cv::Mat> maps, std::span<const cv::Mat> gts, const ProOptions& options) {
  if (maps.size() != gts.size()) throw std::invalid_argument("pro: maps and masks differ in count");
  if (!(options.fpr_cap > 0.0 && options.fpr_cap <= 1.0)) throw std::invalid_argument("pro: fpr_cap must lie in (0, 1]");
  if (options.grid < 0 || options.grid == 1) throw std::invalid_argument("pro: grid must be 0 or >= 2");

  struct Pixel {
    float score;
    int region;  // -1 for normal pixels
  };
  std::vector<Pixel> pixels;
  std::vector<double> region_size;
  double normal = 0;
  for (size_t i = 0; i < maps.size(); ++i) {
    const cv::Mat& map = maps[i];
    const cv::Mat& gt = gts[i];
    if (map.type() != CV_32FC1 || gt.type() != CV_8UC1 || map.size() != gt.size()) {
      throw std::invalid_argument("pro: map/mask shape or type mismatch at index " + std::to_string(i));
    }
    cv::Mat labels;
    const int offset = static_cast<int>(region_size.size());
    const int n = label_regions(gt, labels);
    region_size.resize(region_size.size() + static_cast<size_t>(n), 0.0);
    for (int r = 0; r < map.rows; ++r) {
      const float* m = map.ptr<float>(r);
      const int* l = labels.ptr<int>(r);
      for (int c = 0; c < map.cols; ++c) {
        const int region = l[c] > 0 ? offset + l[c] - 1 : -1;
        if (region >= 0) region_size[static_cast<size_t>(region)] += 1;
        else normal += 1;
        pixels.push_back({m[c], region});
      }
    }
  }
  if (region_size.empty()) throw UndefinedMetric("pro: no anomalous pixels");

  std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

  // Thresholds in descending order.
  std::vector<float> thresholds;
  for (size_t i = 0; i < pixels.size(); ++i) {
    if (i == 0 || pixels[i].score != pixels[i - 1].score) thresholds.push_back(pixels[i].score);
  }
  if (options.grid > 0 && static_cast<int>(thresholds.size()) > options.grid) {
    // Equally spaced quantiles of the pooled scores (pixels are sorted descending).
    const size_t n = pixels.size();
    std::vector<float> q;
    for (int i = options.grid - 1; i >= 0; --i) {
      const size_t rank = static_cast<size_t>(static_cast<double>(i) * (n - 1) / (options.grid - 1));
      q.push_back(pixels[n - 1 - rank].score);
    }
    q.erase(std::unique(q.begin(), q.end()), q.end());
    thresholds = std::move(q);
  }

  const double regions = static_cast<double>(region_size.size());
  double overlap_sum = 0;
  double fp = 0;
  double area = 0;
  double prev_fpr = 0;
  double prev_pro = 0;
  size_t cursor = 0;
  for (float t : thresholds) {
    for (; cursor < pixels.size() && pixels[cursor].score >= t; ++cursor) {
      const int region = pixels[cursor].region;
      if (region >= 0) {
        overlap_sum += 1.0 / region_size[static_cast<size_t>(region)];
      } else {
        fp += 1;
      }
    }
    const double fpr = normal > 0 ? fp / normal : 0.0;
    const double overlap = overlap_sum / regions;
    if (fpr > options.fpr_cap) break;
    area += (fpr - prev_fpr) * (overlap + prev_pro) * 0.5;
    prev_fpr = fpr;
    prev_pro = overlap;
  }
  area += (options.fpr_cap - prev_fpr) * prev_pro;
  return std::clamp(area / options.fpr_cap, 0.0, 1.0);
}

std::vector<std::optional<double>> values(const ClassMetrics& m) {
  return {m.i_roc, m.i_pr, m.i_f1, m.p_roc, m.p_pr, m.p_f1, m.p_pro};
}

namespace {

template <typename F>
std::optional<double> defined(F&& f) {
  try {
    return f();
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

void set_value(ClassMetrics& m, size_t k, std::optional<double> v) {
  std::optional<double>* slots[] = {&m.i_roc, &m.i_pr, &m.i_f1, &m.p_roc, &m.p_pr, &m.p_f1, &m.p_pro};
  *slots[k] = v;
}

}  // namespace

MetricsReport evaluate(std::vector<ClassResults> results, const ProOptions& pro_options) {
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  MetricsReport report;
  report.pro_options = pro_options;
  for (ClassResults& cls : results) {
    std::sort(cls.images.begin(), cls.images.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    ClassMetrics m;
    m.name = cls.name;
    ScoredSet image_set;
    ScoredSet pixel_set;
    std::vector<cv::Mat> maps;
    std::vector<cv::Mat> gts;
    for (const ImageResult& img : cls.images) {
      if (img.anomalous && img.gt.empty()) throw DataError(cls.name + "/" + img.id + ": anomalous image without mask");
      cv::Mat gt = img.gt.empty() ? cv::Mat::zeros(img.map.size(), CV_8UC1) : img.gt;
      if (gt.size() != img.map.size()) throw DataError(cls.name + "/" + img.id + ": mask and map sizes differ");
      image_set.push(img.score, img.anomalous);
      pixel_set.append_pixels(img.map, gt);
      maps.push_back(img.map);
      gts.push_back(gt);
      (img.anomalous ? m.anomalous_images : m.normal_images) += 1;
    }
    m.i_roc = defined([&] { return auroc(image_set); });
    m.i_pr = defined([&] { return average_precision(image_set); });
    m.i_f1 = defined([&] { return f1_max(image_set); });
    m.p_roc = defined([&] { return auroc(pixel_set); });
    m.p_pr = defined([&] { return average_precision(pixel_set); });
    m.p_f1 = defined([&] { return f1_max(pixel_set); });
    m.p_pro = defined([&] { return pro(maps, gts, pro_options); });
    report.classes.push_back(std::move(m));
  }
  report.mean.name = "mean";
  for (size_t k = 0; k < metric_names().size(); ++k) {
    double sum = 0;
    int n = 0;
    for (const ClassMetrics& m : report.classes) {
      if (auto v = values(m)[k]) {
        sum += *v;
        ++n;
      }
    }
    set_value(report.mean, k, n > 0 ? std::optional<double>(sum / n) : std::nullopt);
  }
  for (const ClassMetrics& m : report.classes) {
    report.mean.normal_images += m.normal_images;
    report.mean.anomalous_images += m.anomalous_images;
  }
  return report;
}

}  // namespace metauas::metrics
