#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

// Image- and pixel-level anomaly metrics. ROC, AP and F1max use exact sweeps over every unique
// score; PRO sweeps a quantile grid (or every unique score when that is cheaper or requested).
namespace metauas::metrics {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  // 1 = anomalous

  void push(double score, bool positive) {
    scores.push_back(score);
    labels.push_back(positive ? 1 : 0);
  }
  void append_pixels(const cv::Mat& map, const cv::Mat& gt);
};

/// Mann-Whitney form: P(s+ > s-) + 0.5 P(s+ = s-). Throws UndefinedMetric unless both classes occur.
double auroc(const ScoredSet& set);

/// Step-wise AP over descending unique thresholds. Throws UndefinedMetric without positives.
double average_precision(const ScoredSet& set);

/// Maximum F1 over thresholds "score >= t" for every unique score t.
double f1_max(const ScoredSet& set);

struct ProOptions {
  double fpr_cap = 0.3;
  int grid = 200;  // 0 sweeps every unique score
};

/// Per-region overlap: mean overlap over all 8-connected ground-truth regions of all maps,
/// integrated (trapezoid) against the false-positive rate on normal pixels up to `fpr_cap`, then
/// divided by `fpr_cap`. The curve starts at the empty prediction (0, 0) and past the last
/// operating point with FPR <= cap it is held at that point's overlap.
/// `maps` are CV_32FC1, `gts` CV_8UC1 {0,1} of the same size.
double pro(std::span<const cv::Mat> maps, std::span<const cv::Mat> gts, const ProOptions& options = {});

/// Ground-truth regions of one mask, labelled 1..n (8-connectivity); returns n.
int label_regions(const cv::Mat& gt, cv::Mat& labels);

struct ImageResult {
  std::string id;
  cv::Mat map;        // CV_32FC1 anomaly map
  cv::Mat gt;         // CV_8UC1 {0,1}; may be empty for normal images (treated as all zero)
  double score = 0;   // image-level score
  bool anomalous = false;
};

struct ClassResults {
  std::string name;
  std::vector<ImageResult> images;
};

struct ClassMetrics {
  std::string name;
  std::optional<double> i_roc, i_pr, i_f1, p_roc, p_pr, p_f1, p_pro;
  int normal_images = 0;
  int anomalous_images = 0;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"I-ROC", "I-PR", "I-F1max", "P-ROC", "P-PR", "P-F1max", "P-PRO"};
  return names;
}

std::vector<std::optional<double>> values(const ClassMetrics& m);

struct MetricsReport {
  std::vector<ClassMetrics> classes;  // sorted by name
  ClassMetrics mean;                  // arithmetic mean over classes that define each metric
  ProOptions pro_options;
};

/// Computes every metric per class. Pixel metrics pool the pixels of a class; the report is
/// independent of input order. Throws DataError when an anomalous image lacks a mask.
MetricsReport evaluate(std::vector<ClassResults> results, const ProOptions& pro_options = {});

// ---- reports across repeated runs and rendering -----------------------------------------------

struct SummaryCell {
  std::optional<double> mean;
  std::optional<double> std;  // present only when aggregated over several runs
};

struct SummaryReport {
  std::vector<std::string> rows;  // class names then "mean"
  std::map<std::string, std::vector<SummaryCell>> cells;  // row -> per-metric cell
  int runs = 1;
  nlohmann::json config_echo;
};

/// Mean and (population) standard deviation per metric over runs; std is omitted for one run.
SummaryReport summarize(const std::vector<MetricsReport>& runs, nlohmann::json config_echo);

nlohmann::json to_json(const SummaryReport& report);
/// Fixed-width table with one row per class, values in percent.
std::string render_table(const SummaryReport& report);
std::string render_csv(const SummaryReport& report);

}  // namespace metauas::metrics
