#include <cmath>
#include <cstdio>
#include <sstream>

#include "metauas/metrics.hpp"

namespace metauas::metrics {

using nlohmann::json;

SummaryReport summarize(const std::vector<MetricsReport>& runs, json config_echo) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  SummaryReport out;
  out.runs = static_cast<int>(runs.size());
  out.config_echo = std::move(config_echo);
  out.config_echo["pro_fpr_cap"] = runs.front().pro_options.fpr_cap;
  out.config_echo["pro_grid"] = runs.front().pro_options.grid;

  auto row_of = [](const MetricsReport& r, const std::string& name) -> const ClassMetrics* {
    if (name == "mean") return &r.mean;
    for (const ClassMetrics& m : r.classes) {
      if (m.name == name) return &m;
    }
    return nullptr;
  };
  for (const ClassMetrics& m : runs.front().classes) out.rows.push_back(m.name);
  out.rows.push_back("mean");

  for (const std::string& row : out.rows) {
    std::vector<SummaryCell> cells(metric_names().size());
    for (size_t k = 0; k < cells.size(); ++k) {
      std::vector<double> v;
      for (const MetricsReport& r : runs) {
        const ClassMetrics* m = row_of(r, row);
        if (m == nullptr) continue;
        if (auto x = values(*m)[k]) v.push_back(*x);
      }
      if (v.empty()) continue;
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      cells[k].mean = mean;
      if (runs.size() > 1) {
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        cells[k].std = std::sqrt(var / static_cast<double>(v.size()));
      }
    }
    out.cells[row] = std::move(cells);
  }
  return out;
}

json to_json(const SummaryReport& report) {
  json rows = json::object();
  for (const std::string& row : report.rows) {
    json r = json::object();
    const auto& cells = report.cells.at(row);
    for (size_t k = 0; k < cells.size(); ++k) {
      json cell = json::object();
      cell["mean"] = cells[k].mean ? json(*cells[k].mean) : json(nullptr);
      if (cells[k].std) cell["std"] = *cells[k].std;
      r[metric_names()[k]] = cell;
    }
    rows[row] = r;
  }
  return {{"runs", report.runs},
          {"metrics", metric_names()},
          {"config", report.config_echo},
          {"classes", rows}};
}

static std::string format_cell(const SummaryCell& c) {
  if (!c.mean) return "-";
  char buf[48];
  if (c.std) std::snprintf(buf, sizeof(buf), "%.1f±%.1f", *c.mean * 100.0, *c.std * 100.0);
  else std::snprintf(buf, sizeof(buf), "%.1f", *c.mean * 100.0);
  return buf;
}

std::string render_table(const SummaryReport& report) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-16s", "class");
  os << buf;
  for (size_t k = 0; k < metric_names().size(); ++k) {
    if (k == 3) os << " |";
    std::snprintf(buf, sizeof(buf), " %12s", metric_names()[k].c_str());
    os << buf;
  }
  os << "\n";
  for (const std::string& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-16s", row.c_str());
    os << buf;
    const auto& cells = report.cells.at(row);
    for (size_t k = 0; k < cells.size(); ++k) {
      if (k == 3) os << " |";
      // "±" is two bytes in UTF-8; pad by display width.
      const std::string cell = format_cell(cells[k]);
      const size_t width = cell.find("±") != std::string::npos ? cell.size() - 1 : cell.size();
      os << " " << std::string(width < 12 ? 12 - width : 0, ' ') << cell;
    }
    os << "\n";
  }
  return os.str();
}

std::string render_csv(const SummaryReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "class";
  for (const std::string& name : metric_names()) os << "," << name << "," << name << "_std";
  os << "\n";
  for (const std::string& row : report.rows) {
    os << row;
    for (const SummaryCell& c : report.cells.at(row)) {
      os << ",";
      if (c.mean) os << *c.mean;
      os << ",";
      if (c.std) os << *c.std;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace metauas::metrics
