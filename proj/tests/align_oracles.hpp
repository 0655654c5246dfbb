#pragma once

// Element-by-element loops over the alignment definitions, in double precision.

#include <cmath>
#include <limits>
#include <vector>

#include <torch/torch.h>

namespace oracle {

// q, p: [C, Hq, Wq] / [C, Hp, Wp] reduced maps; full: [D, Hp, Wp]. Returns [D, Hq, Wq].
inline torch::Tensor hard(const torch::Tensor& q_in, const torch::Tensor& p_in, const torch::Tensor& full_in,
                          torch::Tensor* chosen = nullptr) {
  auto q = q_in.to(torch::kFloat64).contiguous();
  auto p = p_in.to(torch::kFloat64).contiguous();
  auto full = full_in.to(torch::kFloat64).contiguous();
  const int64_t c = q.size(0), hq = q.size(1), wq = q.size(2), hp = p.size(1), wp = p.size(2), d = full.size(0);
  auto qa = q.accessor<double, 3>();
  auto pa = p.accessor<double, 3>();
  auto fa = full.accessor<double, 3>();
  auto out = torch::zeros({d, hq, wq}, torch::kFloat64);
  auto oa = out.accessor<double, 3>();
  if (chosen) *chosen = torch::zeros({hq * wq}, torch::kInt64);
  for (int64_t i = 0; i < hq; ++i) {
    for (int64_t j = 0; j < wq; ++j) {
      double qn = 0;
      for (int64_t ch = 0; ch < c; ++ch) qn += qa[ch][i][j] * qa[ch][i][j];
      std::vector<double> cos(static_cast<size_t>(hp * wp));
      double best = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < hp * wp; ++k) {
        double dot = 0, pn = 0;
        for (int64_t ch = 0; ch < c; ++ch) {
          dot += qa[ch][i][j] * pa[ch][k / wp][k % wp];
          pn += pa[ch][k / wp][k % wp] * pa[ch][k / wp][k % wp];
        }
        cos[k] = (qn == 0 || pn == 0) ? -std::numeric_limits<double>::infinity() : dot / std::sqrt(qn * pn);
        best = std::max(best, cos[k]);
      }
      // First location that ties the maximum up to rounding (single-channel maps tie exactly).
      int64_t arg = 0;
      while (arg < hp * wp - 1 && !(cos[arg] >= best - 1e-12)) ++arg;
      if (chosen) (*chosen)[i * wq + j] = arg;
      for (int64_t ch = 0; ch < d; ++ch) oa[ch][i][j] = fa[ch][arg / wp][arg % wp];
    }
  }
  return out;
}

// Returns the aligned map [D, Hq, Wq]; `weights` receives [Hq*Wq, Hp*Wp].
inline torch::Tensor soft(const torch::Tensor& q_in, const torch::Tensor& p_in, const torch::Tensor& full_in,
                          double temperature, torch::Tensor* weights = nullptr) {
  auto q = q_in.to(torch::kFloat64).contiguous();
  auto p = p_in.to(torch::kFloat64).contiguous();
  auto full = full_in.to(torch::kFloat64).contiguous();
  const int64_t c = q.size(0), hq = q.size(1), wq = q.size(2), hp = p.size(1), wp = p.size(2), d = full.size(0);
  auto qa = q.accessor<double, 3>();
  auto pa = p.accessor<double, 3>();
  auto fa = full.accessor<double, 3>();
  auto out = torch::zeros({d, hq, wq}, torch::kFloat64);
  auto w = torch::zeros({hq * wq, hp * wp}, torch::kFloat64);
  auto oa = out.accessor<double, 3>();
  auto wa = w.accessor<double, 2>();
  for (int64_t i = 0; i < hq; ++i) {
    for (int64_t j = 0; j < wq; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < hp * wp; ++k) {
        double dot = 0;
        for (int64_t ch = 0; ch < c; ++ch) dot += qa[ch][i][j] * pa[ch][k / wp][k % wp];
        wa[i * wq + j][k] = dot / temperature;
        mx = std::max(mx, dot / temperature);
      }
      double z = 0;
      for (int64_t k = 0; k < hp * wp; ++k) z += std::exp(wa[i * wq + j][k] - mx);
      for (int64_t k = 0; k < hp * wp; ++k) wa[i * wq + j][k] = std::exp(wa[i * wq + j][k] - mx) / z;
      for (int64_t ch = 0; ch < d; ++ch) {
        double acc = 0;
        for (int64_t k = 0; k < hp * wp; ++k) acc += wa[i * wq + j][k] * fa[ch][k / wp][k % wp];
        oa[ch][i][j] = acc;
      }
    }
  }
  if (weights) *weights = w;
  return out;
}

}  // namespace oracle
