#include "metauas/align.hpp"

#include <limits>
#include <stdexcept>

namespace metauas {

namespace {

void check_pair(const torch::Tensor& q_red, const torch::Tensor& p_red, const torch::Tensor& p_full) {
  if (q_red.dim() != 4 || p_red.dim() != 4 || p_full.dim() != 4) {
    throw std::invalid_argument("alignment inputs must be [B, C, H, W]");
  }
  if (q_red.size(0) != p_red.size(0) || p_red.size(0) != p_full.size(0)) {
    throw std::invalid_argument("alignment batch sizes differ");
  }
  if (q_red.size(1) != p_red.size(1)) throw std::invalid_argument("reduced channel counts differ");
  if (p_red.size(2) != p_full.size(2) || p_red.size(3) != p_full.size(3)) {
    throw std::invalid_argument("reduced and full prompt maps differ in spatial size");
  }
}

}  // namespace

torch::Tensor hard_indices(const torch::Tensor& q_red, const torch::Tensor& p_red) {
  const int64_t b = q_red.size(0);
  const int64_t c = q_red.size(1);
  auto q = q_red.reshape({b, c, -1});  // [B, C', Nq]
  auto p = p_red.reshape({b, c, -1});  // [B, C', Np]
  auto qn = q.norm(2, 1, true);
  auto pn = p.norm(2, 1, true);
  const double tiny = 1e-30;
  auto sim = torch::bmm((q / qn.clamp_min(tiny)).transpose(1, 2), p / pn.clamp_min(tiny));  // [B, Nq, Np]
  auto dead = (pn == 0).expand_as(sim) | (qn == 0).transpose(1, 2).expand_as(sim);
  sim = sim.masked_fill(dead, -std::numeric_limits<double>::infinity());
  // torch's argmax resolves ties to the first maximum.
  return sim.argmax(2);
}

torch::Tensor align_hard(const torch::Tensor& q_red, const torch::Tensor& p_red, const torch::Tensor& p_full) {
  check_pair(q_red, p_red, p_full);
  torch::Tensor idx;
  {
    torch::NoGradGuard guard;
    idx = hard_indices(q_red, p_red);
  }
  const int64_t b = p_full.size(0);
  const int64_t c = p_full.size(1);
  auto flat = p_full.reshape({b, c, -1});
  auto gathered = flat.gather(2, idx.unsqueeze(1).expand({b, c, idx.size(1)}));
  return gathered.reshape({b, c, q_red.size(2), q_red.size(3)});
}

SoftAlignment align_soft(const torch::Tensor& q_red, const torch::Tensor& p_red, const torch::Tensor& p_full,
                         double temperature) {
  check_pair(q_red, p_red, p_full);
  if (!(temperature > 0.0)) throw std::invalid_argument("soft alignment temperature must be positive");
  const int64_t b = q_red.size(0);
  const int64_t cr = q_red.size(1);
  auto q = q_red.reshape({b, cr, -1});
  auto p = p_red.reshape({b, cr, -1});
  auto logits = torch::bmm(q.transpose(1, 2), p);
  if (temperature != 1.0) logits = logits / temperature;
  auto w = torch::softmax(logits, 2);  // [B, Nq, Np]
  const int64_t c = p_full.size(1);
  auto mixed = torch::bmm(p_full.reshape({b, c, -1}), w.transpose(1, 2));  // [B, C, Nq]
  return {mixed.reshape({b, c, q_red.size(2), q_red.size(3)}), w};
}

torch::Tensor fuse(const torch::Tensor& query, const torch::Tensor& prompt, FusionMode mode) {
  if (!query.sizes().equals(prompt.sizes())) throw std::invalid_argument("fusion inputs differ in shape");
  switch (mode) {
    case FusionMode::concat:
      return torch::cat({query, prompt}, 1);
    case FusionMode::add:
      return query + prompt;
    case FusionMode::absdiff:
      return (query - prompt).abs();
  }
  throw std::invalid_argument("unknown fusion mode");
}

int64_t fused_channels(int64_t c, FusionMode mode) { return mode == FusionMode::concat ? 2 * c : c; }

}  // namespace metauas
