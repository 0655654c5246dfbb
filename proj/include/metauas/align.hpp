#pragma once

#include <torch/torch.h>

#include "metauas/config.hpp"

namespace metauas {

// All maps are [B, C, H, W]. `q_red`/`p_red` are the reduced query / prompt maps used to
// compute similarities; `p_full` is the unreduced prompt map that gets gathered or mixed.
// Query and prompt may differ in spatial size; the output has the query's.

/// For every query location, the prompt vector at the location of maximal cosine
/// similarity (ties: lowest flat index; zero-norm vectors never win unless all are zero).
torch::Tensor align_hard(const torch::Tensor& q_red, const torch::Tensor& p_red, const torch::Tensor& p_full);

/// Flat index (row-major over prompt H x W) chosen by align_hard: [B, Hq * Wq], int64.
torch::Tensor hard_indices(const torch::Tensor& q_red, const torch::Tensor& p_red);

struct SoftAlignment {
  torch::Tensor aligned;  // [B, C, Hq, Wq]
  torch::Tensor weights;  // [B, Hq * Wq, Hp * Wp], rows sum to 1
};

/// Softmax over dot products (divided by `temperature`) followed by a weighted sum of the
/// full prompt features.
SoftAlignment align_soft(const torch::Tensor& q_red, const torch::Tensor& p_red, const torch::Tensor& p_full,
                         double temperature = 1.0);

/// Channel concat (query first), sum, or absolute difference.
torch::Tensor fuse(const torch::Tensor& query, const torch::Tensor& prompt, FusionMode mode);

int64_t fused_channels(int64_t c, FusionMode mode);

}  // namespace metauas
