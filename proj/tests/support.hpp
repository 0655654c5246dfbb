#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include <torch/torch.h>

#include "metauas/segnet.hpp"
#include "metauas/synth.hpp"
#include "metauas/toy_data.hpp"
#include "metauas/trainer.hpp"

namespace support {

// Local-change pairs built straight from toy records, no disk involved.
inline std::vector<metauas::TrainingPair> toy_pairs(int n, int size, std::uint64_t seed) {
  using namespace metauas;
  std::vector<TrainingPair> out;
  synth::SynthConfig cfg;
  cfg.perlin_periods = {2, 4, 8};
  for (int i = 0; out.size() < static_cast<size_t>(n); ++i) {
    const auto base = toy::make_record("b" + std::to_string(i), size, mix_seed(seed, 2 * i));
    const auto donor = toy::make_record("d" + std::to_string(i), size, mix_seed(seed, 2 * i + 1));
    Rng rng(mix_seed(seed, 1000 + i));
    try {
      auto p = synth::synth_local_change(base, donor, cfg, rng);
      out.push_back({"pair" + std::to_string(i), p.prompt, p.query, p.mask});
    } catch (const synth::DegeneratePair&) {
    }
  }
  return out;
}

inline std::vector<std::vector<std::uint8_t>> snapshot(const std::vector<torch::Tensor>& params) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& p : params) {
    auto c = p.detach().to(torch::kCPU).contiguous();
    std::vector<std::uint8_t> bytes(c.nbytes());
    std::memcpy(bytes.data(), c.data_ptr(), c.nbytes());
    out.push_back(std::move(bytes));
  }
  return out;
}

struct GradCheck {
  int checked = 0;
  double worst_relative = 0;
};

// Central differences on `count` reducer weights (the alignment parameters), in double precision.
inline GradCheck check_align_gradients(metauas::MetaUasModel& model, const metauas::Batch& batch, int count,
                                       std::uint64_t seed, double h = 1e-6) {
  using namespace metauas;
  auto& net = model.segnet();
  net->to(torch::kFloat64);
  FeaturePyramid q = model.encode(batch.query), p = model.encode(batch.prompt);
  for (int i = 0; i < kStages; ++i) {
    q.stages[i] = q.stages[i].to(torch::kFloat64);
    p.stages[i] = p.stages[i].to(torch::kFloat64);
  }
  const auto target = batch.mask.to(torch::kFloat64);
  const int64_t hh = batch.query.size(2), ww = batch.query.size(3);
  auto loss = [&] { return bce_loss(torch::sigmoid(net->forward(q, p, hh, ww)), target); };

  auto params = net->align_parameters();
  for (auto& t : net->parameters()) t.mutable_grad() = torch::Tensor();
  loss().backward();

  std::mt19937_64 rng(seed);
  GradCheck out;
  torch::NoGradGuard guard;
  std::vector<size_t> weights;
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].dim() == 4) weights.push_back(i);
  for (int k = 0; k < count; ++k) {
    auto& t = params[weights[static_cast<size_t>(k) % weights.size()]];
    const int64_t idx = std::uniform_int_distribution<int64_t>(0, t.numel() - 1)(rng);
    auto flat = t.view(-1);
    const double analytic = t.grad().view(-1)[idx].item<double>();
    const double orig = flat[idx].item<double>();
    flat[idx] = orig + h;
    const double up = loss().item<double>();
    flat[idx] = orig - h;
    const double down = loss().item<double>();
    flat[idx] = orig;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    out.worst_relative = std::max(out.worst_relative, std::abs(analytic - numeric) / scale);
    ++out.checked;
  }
  net->to(torch::kFloat32);
  return out;
}

}  // namespace support
