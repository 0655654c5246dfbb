#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "metauas/config.hpp"
#include "metauas/encoder.hpp"

namespace metauas {

struct FusedFeatures {
  std::array<torch::Tensor, 3> fused;    // stages 3, 4, 5
  std::array<torch::Tensor, 2> skips;    // raw query stages 1, 2
  std::array<torch::Tensor, 3> weights;  // soft alignment weights per fused stage (undefined otherwise)
};

/// Learnable part of the model: channel reducers for the aligned stages, UNet decoder, 1x1 head.
class SegNetImpl : public torch::nn::Module {
 public:
  SegNetImpl(const ModelConfig& config, const std::array<int64_t, kStages>& encoder_channels);

  /// Shared 1x1 reduction (c -> c/2) for stage 3, 4 or 5.
  torch::Tensor reduce(const torch::Tensor& x, int stage);
  FusedFeatures fuse_features(const FeaturePyramid& query, const FeaturePyramid& prompt);
  /// Logits [B, 1, h, w].
  torch::Tensor decode(const FusedFeatures& features, int64_t h, int64_t w);
  torch::Tensor forward(const FeaturePyramid& query, const FeaturePyramid& prompt, int64_t h, int64_t w);

  std::vector<torch::Tensor> align_parameters() const;
  std::vector<torch::Tensor> decoder_parameters() const;
  std::vector<torch::Tensor> head_parameters() const;
  std::vector<int64_t> decoder_widths() const { return widths_; }

 private:
  ModelConfig config_;
  torch::nn::ModuleList reducers_{nullptr};
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::Conv2d head_{nullptr};
  std::vector<int64_t> widths_;
};
TORCH_MODULE(SegNet);

/// Frozen encoder plus SegNet. Images go in as normalized [B, 3, S, S] batches.
class MetaUasModel {
 public:
  /// Builds the encoder from `config` and initializes the SegNet from `init_seed`.
  MetaUasModel(const ModelConfig& config, std::uint64_t init_seed);
  MetaUasModel(const ModelConfig& config, std::shared_ptr<Encoder> encoder, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  Encoder& encoder() { return *encoder_; }
  SegNet& segnet() { return segnet_; }

  FeaturePyramid encode(const torch::Tensor& images);
  torch::Tensor forward_logits(const torch::Tensor& query, const torch::Tensor& prompt);
  /// Probabilities in [0, 1], [B, 1, S, S].
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& prompt);
  torch::Tensor forward_features(const FeaturePyramid& query, const FeaturePyramid& prompt, int64_t h, int64_t w);

  /// Resize + normalize a BGR image to the model's input size: [3, S, S].
  torch::Tensor preprocess(const cv::Mat& bgr) const;

  std::vector<torch::Tensor> learnable_parameters() const;
  int64_t learnable_count() const;
  int64_t frozen_count() const;

  void train(bool on = true);
  void eval() { train(false); }
  void to(torch::Device device);
  torch::Device device() const { return device_; }

 private:
  ModelConfig config_;
  std::shared_ptr<Encoder> encoder_;
  SegNet segnet_{nullptr};
  torch::Device device_{torch::kCPU};
};

}  // namespace metauas
