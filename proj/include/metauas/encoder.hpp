#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "metauas/config.hpp"

namespace metauas {

inline constexpr int kStages = 5;

struct FeaturePyramid {
  std::array<torch::Tensor, kStages> stages;  // stage l (1-based) at index l - 1, [B, c_l, h_l, w_l]
  std::array<int, kStages> strides{2, 4, 8, 16, 32};

  const torch::Tensor& stage(int l) const { return stages.at(static_cast<size_t>(l - 1)); }
  /// Keeps batch element `b` only (as a batch of one).
  FeaturePyramid select(int64_t b) const;
  static FeaturePyramid concat(const std::vector<FeaturePyramid>& parts);
};

struct EmbeddingVector {
  torch::Tensor values;  // 1-D, c_5 entries
  double norm = 0.0;
};

/// Frozen hierarchical feature extractor with five stride-2 stages.
class Encoder {
 public:
  virtual ~Encoder() = default;

  /// `images` is [B, 3, H, W], already normalized with `mean()`/`std()`. H and W must be
  /// divisible by 32 (std::invalid_argument otherwise).
  FeaturePyramid extract(const torch::Tensor& images);

  virtual std::array<int64_t, kStages> channels() const = 0;
  virtual std::vector<torch::Tensor> parameters() const = 0;
  virtual std::string architecture() const = 0;
  virtual void set_trainable(bool trainable) = 0;
  virtual void to(torch::Device device) = 0;

  int64_t parameter_count() const;

  // RGB input statistics the encoder expects (ImageNet statistics for every bundled option).
  static constexpr std::array<float, 3> mean() { return {0.485f, 0.456f, 0.406f}; }
  static constexpr std::array<float, 3> std() { return {0.229f, 0.224f, 0.225f}; }

 protected:
  virtual std::array<torch::Tensor, kStages> run(const torch::Tensor& images) = 0;
};

/// Built-in convolutional pyramid with weights drawn from a seeded generator. Used where no
/// pretrained weights are available; "conv-tiny" and "conv-small" differ in width.
class ConvEncoder final : public Encoder {
 public:
  ConvEncoder(const std::string& architecture, std::uint64_t seed);
  std::array<int64_t, kStages> channels() const override { return channels_; }
  std::vector<torch::Tensor> parameters() const override;
  std::string architecture() const override { return architecture_; }
  void set_trainable(bool trainable) override;
  void to(torch::Device device) override { net_->to(device); }

 protected:
  std::array<torch::Tensor, kStages> run(const torch::Tensor& images) override;

 private:
  std::string architecture_;
  std::array<int64_t, kStages> channels_{};
  torch::nn::ModuleList net_{nullptr};
};

/// TorchScript module whose forward returns the five stage maps (list or tuple), e.g. an
/// EfficientNet-b4 exported with tools/export_encoder.py.
class ScriptedEncoder final : public Encoder {
 public:
  ScriptedEncoder(std::string architecture, const std::string& path);
  ~ScriptedEncoder() override;
  std::array<int64_t, kStages> channels() const override { return channels_; }
  std::vector<torch::Tensor> parameters() const override;
  std::string architecture() const override { return architecture_; }
  void set_trainable(bool trainable) override;
  void to(torch::Device device) override;

 protected:
  std::array<torch::Tensor, kStages> run(const torch::Tensor& images) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string architecture_;
  std::array<int64_t, kStages> channels_{};
};

std::shared_ptr<Encoder> make_encoder(const ModelConfig& config);

/// Bilinear resize to size x size, RGB conversion and input normalization: [3, size, size].
torch::Tensor preprocess(const cv::Mat& bgr, int size);

/// Spatial mean of the stage-5 map: [B, c_5].
torch::Tensor embed_global(const FeaturePyramid& pyramid);
EmbeddingVector to_embedding(const torch::Tensor& row);

}  // namespace metauas
