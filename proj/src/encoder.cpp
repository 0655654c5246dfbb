#include "metauas/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include <ATen/CPUGeneratorImpl.h>
#include <opencv2/imgproc.hpp>
#include <torch/script.h>

#include "metauas/common.hpp"
#include "metauas/tensor_convert.hpp"

namespace metauas {

FeaturePyramid FeaturePyramid::select(int64_t b) const {
  FeaturePyramid out;
  out.strides = strides;
  for (int i = 0; i < kStages; ++i) out.stages[i] = stages[i].narrow(0, b, 1);
  return out;
}

FeaturePyramid FeaturePyramid::concat(const std::vector<FeaturePyramid>& parts) {
  if (parts.empty()) throw std::invalid_argument("FeaturePyramid::concat of nothing");
  FeaturePyramid out;
  out.strides = parts.front().strides;
  for (int i = 0; i < kStages; ++i) {
    std::vector<torch::Tensor> ts;
    ts.reserve(parts.size());
    for (const auto& p : parts) ts.push_back(p.stages[i]);
    out.stages[i] = torch::cat(ts, 0);
  }
  return out;
}

FeaturePyramid Encoder::extract(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw std::invalid_argument("encoder input must be [B, 3, H, W]");
  }
  if (images.size(2) % 32 != 0 || images.size(3) % 32 != 0 || images.size(2) == 0) {
    throw std::invalid_argument("encoder input height and width must be positive multiples of 32");
  }
  FeaturePyramid out;
  out.stages = run(images);
  const auto ch = channels();
  for (int i = 0; i < kStages; ++i) {
    const auto& s = out.stages[i];
    const int64_t stride = out.strides[i];
    if (s.dim() != 4 || s.size(1) != ch[i] || s.size(2) != images.size(2) / stride ||
        s.size(3) != images.size(3) / stride) {
      throw std::runtime_error("encoder stage " + std::to_string(i + 1) + " has an unexpected shape");
    }
  }
  return out;
}

int64_t Encoder::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

namespace {

std::array<int64_t, kStages> conv_widths(const std::string& arch) {
  if (arch == "conv-tiny") return {16, 24, 40, 64, 96};
  if (arch == "conv-small") return {24, 32, 56, 112, 160};
  throw ConfigError("unknown built-in encoder: " + arch);
}

}  // namespace

ConvEncoder::ConvEncoder(const std::string& architecture, std::uint64_t seed)
    : architecture_(architecture), channels_(conv_widths(architecture)) {
  namespace nn = torch::nn;
  net_ = nn::ModuleList();
  int64_t in = 3;
  for (int i = 0; i < kStages; ++i) {
    const int64_t c = channels_[i];
    // Pooling rather than strided convolution: untrained filters alias badly when strided, which
    // makes features jump under one-pixel shifts.
    nn::Sequential stage(nn::Conv2d(nn::Conv2dOptions(in, c, 3).padding(1)), nn::ReLU(),
                         nn::Conv2d(nn::Conv2dOptions(c, c, 3).padding(1)), nn::ReLU(), nn::AvgPool2d(2));
    net_->push_back(stage);
    in = c;
  }
  // He-normal weights from a private generator so the global torch RNG stays untouched.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(mix_seed(seed, fnv1a(architecture)));
  torch::NoGradGuard guard;
  for (auto& p : net_->named_parameters()) {
    auto& t = p.value();
    if (t.dim() == 4) {
      const double fan_in = static_cast<double>(t.size(1) * t.size(2) * t.size(3));
      t.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    } else {
      t.zero_();
    }
  }
  set_trainable(false);
  net_->eval();
}

std::vector<torch::Tensor> ConvEncoder::parameters() const { return net_->parameters(); }

void ConvEncoder::set_trainable(bool trainable) {
  for (auto& p : net_->parameters()) p.set_requires_grad(trainable);
}

std::array<torch::Tensor, kStages> ConvEncoder::run(const torch::Tensor& images) {
  std::array<torch::Tensor, kStages> out;
  torch::Tensor x = images;
  for (int i = 0; i < kStages; ++i) {
    x = net_[i]->as<torch::nn::Sequential>()->forward(x);
    // Random ReLU features share a large positive mean; standardizing each location across
    // channels keeps dot products from being dominated by it.
    out[i] = (x - x.mean(1, true)) / (x.std(1, false, true) + 1e-5);
  }
  return out;
}

struct ScriptedEncoder::Impl {
  torch::jit::script::Module module;
};

ScriptedEncoder::ScriptedEncoder(std::string architecture, const std::string& path)
    : impl_(std::make_unique<Impl>()), architecture_(std::move(architecture)) {
  try {
    impl_->module = torch::jit::load(path);
  } catch (const c10::Error& e) {
    throw ConfigError("cannot load encoder '" + architecture_ + "' from " + path + ": " + e.what_without_backtrace());
  }
  impl_->module.eval();
  set_trainable(false);
  torch::NoGradGuard guard;
  const auto probe = run(torch::zeros({1, 3, 64, 64}));
  for (int i = 0; i < kStages; ++i) channels_[i] = probe[i].size(1);
}

ScriptedEncoder::~ScriptedEncoder() = default;

std::vector<torch::Tensor> ScriptedEncoder::parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : impl_->module.parameters()) out.push_back(p);
  return out;
}

void ScriptedEncoder::set_trainable(bool trainable) {
  for (auto p : impl_->module.parameters()) p.set_requires_grad(trainable);
}

void ScriptedEncoder::to(torch::Device device) { impl_->module.to(device); }

std::array<torch::Tensor, kStages> ScriptedEncoder::run(const torch::Tensor& images) {
  const c10::IValue result = impl_->module.forward({images});
  std::vector<torch::Tensor> maps;
  if (result.isTensorList()) {
    for (const auto& t : result.toTensorList()) maps.push_back(t);
  } else if (result.isTuple()) {
    for (const auto& v : result.toTupleRef().elements()) maps.push_back(v.toTensor());
  } else if (result.isList()) {
    for (const auto& v : result.toListRef()) maps.push_back(v.toTensor());
  }
  if (maps.size() != kStages) {
    throw std::runtime_error("scripted encoder must return 5 feature maps, got " + std::to_string(maps.size()));
  }
  std::array<torch::Tensor, kStages> out;
  for (int i = 0; i < kStages; ++i) out[i] = maps[i];
  return out;
}

std::shared_ptr<Encoder> make_encoder(const ModelConfig& config) {
  if (config.encoder == "conv-tiny" || config.encoder == "conv-small") {
    return std::make_shared<ConvEncoder>(config.encoder, config.encoder_seed);
  }
  if (config.encoder_weights.empty()) {
    throw ConfigError("encoder '" + config.encoder + "' needs encoder_weights (a TorchScript file)");
  }
  return std::make_shared<ScriptedEncoder>(config.encoder, config.encoder_weights);
}

torch::Tensor preprocess(const cv::Mat& bgr, int size) {
  cv::Mat img = bgr;
  if (img.rows != size || img.cols != size) cv::resize(bgr, img, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  torch::Tensor t = image_to_tensor(img);
  const auto m = Encoder::mean();
  const auto s = Encoder::std();
  auto mean = torch::tensor({m[0], m[1], m[2]}).view({3, 1, 1});
  auto sd = torch::tensor({s[0], s[1], s[2]}).view({3, 1, 1});
  return (t - mean) / sd;
}

torch::Tensor embed_global(const FeaturePyramid& pyramid) { return pyramid.stage(5).mean({2, 3}); }

EmbeddingVector to_embedding(const torch::Tensor& row) {
  EmbeddingVector e;
  e.values = row.detach().to(torch::kCPU).to(torch::kFloat64).flatten().contiguous();
  e.norm = e.values.norm().item<double>();
  return e;
}

}  // namespace metauas
