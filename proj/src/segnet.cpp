#include "metauas/segnet.hpp"

#include <numeric>
#include <stdexcept>

#include "metauas/align.hpp"

namespace metauas {

namespace nn = torch::nn;

namespace {

nn::Sequential conv_block(int64_t in, int64_t out) {
  const int64_t groups = std::gcd<int64_t>(8, std::max<int64_t>(1, out / 8));
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), nn::GroupNorm(groups, out), nn::ReLU(),
                        nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)), nn::GroupNorm(groups, out), nn::ReLU());
}

torch::Tensor upsample_to(const torch::Tensor& x, int64_t h, int64_t w) {
  return nn::functional::interpolate(
      x, nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kBilinear).align_corners(false));
}

std::vector<torch::Tensor> params_of(const nn::Module& m) { return m.parameters(); }

}  // namespace

SegNetImpl::SegNetImpl(const ModelConfig& config, const std::array<int64_t, kStages>& ch) : config_(config) {
  config.validate();
  reducers_ = register_module("reducers", nn::ModuleList());
  for (int l = 3; l <= 5; ++l) {
    const int64_t c = ch[l - 1];
    nn::Conv2d r(nn::Conv2dOptions(c, std::max<int64_t>(1, c / 2), 1));
    // A shared bias would add the same direction to every key and skew the dot products.
    torch::NoGradGuard guard;
    r->bias.zero_();
    reducers_->push_back(r);
  }
  int64_t w = config.decoder_channels;
  for (int i = 0; i < 6; ++i) {
    widths_.push_back(w);
    w = std::max<int64_t>(32, w / 2);
  }
  const auto fc = [&](int l) { return fused_channels(ch[l - 1], config.fusion); };
  blocks_ = register_module("decoder", nn::ModuleList());
  blocks_->push_back(conv_block(fc(5), widths_[0]));
  blocks_->push_back(conv_block(widths_[0] + fc(4), widths_[1]));
  blocks_->push_back(conv_block(widths_[1] + fc(3), widths_[2]));
  blocks_->push_back(conv_block(widths_[2] + ch[1], widths_[3]));
  blocks_->push_back(conv_block(widths_[3] + ch[0], widths_[4]));
  blocks_->push_back(conv_block(widths_[4], widths_[5]));
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(widths_[5], 1, 1)));
}

torch::Tensor SegNetImpl::reduce(const torch::Tensor& x, int stage) {
  if (stage < 3 || stage > 5) throw std::invalid_argument("only stages 3-5 are reduced");
  return reducers_[stage - 3]->as<nn::Conv2d>()->forward(x);
}

FusedFeatures SegNetImpl::fuse_features(const FeaturePyramid& query, const FeaturePyramid& prompt) {
  FusedFeatures out;
  for (int l = 3; l <= 5; ++l) {
    const auto& fq = query.stage(l);
    const auto& fp = prompt.stage(l);
    torch::Tensor aligned;
    switch (config_.align) {
      case AlignMode::none:
        if (!fq.sizes().equals(fp.sizes())) {
          throw std::invalid_argument("without alignment, query and prompt features must match in shape");
        }
        aligned = fp;
        break;
      case AlignMode::hard:
        aligned = align_hard(reduce(fq, l), reduce(fp, l), fp);
        break;
      case AlignMode::soft: {
        auto s = align_soft(reduce(fq, l), reduce(fp, l), fp, config_.temperature);
        aligned = s.aligned;
        out.weights[l - 3] = s.weights;
        break;
      }
    }
    out.fused[l - 3] = fuse(fq, aligned, config_.fusion);
  }
  out.skips = {query.stage(1), query.stage(2)};
  return out;
}

torch::Tensor SegNetImpl::decode(const FusedFeatures& f, int64_t h, int64_t w) {
  auto block = [&](int i, const torch::Tensor& x) { return blocks_[i]->as<nn::Sequential>()->forward(x); };
  torch::Tensor x = block(0, f.fused[2]);
  const std::array<torch::Tensor, 4> skips{f.fused[1], f.fused[0], f.skips[1], f.skips[0]};
  for (int i = 0; i < 4; ++i) {
    const auto& s = skips[i];
    x = upsample_to(x, s.size(2), s.size(3));
    x = block(i + 1, torch::cat({x, s}, 1));
  }
  x = block(5, upsample_to(x, h, w));
  return head_->forward(x);
}

torch::Tensor SegNetImpl::forward(const FeaturePyramid& query, const FeaturePyramid& prompt, int64_t h, int64_t w) {
  return decode(fuse_features(query, prompt), h, w);
}

std::vector<torch::Tensor> SegNetImpl::align_parameters() const { return params_of(*reducers_); }
std::vector<torch::Tensor> SegNetImpl::decoder_parameters() const { return params_of(*blocks_); }
std::vector<torch::Tensor> SegNetImpl::head_parameters() const { return params_of(*head_); }

MetaUasModel::MetaUasModel(const ModelConfig& config, std::uint64_t init_seed)
    : MetaUasModel(config, make_encoder(config), init_seed) {}

MetaUasModel::MetaUasModel(const ModelConfig& config, std::shared_ptr<Encoder> encoder, std::uint64_t init_seed)
    : config_(config), encoder_(std::move(encoder)) {
  config_.validate();
  torch::manual_seed(init_seed);
  segnet_ = SegNet(config_, encoder_->channels());
  encoder_->set_trainable(config_.finetune_encoder);
}

FeaturePyramid MetaUasModel::encode(const torch::Tensor& images) {
  if (config_.finetune_encoder) return encoder_->extract(images);
  torch::NoGradGuard guard;
  return encoder_->extract(images);
}

torch::Tensor MetaUasModel::forward_logits(const torch::Tensor& query, const torch::Tensor& prompt) {
  if (!query.sizes().equals(prompt.sizes())) throw std::invalid_argument("query and prompt batches differ in shape");
  const int64_t b = query.size(0);
  const FeaturePyramid both = encode(torch::cat({query, prompt}, 0));
  FeaturePyramid q, p;
  for (int i = 0; i < kStages; ++i) {
    q.stages[i] = both.stages[i].narrow(0, 0, b);
    p.stages[i] = both.stages[i].narrow(0, b, b);
  }
  return segnet_->forward(q, p, query.size(2), query.size(3));
}

torch::Tensor MetaUasModel::forward(const torch::Tensor& query, const torch::Tensor& prompt) {
  return torch::sigmoid(forward_logits(query, prompt));
}

torch::Tensor MetaUasModel::forward_features(const FeaturePyramid& query, const FeaturePyramid& prompt, int64_t h,
                                             int64_t w) {
  return torch::sigmoid(segnet_->forward(query, prompt, h, w));
}

torch::Tensor MetaUasModel::preprocess(const cv::Mat& bgr) const {
  return metauas::preprocess(bgr, config_.input_size).to(device_);
}

std::vector<torch::Tensor> MetaUasModel::learnable_parameters() const {
  std::vector<torch::Tensor> out = segnet_->parameters();
  if (config_.finetune_encoder) {
    for (const auto& p : encoder_->parameters()) out.push_back(p);
  }
  return out;
}

int64_t MetaUasModel::learnable_count() const {
  int64_t n = 0;
  for (const auto& p : learnable_parameters()) n += p.numel();
  return n;
}

int64_t MetaUasModel::frozen_count() const { return config_.finetune_encoder ? 0 : encoder_->parameter_count(); }

void MetaUasModel::train(bool on) { segnet_->train(on); }

void MetaUasModel::to(torch::Device device) {
  device_ = device;
  encoder_->to(device);
  segnet_->to(device);
}

}  // namespace metauas
