#include "metauas/tensor_convert.hpp"

#include <cstring>

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

namespace metauas {

torch::Tensor image_to_tensor(const cv::Mat& bgr) {
  CV_Assert(bgr.type() == CV_8UC3);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  auto t = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous();
}

torch::Tensor mask_to_tensor(const cv::Mat& mask) {
  CV_Assert(mask.type() == CV_8UC1);
  cv::Mat c = mask.isContinuous() ? mask : mask.clone();
  auto t = torch::from_blob(c.data, {1, c.rows, c.cols}, torch::kUInt8);
  return (t > 0).to(torch::kFloat32);
}

cv::Mat tensor_to_map(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU).to(torch::kFloat32).contiguous();
  if (x.dim() == 3) x = x.squeeze(0);
  TORCH_CHECK(x.dim() == 2, "tensor_to_map expects [H, W] or [1, H, W]");
  cv::Mat out(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)), CV_32FC1);
  std::memcpy(out.data, x.data_ptr<float>(), sizeof(float) * x.numel());
  return out;
}

}  // namespace metauas
