#pragma once

#include <opencv2/core.hpp>
#include <torch/types.h>

namespace metauas {

/// CV_8UC3 BGR -> float [3, H, W] RGB in [0, 1].
torch::Tensor image_to_tensor(const cv::Mat& bgr);
/// CV_8UC1 {0,1} -> float [1, H, W].
torch::Tensor mask_to_tensor(const cv::Mat& mask);
/// [H, W] or [1, H, W] float tensor -> CV_32FC1 (copied).
cv::Mat tensor_to_map(const torch::Tensor& t);

}  // namespace metauas
