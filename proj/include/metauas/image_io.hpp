#pragma once

#include <cstdint>
#include <filesystem>

#include <opencv2/core.hpp>

namespace metauas {

// Images are CV_8UC3 in OpenCV's BGR order; binary masks are CV_8UC1 holding {0, 1}.

/// Loads a PNG/JPEG as 3-channel 8-bit. Grayscale and alpha inputs are converted. Throws DataError.
cv::Mat load_image(const std::filesystem::path& path);
/// Loads a mask file; any nonzero pixel becomes 1.
cv::Mat load_mask(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const cv::Mat& image);
/// Writes an 8-bit single-channel PNG with values {0, 255}.
void save_mask(const std::filesystem::path& path, const cv::Mat& mask);
/// Writes a CV_32F map in [0,1] as a 16-bit PNG with value round(v * 65535).
void save_map_u16(const std::filesystem::path& path, const cv::Mat& map);
cv::Mat load_map_u16(const std::filesystem::path& path);

cv::Mat resize_image(const cv::Mat& image, int height, int width);
cv::Mat resize_mask(const cv::Mat& mask, int height, int width);

bool bit_identical(const cv::Mat& a, const cv::Mat& b);
std::uint64_t mat_hash(const cv::Mat& m, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace metauas
