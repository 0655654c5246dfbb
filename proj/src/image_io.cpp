#include "metauas/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "metauas/common.hpp"

namespace metauas {

namespace fs = std::filesystem;

cv::Mat load_image(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw DataError("cannot read image: " + path.string());
  if (raw.depth() == CV_16U) raw.convertTo(raw, CV_8U, 1.0 / 257.0);
  cv::Mat out;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, out, cv::COLOR_GRAY2BGR); break;
    case 3: out = raw; break;
    case 4: cv::cvtColor(raw, out, cv::COLOR_BGRA2BGR); break;
    default: throw DataError("unsupported channel count in " + path.string());
  }
  return out;
}

cv::Mat load_mask(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw DataError("cannot read mask: " + path.string());
  cv::Mat out;
  cv::compare(raw, 0, out, cv::CMP_GT);
  out /= 255;
  return out;
}

static void write_or_throw(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write " + path.string());
}

void save_image(const fs::path& path, const cv::Mat& image) { write_or_throw(path, image); }

void save_mask(const fs::path& path, const cv::Mat& mask) {
  cv::Mat out;
  cv::compare(mask, 0, out, cv::CMP_GT);
  write_or_throw(path, out);
}

void save_map_u16(const fs::path& path, const cv::Mat& map) {
  CV_Assert(map.type() == CV_32FC1);
  cv::Mat out(map.size(), CV_16UC1);
  for (int r = 0; r < map.rows; ++r) {
    const float* src = map.ptr<float>(r);
    auto* dst = out.ptr<std::uint16_t>(r);
    for (int c = 0; c < map.cols; ++c) {
      const double v = std::clamp(static_cast<double>(src[c]), 0.0, 1.0);
      dst[c] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
  }
  write_or_throw(path, out);
}

cv::Mat load_map_u16(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty() || raw.type() != CV_16UC1) throw DataError("not a 16-bit map: " + path.string());
  cv::Mat out;
  raw.convertTo(out, CV_32F, 1.0 / 65535.0);
  return out;
}

cv::Mat resize_image(const cv::Mat& image, int height, int width) {
  if (image.rows == height && image.cols == width) return image.clone();
  cv::Mat out;
  cv::resize(image, out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return out;
}

cv::Mat resize_mask(const cv::Mat& mask, int height, int width) {
  if (mask.rows == height && mask.cols == width) return mask.clone();
  cv::Mat out;
  cv::resize(mask, out, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  return out;
}

bool bit_identical(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) return false;
  for (int r = 0; r < a.rows; ++r) {
    if (std::memcmp(a.ptr(r), b.ptr(r), a.cols * a.elemSize()) != 0) return false;
  }
  return true;
}

std::uint64_t mat_hash(const cv::Mat& m, std::uint64_t seed) {
  std::uint64_t h = seed;
  const int dims[3] = {m.rows, m.cols, m.type()};
  h = fnv1a(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(dims), sizeof(dims)),
            h);
  for (int r = 0; r < m.rows; ++r) {
    h = fnv1a(std::span<const std::uint8_t>(m.ptr(r), m.cols * m.elemSize()), h);
  }
  return h;
}

}  // namespace metauas
