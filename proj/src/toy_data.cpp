#include "metauas/toy_data.hpp"

#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "metauas/image_io.hpp"

namespace metauas::toy {

namespace fs = std::filesystem;

namespace {

cv::Scalar random_color(Rng& rng) {
  return cv::Scalar(uniform_int(rng, 0, 255), uniform_int(rng, 0, 255), uniform_int(rng, 0, 255));
}

// A color at least `min_dist` (L1 over channels) away from `other`.
cv::Scalar contrasting_color(Rng& rng, const cv::Scalar& other, double min_dist = 150.0) {
  for (int i = 0; i < 32; ++i) {
    cv::Scalar c = random_color(rng);
    if (std::abs(c[0] - other[0]) + std::abs(c[1] - other[1]) + std::abs(c[2] - other[2]) >= min_dist) return c;
  }
  return cv::Scalar(255 - other[0], 255 - other[1], 255 - other[2]);
}

void add_noise(cv::Mat& img, Rng& rng, double sigma) {
  cv::Mat noise(img.size(), CV_16SC3);
  std::normal_distribution<double> dist(0.0, sigma);
  for (int r = 0; r < noise.rows; ++r) {
    auto* p = noise.ptr<cv::Vec3s>(r);
    for (int c = 0; c < noise.cols; ++c) {
      for (int k = 0; k < 3; ++k) p[c][k] = static_cast<short>(std::lround(dist(rng)));
    }
  }
  cv::Mat wide;
  img.convertTo(wide, CV_16SC3);
  wide += noise;
  wide.convertTo(img, CV_8UC3);
}

cv::Mat background(int size, Rng& rng) {
  cv::Mat img(size, size, CV_8UC3);
  const cv::Scalar a = random_color(rng);
  const cv::Scalar b = random_color(rng);
  const int kind = uniform_int(rng, 0, 3);
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double freq = uniform(rng, 2.0, 8.0) * 2.0 * std::numbers::pi / size;
  const int block = uniform_int(rng, 4, std::max(5, size / 6));
  // Low-resolution color field upsampled for smooth blotches.
  cv::Mat coarse(4, 4, CV_8UC3);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const cv::Scalar s = random_color(rng);
      coarse.at<cv::Vec3b>(r, c) = cv::Vec3b(s[0], s[1], s[2]);
    }
  }
  cv::Mat smooth;
  cv::resize(coarse, smooth, img.size(), 0, 0, cv::INTER_CUBIC);
  for (int r = 0; r < size; ++r) {
    auto* p = img.ptr<cv::Vec3b>(r);
    for (int c = 0; c < size; ++c) {
      double t = 0.0;
      switch (kind) {
        case 0: t = (c * std::cos(angle) + r * std::sin(angle)) / (size * 1.5) + 0.25; break;
        case 1: t = 0.5 + 0.5 * std::sin(freq * (c * std::cos(angle) + r * std::sin(angle))); break;
        case 2: t = ((r / block + c / block) % 2) ? 0.8 : 0.2; break;
        default: p[c] = smooth.at<cv::Vec3b>(r, c); continue;
      }
      t = std::clamp(t, 0.0, 1.0);
      for (int k = 0; k < 3; ++k) p[c][k] = cv::saturate_cast<std::uint8_t>(a[k] * (1 - t) + b[k] * t);
    }
  }
  return img;
}

void draw_shape(cv::Mat& canvas, cv::Mat& footprint, Rng& rng, int size) {
  const cv::Point center(uniform_int(rng, size / 8, size - size / 8), uniform_int(rng, size / 8, size - size / 8));
  const int radius = std::max(3, static_cast<int>(size * uniform(rng, 0.08, 0.25)));
  footprint = cv::Mat::zeros(canvas.size(), CV_8UC1);
  switch (uniform_int(rng, 0, 2)) {
    case 0: {
      const cv::Size axes(radius, std::max(2, static_cast<int>(radius * uniform(rng, 0.5, 1.0))));
      cv::ellipse(footprint, center, axes, uniform(rng, 0, 180), 0, 360, cv::Scalar(1), cv::FILLED);
      break;
    }
    case 1: {
      const cv::RotatedRect rect(center, cv::Size2f(radius * uniform(rng, 1.0, 2.0), radius * uniform(rng, 0.6, 1.5)),
                                 static_cast<float>(uniform(rng, 0, 180)));
      cv::Point2f pts[4];
      rect.points(pts);
      std::vector<cv::Point> poly(pts, pts + 4);
      cv::fillConvexPoly(footprint, poly, cv::Scalar(1));
      break;
    }
    default: {
      const int n = uniform_int(rng, 3, 6);
      std::vector<cv::Point> poly;
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n + uniform(rng, -0.3, 0.3);
        const double rr = radius * uniform(rng, 0.6, 1.2);
        poly.emplace_back(center.x + static_cast<int>(rr * std::cos(a)), center.y + static_cast<int>(rr * std::sin(a)));
      }
      cv::fillPoly(footprint, std::vector<std::vector<cv::Point>>{poly}, cv::Scalar(1));
      break;
    }
  }
  const cv::Scalar avg = cv::mean(canvas, footprint);
  const cv::Scalar fill = contrasting_color(rng, avg, 180.0);
  cv::Mat layer(canvas.size(), CV_8UC3, fill);
  // Inner stripes so instances carry texture of their own.
  const cv::Scalar stripe = (fill * 0.6);
  const int spacing = uniform_int(rng, 3, 6);
  for (int r = 0; r < size; r += spacing) cv::line(layer, {0, r}, {size - 1, r}, stripe, 1);
  layer.copyTo(canvas, footprint);
}

}  // namespace

synth::SourceRecord make_record(const std::string& id, int size, std::uint64_t seed) {
  Rng rng(record_seed(seed, id));
  synth::SourceRecord rec;
  rec.image_id = id;
  rec.image = background(size, rng);
  const int count = uniform_int(rng, 1, 4);
  for (int i = 0; i < count; ++i) {
    cv::Mat fp;
    draw_shape(rec.image, fp, rng, size);
    for (cv::Mat& earlier : rec.instances) earlier.setTo(0, fp);
    rec.instances.push_back(fp);
  }
  std::erase_if(rec.instances, [](const cv::Mat& m) { return cv::countNonZero(m) == 0; });
  add_noise(rec.image, rng, 3.0);
  return rec;
}

MemoryCorpus::MemoryCorpus(std::vector<synth::SourceRecord> records) {
  for (auto& r : records) {
    std::string id = r.image_id;
    records_.emplace(std::move(id), std::move(r));
  }
}

std::vector<std::string> MemoryCorpus::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, r] : records_) out.push_back(id);
  return out;
}

synth::SourceRecord MemoryCorpus::load(const std::string& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw DataError("corpus has no record " + id);
  synth::SourceRecord copy;
  copy.image_id = it->second.image_id;
  copy.image = it->second.image.clone();
  for (const cv::Mat& m : it->second.instances) copy.instances.push_back(m.clone());
  return copy;
}

static std::string record_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img%06d", i);
  return buf;
}

MemoryCorpus make_memory_corpus(int count, int size, std::uint64_t seed) {
  std::vector<synth::SourceRecord> records;
  records.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) records.push_back(make_record(record_name(i), size, seed));
  return MemoryCorpus(std::move(records));
}

void write_corpus(const fs::path& root, int count, int size, std::uint64_t seed) {
  for (int i = 0; i < count; ++i) {
    const std::string id = record_name(i);
    const synth::SourceRecord rec = make_record(id, size, seed);
    save_image(root / "images" / (id + ".png"), rec.image);
    for (size_t k = 0; k < rec.instances.size(); ++k) {
      save_mask(root / "masks" / id / (std::to_string(k) + ".png"), rec.instances[k]);
    }
  }
}

namespace {

struct ClassStyle {
  int pattern = 0;  // 0 grid, 1 disc, 2 stripes, 3 checker
  cv::Scalar base;
  cv::Scalar accent;
};

ClassStyle style_for(const std::string& name, std::uint64_t seed) {
  Rng rng(record_seed(seed, "class/" + name));
  ClassStyle s;
  if (name == "grid") s.pattern = 0;
  else if (name == "disc") s.pattern = 1;
  else s.pattern = static_cast<int>(fnv1a(name) % 4);
  s.base = random_color(rng);
  s.accent = contrasting_color(rng, s.base, 200.0);
  return s;
}

cv::Mat normal_image(const ClassStyle& s, int size, Rng& rng) {
  cv::Mat img(size, size, CV_8UC3, s.base);
  const int dx = uniform_int(rng, -2, 2);
  const int dy = uniform_int(rng, -2, 2);
  const int spacing = std::max(4, size / 8);
  switch (s.pattern) {
    case 0:
      for (int v = dx % spacing; v < size; v += spacing) cv::line(img, {v, 0}, {v, size - 1}, s.accent, 1);
      for (int v = dy % spacing; v < size; v += spacing) cv::line(img, {0, v}, {size - 1, v}, s.accent, 1);
      break;
    case 1: {
      const cv::Point c(size / 2 + dx, size / 2 + dy);
      cv::circle(img, c, size * 3 / 8, s.accent, cv::FILLED);
      cv::circle(img, c, size / 6, s.base, 2);
      break;
    }
    case 2:
      for (int v = dy % spacing; v < size; v += spacing) cv::line(img, {0, v}, {size - 1, v + 2}, s.accent, 2);
      break;
    default:
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          if ((((r + dy + size) / spacing) + ((c + dx + size) / spacing)) % 2) {
            img.at<cv::Vec3b>(r, c) = cv::Vec3b(s.accent[0], s.accent[1], s.accent[2]);
          }
        }
      }
  }
  add_noise(img, rng, 3.0);
  return img;
}

void add_defect(cv::Mat& img, cv::Mat& mask, const std::string& kind, const ClassStyle& s, int size, Rng& rng) {
  mask = cv::Mat::zeros(img.size(), CV_8UC1);
  const cv::Point c(uniform_int(rng, size / 4, size * 3 / 4), uniform_int(rng, size / 4, size * 3 / 4));
  const cv::Scalar color = contrasting_color(rng, (s.base + s.accent) * 0.5, 160.0);
  if (kind == "scratch") {
    const double a = uniform(rng, 0.0, std::numbers::pi);
    const double len = size * uniform(rng, 0.15, 0.3);
    const cv::Point d(static_cast<int>(len * std::cos(a)), static_cast<int>(len * std::sin(a)));
    cv::line(mask, c - d, c + d, cv::Scalar(1), std::max(1, size / 32));
  } else {
    const int r = std::max(2, static_cast<int>(size * uniform(rng, 0.05, 0.1)));
    cv::ellipse(mask, c, {r, std::max(2, r * 2 / 3)}, uniform(rng, 0, 180), 0, 360, cv::Scalar(1), cv::FILLED);
  }
  img.setTo(color, mask);
}

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace

void write_mvtec(const fs::path& root, const MvtecSpec& spec) {
  for (const std::string& cls : spec.classes) {
    const ClassStyle style = style_for(cls, spec.seed);
    Rng rng(record_seed(spec.seed, "images/" + cls));
    for (int i = 0; i < spec.train_good; ++i) {
      save_image(root / cls / "train" / "good" / (index_name(i) + ".png"), normal_image(style, spec.size, rng));
    }
    for (int i = 0; i < spec.test_good; ++i) {
      save_image(root / cls / "test" / "good" / (index_name(i) + ".png"), normal_image(style, spec.size, rng));
    }
    for (const std::string& defect : spec.defects) {
      for (int i = 0; i < spec.test_defect; ++i) {
        cv::Mat img = normal_image(style, spec.size, rng);
        cv::Mat mask;
        add_defect(img, mask, defect, style, spec.size, rng);
        save_image(root / cls / "test" / defect / (index_name(i) + ".png"), img);
        save_mask(root / cls / "ground_truth" / defect / (index_name(i) + "_mask.png"), mask);
      }
    }
  }
}

}  // namespace metauas::toy
