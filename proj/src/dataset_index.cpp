#include "metauas/dataset_index.hpp"

#include <algorithm>

#include "metauas/common.hpp"

namespace metauas {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> images_in(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

size_t DatasetIndex::test_count() const {
  size_t n = 0;
  for (const ClassIndex& c : classes) n += c.test.size();
  return n;
}

const ClassIndex& DatasetIndex::at(const std::string& name) const {
  for (const ClassIndex& c : classes) {
    if (c.name == name) return c;
  }
  throw DataError("dataset has no class " + name);
}

DatasetIndex ingest_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root does not exist: " + root.string());
  DatasetIndex index;
  index.root = root;
  std::vector<std::string> problems;
  for (const std::string& cls : subdirs(root)) {
    const fs::path base = root / cls;
    if (!fs::is_directory(base / "train") && !fs::is_directory(base / "test")) continue;
    ClassIndex ci;
    ci.name = cls;
    ci.train_good = images_in(base / "train" / "good");
    if (ci.train_good.empty()) problems.push_back(cls + ": no train/good images");
    bool needs_gt = false;
    for (const std::string& defect : subdirs(base / "test")) {
      for (const fs::path& img : images_in(base / "test" / defect)) {
        TestEntry e;
        e.image = img;
        e.defect = defect;
        e.anomalous = defect != "good";
        e.id = defect + "/" + img.stem().string();
        if (e.anomalous) {
          needs_gt = true;
          const fs::path mask = base / "ground_truth" / defect / (img.stem().string() + "_mask.png");
          if (fs::exists(mask)) {
            e.mask = mask;
          } else {
            problems.push_back(cls + ": missing mask for " + e.id);
          }
        }
        ci.test.push_back(std::move(e));
      }
    }
    if (needs_gt && !fs::is_directory(base / "ground_truth")) {
      problems.push_back(cls + ": ground_truth/ directory is missing");
    }
    index.classes.push_back(std::move(ci));
  }
  if (index.classes.empty()) problems.push_back("no class directories under " + root.string());
  if (!problems.empty()) {
    std::string msg = "malformed dataset:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return index;
}

}  // namespace metauas
