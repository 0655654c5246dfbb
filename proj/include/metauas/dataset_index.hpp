#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace metauas {

struct TestEntry {
  std::filesystem::path image;
  std::string defect;  // "good" for normal images
  bool anomalous = false;
  std::filesystem::path mask;  // empty for normal images
  std::string id;              // "<defect>/<stem>", unique within a class
};

struct ClassIndex {
  std::string name;
  std::vector<std::filesystem::path> train_good;
  std::vector<TestEntry> test;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<ClassIndex> classes;  // sorted by name

  size_t test_count() const;
  const ClassIndex& at(const std::string& name) const;
};

/// Walks an MVTec-layout tree: <root>/<class>/train/good/*, <root>/<class>/test/<defect>/*,
/// <root>/<class>/ground_truth/<defect>/<stem>_mask.png. Throws DataError naming every
/// anomalous image without a mask and every class without train/good images.
DatasetIndex ingest_dataset(const std::filesystem::path& root);

}  // namespace metauas
