#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metauas/synth.hpp"

// Procedural stand-ins for an instance-segmentation corpus and an MVTec-layout benchmark. They
// let the whole pipeline run (and be tested) without downloading any dataset.
namespace metauas::toy {

/// A textured background with 1-4 shape instances; each mask is its visible footprint.
synth::SourceRecord make_record(const std::string& id, int size, std::uint64_t seed);

class MemoryCorpus final : public synth::Corpus {
 public:
  explicit MemoryCorpus(std::vector<synth::SourceRecord> records);
  std::vector<std::string> ids() const override;
  synth::SourceRecord load(const std::string& id) const override;

 private:
  std::map<std::string, synth::SourceRecord> records_;
};

MemoryCorpus make_memory_corpus(int count, int size, std::uint64_t seed);

/// Writes the DirectoryCorpus layout: images/<id>.png and masks/<id>/<k>.png.
void write_corpus(const std::filesystem::path& root, int count, int size, std::uint64_t seed);

struct MvtecSpec {
  std::vector<std::string> classes{"grid", "disc"};
  int train_good = 5;
  int test_good = 3;
  int test_defect = 2;  // per defect type
  std::vector<std::string> defects{"blob", "scratch"};
  int size = 64;
  std::uint64_t seed = 0;
};

/// Writes <root>/<class>/{train/good, test/<defect>, ground_truth/<defect>} with *_mask.png masks.
void write_mvtec(const std::filesystem::path& root, const MvtecSpec& spec);

}  // namespace metauas::toy
