#pragma once

// Seeded synthetic corpora with matching frozen image features.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmcot/dataset.hpp"
#include "mmcot/tensor.hpp"

namespace mmcot {

class FeatureStore;

struct SyntheticCorpus {
  std::vector<TripletRecord> records;
  std::map<std::string, Tensor> features;  // keyed by image_ref

  void register_features(FeatureStore& store) const;
  // Writes corpus.jsonl and one feature file per image_ref (relative to dir).
  void write(const std::filesystem::path& dir) const;
};

struct OverfitOptions {
  std::size_t records = 16;
  std::size_t width = 16;
  std::size_t regions = 3;
  std::uint64_t seed = 7;
};

// Each record pairs a distinct object with a distinct colour; all in the train split.
SyntheticCorpus make_overfit_corpus(const OverfitOptions& options = {});

struct GroundedOptions {
  std::size_t train = 48;
  std::size_t val = 16;
  std::size_t test = 16;
  std::size_t classes = 4;
  std::size_t width = 16;
  std::size_t regions = 3;
  double noise = 0.1;
  std::uint64_t seed = 7;
};

// Question and rationale are identical across records; the answer (a colour)
// is recoverable only from the class prototype in the image features.
SyntheticCorpus make_image_grounded_corpus(const GroundedOptions& options = {});

}  // namespace mmcot
