#include "mmcot/synthetic.hpp"

#include <array>
#include <random>

#include "mmcot/error.hpp"
#include "mmcot/tensor_io.hpp"
#include "mmcot/training.hpp"

namespace mmcot {

namespace {

constexpr std::array<std::string_view, 16> kObjects{"apple", "boat",  "car",   "dog",  "kite",  "lamp",
                                                    "mug",   "bike",  "train", "vase", "chair", "clock",
                                                    "hat",   "shirt", "bus",   "bird"};
constexpr std::array<std::string_view, 16> kColors{"red",  "blue",  "green", "yellow", "black", "white",
                                                   "pink", "brown", "gray",  "orange", "purple", "gold",
                                                   "teal", "navy",  "olive", "silver"};

Tensor random_features(std::size_t rows, std::size_t width, std::mt19937_64& rng) {
  return Tensor::uniform({rows, width}, -1.0, 1.0, rng, false);
}

}  // namespace

void SyntheticCorpus::register_features(FeatureStore& store) const {
  for (const auto& [ref, t] : features) store.put(ref, t);
}

void SyntheticCorpus::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_corpus(dir / "corpus.jsonl", records);
  for (const auto& [ref, t] : features) {
    const auto path = dir / ref;
    std::filesystem::create_directories(path.parent_path());
    save_tensor(path, t);
  }
}

SyntheticCorpus make_overfit_corpus(const OverfitOptions& options) {
  if (options.records == 0 || options.records > kObjects.size()) {
    throw ParameterError("overfit corpus supports 1 to 16 records");
  }
  std::mt19937_64 rng(options.seed);
  SyntheticCorpus c;
  for (std::size_t i = 0; i < options.records; ++i) {
    const std::string obj(kObjects[i]);
    const std::string color(kColors[i]);
    TripletRecord r;
    r.id = "o" + std::to_string(i);
    r.question = "what color is the " + obj + " ?";
    r.rationale = "the " + obj + " in the picture is " + color + " so the answer is " + color;
    r.answer = color;
    r.image_ref = "features/" + r.id + ".txt";
    r.split = Split::train;
    c.features.emplace(r.image_ref, random_features(options.regions, options.width, rng));
    c.records.push_back(std::move(r));
  }
  return c;
}

SyntheticCorpus make_image_grounded_corpus(const GroundedOptions& options) {
  if (options.classes < 2 || options.classes > kColors.size()) {
    throw ParameterError("grounded corpus needs 2 to 16 classes");
  }
  std::mt19937_64 rng(options.seed);
  std::vector<Tensor> prototypes;
  for (std::size_t k = 0; k < options.classes; ++k) {
    prototypes.push_back(random_features(options.regions, options.width, rng));
  }
  std::normal_distribution<double> noise(0.0, options.noise);
  SyntheticCorpus c;
  std::size_t index = 0;
  auto add = [&](Split split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      const std::size_t k = index % options.classes;
      TripletRecord r;
      r.id = "g" + std::to_string(index);
      r.question = "what color is the object ?";
      r.rationale = "look at the object in the picture to find its color";
      r.answer = std::string(kColors[k]);
      r.image_ref = "features/" + r.id + ".txt";
      r.split = split;
      const auto proto = prototypes[k].data();
      std::vector<double> values(proto.begin(), proto.end());
      for (double& v : values) v += noise(rng);
      c.features.emplace(r.image_ref, Tensor::from({options.regions, options.width}, std::move(values)));
      c.records.push_back(std::move(r));
    }
  };
  add(Split::train, options.train);
  add(Split::val, options.val);
  add(Split::test, options.test);
  return c;
}

}  // namespace mmcot
