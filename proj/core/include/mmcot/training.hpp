#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcot/config.hpp"
#include "mmcot/dataset.hpp"
#include "mmcot/model.hpp"
#include "mmcot/objectives.hpp"
#include "mmcot/vocab.hpp"

namespace mmcot {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loads and caches frozen image features by image_ref. Relative refs are
// resolved against base_dir.
class FeatureStore {
 public:
  FeatureStore(std::filesystem::path base_dir, std::size_t width);

  const Tensor& get(const std::string& image_ref);
  // Registers in-memory features (tests, synthetic corpora).
  void put(const std::string& image_ref, Tensor features);
  std::size_t width() const { return width_; }

 private:
  std::filesystem::path base_dir_;
  std::size_t width_;
  std::map<std::string, Tensor> cache_;
};

struct Example {
  StageInput input;
  std::vector<TokenId> output;
};

// Stage-2 examples use the gold rationale as the teacher-forced input.
std::vector<Example> make_examples(Stage stage, std::span<const TripletRecord> records, const Vocabulary& vocab,
                                   FeatureStore& features);

struct StepLog {
  std::size_t step = 0;
  LossBreakdown loss;
};

struct ValidationLog {
  std::size_t step = 0;
  LossBreakdown loss;
};

struct StageLog {
  Stage stage = Stage::rationale;
  std::vector<StepLog> steps;
  std::vector<ValidationLog> validation;
  bool early_stopped = false;
};

// Stops once `patience` consecutive validation losses change by less than
// `tolerance` relative to the previous value.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double tolerance) : patience_(patience), tolerance_(tolerance) {}
  // Returns true when training should stop.
  bool update(double validation_loss);
  std::size_t stable_rounds() const { return stable_; }

 private:
  std::size_t patience_;
  double tolerance_;
  std::size_t stable_ = 0;
  bool has_previous_ = false;
  double previous_ = 0.0;
};

// Loss of one batch: mean per-example cross-entropy plus lambda times the
// in-batch image/text contrastive loss (when enabled and the batch has >= 2 items).
struct BatchLoss {
  Tensor total;
  LossBreakdown values;
};

BatchLoss batch_loss(const ToyModel& model, std::span<const Example* const> batch, const TrainConfig& config,
                     bool contrastive);

// Mean loss over the examples in batch_size chunks, without updating anything.
LossBreakdown evaluate_loss(const ToyModel& model, std::span<const Example> examples, const TrainConfig& config,
                            bool contrastive);

StageLog train_stage(ToyModel& model, std::span<const Example> train, std::span<const Example> validation,
                     const TrainConfig& config, bool contrastive, std::mt19937_64& rng, Stage stage);

struct TrainedPipeline {
  TrainConfig config;
  Vocabulary vocab;
  std::shared_ptr<ToyModel> rationale_model;
  std::shared_ptr<ToyModel> answer_model;  // same object when stages share parameters
};

struct TrainingResult {
  TrainedPipeline pipeline;
  std::vector<StageLog> logs;
};

ModelConfig model_config_for(const TrainConfig& config, std::size_t vocab_size);

// Fresh, untrained pipeline; the same seed yields the same parameters.
TrainedPipeline initialize_pipeline(const TrainConfig& config, Vocabulary vocab);

// Trains both stages on the train split, validating (and early stopping) on the val split.
TrainingResult train(std::span<const TripletRecord> corpus, FeatureStore& features, const TrainConfig& config);

// Checkpoint directory: config.txt, vocab.txt, rationale.params, answer.params.
void save_checkpoint(const std::filesystem::path& dir, const TrainedPipeline& pipeline);
TrainedPipeline load_checkpoint(const std::filesystem::path& dir);

// CSV with header `step,ce,con,total`.
void write_loss_csv(const std::filesystem::path& path, std::span<const StepLog> steps);

}  // namespace mmcot
