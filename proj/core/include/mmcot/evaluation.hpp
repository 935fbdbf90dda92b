#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "mmcot/dataset.hpp"
#include "mmcot/training.hpp"

namespace mmcot {

struct Prediction {
  std::string id;
  std::string rationale;
  std::string answer;
  bool truncated = false;
};

// Runs stage 1 then stage 2 (on the generated rationale) for every record.
// Records are independent, so `threads` workers may share the read-only model.
std::vector<Prediction> predict(const TrainedPipeline& pipeline, std::span<const TripletRecord> records,
                                FeatureStore& features, std::size_t threads = 1);

// Predictions as JSONL: {"id", "pred_rationale", "pred_answer"}.
void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

// Gold values as predictions; scoring them must give perfect metrics.
std::vector<Prediction> oracle_predictions(std::span<const TripletRecord> records);

struct CaseThresholds {
  double rationale = 0.5;
  double answer = 0.8;
};

enum class Quadrant { valid_correct, valid_incorrect, invalid_correct, invalid_incorrect };
std::string_view to_string(Quadrant q);
inline constexpr std::array<Quadrant, 4> kAllQuadrants{Quadrant::valid_correct, Quadrant::valid_incorrect,
                                                       Quadrant::invalid_correct, Quadrant::invalid_incorrect};

struct CaseQuadrant {
  bool rationale_valid = false;
  bool answer_correct = false;
  CaseThresholds thresholds;
  Quadrant quadrant() const;
};

// rationale_valid: ROUGE-L(pred, gold rationale) >= thresholds.rationale.
// answer_correct: normalised exact match, or ROUGE-L >= thresholds.answer.
CaseQuadrant classify_case(const TripletRecord& gold, std::string_view predicted_rationale,
                           std::string_view predicted_answer, const CaseThresholds& thresholds);

struct RecordScores {
  std::string id;
  Split split = Split::train;
  double rationale_bleu = 0.0;
  double rationale_similarity = 0.0;
  double rationale_rouge = 0.0;
  double answer_bleu = 0.0;
  double answer_similarity = 0.0;
  double answer_rouge = 0.0;
  double accuracy = 0.0;  // 1 when the normalised answer matches exactly
  CaseQuadrant quadrant;
};

struct EvalReport {
  std::vector<RecordScores> records;
  RecordScores mean;  // column means; id "mean"
  std::array<std::size_t, 4> quadrant_counts{};
};

struct EvalOptions {
  CaseThresholds thresholds;
  std::size_t bleu_order = 4;
};

// Predictions are matched to records by id; a record without a prediction is an error.
EvalReport evaluate(std::span<const TripletRecord> records, std::span<const Prediction> predictions,
                    const EvalOptions& options = {});

// Per-record rows followed by a `mean` row.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
// `quadrant,count` rows in kAllQuadrants order.
void write_quadrant_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace mmcot
