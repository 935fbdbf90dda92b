#include "mmcot/evaluation.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "mmcot/error.hpp"
#include "mmcot/tensor_io.hpp"
#include "mmcot/textmetrics.hpp"

namespace mmcot {

namespace {

Prediction predict_one(const TrainedPipeline& pipeline, const TripletRecord& record, const Tensor& image) {
  const DecodeConfig decode{pipeline.config.max_decode};
  const auto question = pipeline.vocab.encode(record.question);
  const DecodeResult rationale = stage1_generate_rationale(*pipeline.rationale_model, question, image, decode);
  const DecodeResult answer = stage2_infer_answer(*pipeline.answer_model, question, rationale.tokens, image, decode);
  return Prediction{record.id, pipeline.vocab.decode(rationale.tokens), pipeline.vocab.decode(answer.tokens),
                    rationale.truncated || answer.truncated};
}

}  // namespace

std::vector<Prediction> predict(const TrainedPipeline& pipeline, std::span<const TripletRecord> records,
                                FeatureStore& features, std::size_t threads) {
  std::vector<const Tensor*> images;
  images.reserve(records.size());
  for (const auto& r : records) images.push_back(&features.get(r.image_ref));

  std::vector<Prediction> out(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      out[i] = predict_one(pipeline, records[i], *images[i]);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, records.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return out;
}

void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["pred_rationale"] = p.rationale;
    j["pred_answer"] = p.answer;
    out << j.dump() << '\n';
  }
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(Prediction{j.at("id").get<std::string>(), j.at("pred_rationale").get<std::string>(),
                               j.at("pred_answer").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Prediction> oracle_predictions(std::span<const TripletRecord> records) {
  std::vector<Prediction> out;
  for (const auto& r : records) out.push_back(Prediction{r.id, r.rationale, r.answer});
  return out;
}

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::valid_correct: return "valid_rationale_correct_answer";
    case Quadrant::valid_incorrect: return "valid_rationale_incorrect_answer";
    case Quadrant::invalid_correct: return "invalid_rationale_correct_answer";
    case Quadrant::invalid_incorrect: return "invalid_rationale_incorrect_answer";
  }
  return "";
}

Quadrant CaseQuadrant::quadrant() const {
  if (rationale_valid) return answer_correct ? Quadrant::valid_correct : Quadrant::valid_incorrect;
  return answer_correct ? Quadrant::invalid_correct : Quadrant::invalid_incorrect;
}

CaseQuadrant classify_case(const TripletRecord& gold, std::string_view predicted_rationale,
                           std::string_view predicted_answer, const CaseThresholds& thresholds) {
  using namespace metrics;
  CaseQuadrant c;
  c.thresholds = thresholds;
  const auto rationale_rouge = rouge_l(tokenize(normalize_text(predicted_rationale)),
                                       tokenize(normalize_text(gold.rationale)));
  c.rationale_valid = rationale_rouge.value >= thresholds.rationale;
  const std::string pa = normalize_text(predicted_answer);
  const std::string ga = normalize_text(gold.answer);
  c.answer_correct = pa == ga || rouge_l(tokenize(pa), tokenize(ga)).value >= thresholds.answer;
  return c;
}

EvalReport evaluate(std::span<const TripletRecord> records, std::span<const Prediction> predictions,
                    const EvalOptions& options) {
  using namespace metrics;
  if (records.empty()) throw ContractError("evaluate: no records");
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.id, &p);

  EvalReport report;
  BleuOptions bleu_options;
  bleu_options.max_order = options.bleu_order;
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw ContractError("evaluate: no prediction for record " + r.id);
    const Prediction& p = *it->second;
    const auto pr = tokenize(normalize_text(p.rationale));
    const auto gr = tokenize(normalize_text(r.rationale));
    const auto pa = tokenize(normalize_text(p.answer));
    const auto ga = tokenize(normalize_text(r.answer));
    RecordScores s;
    s.id = r.id;
    s.split = r.split;
    s.rationale_bleu = bleu(pr, gr, bleu_options).value;
    s.rationale_similarity = text_similarity(p.rationale, r.rationale).value;
    s.rationale_rouge = rouge_l(pr, gr).value;
    s.answer_bleu = bleu(pa, ga, bleu_options).value;
    s.answer_similarity = text_similarity(p.answer, r.answer).value;
    s.answer_rouge = rouge_l(pa, ga).value;
    s.accuracy = normalize_text(p.answer) == normalize_text(r.answer) ? 1.0 : 0.0;
    s.quadrant = classify_case(r, p.rationale, p.answer, options.thresholds);
    ++report.quadrant_counts[static_cast<std::size_t>(s.quadrant.quadrant())];
    report.records.push_back(std::move(s));
  }

  RecordScores& m = report.mean;
  m.id = "mean";
  const double n = static_cast<double>(report.records.size());
  for (const auto& s : report.records) {
    m.rationale_bleu += s.rationale_bleu / n;
    m.rationale_similarity += s.rationale_similarity / n;
    m.rationale_rouge += s.rationale_rouge / n;
    m.answer_bleu += s.answer_bleu / n;
    m.answer_similarity += s.answer_similarity / n;
    m.answer_rouge += s.answer_rouge / n;
    m.accuracy += s.accuracy / n;
  }
  return report;
}

namespace {

void write_row(std::ostream& out, const RecordScores& s, std::string_view split, std::string_view quadrant) {
  out << s.id << ',' << split << ',' << format_double(s.rationale_bleu) << ','
      << format_double(s.rationale_similarity) << ',' << format_double(s.rationale_rouge) << ','
      << format_double(s.answer_bleu) << ',' << format_double(s.answer_similarity) << ','
      << format_double(s.answer_rouge) << ',' << format_double(s.accuracy) << ',' << quadrant << '\n';
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "id,split,rationale_bleu,rationale_similarity,rationale_rouge_l,answer_bleu,answer_similarity,"
         "answer_rouge_l,accuracy,quadrant\n";
  for (const auto& s : report.records) {
    RecordScores row = s;
    row.id = csv_field(s.id);
    write_row(out, row, to_string(s.split), to_string(s.quadrant.quadrant()));
  }
  write_row(out, report.mean, "all", "");
}

void write_quadrant_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "quadrant,count\n";
  for (Quadrant q : kAllQuadrants) out << to_string(q) << ',' << report.quadrant_counts[static_cast<std::size_t>(q)] << '\n';
}

}  // namespace mmcot
