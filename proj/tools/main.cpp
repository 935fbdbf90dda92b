#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmcot/config.hpp"
#include "mmcot/curation.hpp"
#include "mmcot/dataset.hpp"
#include "mmcot/evaluation.hpp"
#include "mmcot/synthetic.hpp"
#include "mmcot/textmetrics.hpp"
#include "mmcot/training.hpp"
#include "plots.hpp"

namespace fs = std::filesystem;
using namespace mmcot;

namespace {

constexpr int kExitError = 1;
constexpr int kExitPartial = 3;  // curate finished but some records failed

struct Common {
  std::string config;
  std::string corpus;
  std::string checkpoint;
  std::string out;
  std::string features;
  std::string split = "test";
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

TrainConfig load_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  cfg.apply_environment();
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

std::vector<TripletRecord> load_records(const Common& c) {
  auto loaded = load_corpus(c.corpus, c.strict);
  for (const auto& e : loaded.errors) std::cerr << c.corpus << ":" << e.line << ": skipped: " << e.message << "\n";
  return std::move(loaded.records);
}

std::vector<TripletRecord> select_split(std::vector<TripletRecord> records, const std::string& split) {
  if (split == "all") return records;
  const auto wanted = parse_split(split);
  if (!wanted) throw CLI::ValidationError("--split", "expected train, val, test or all");
  std::erase_if(records, [&](const TripletRecord& r) { return r.split != *wanted; });
  if (records.empty()) throw std::runtime_error("split '" + split + "' has no records");
  return records;
}

fs::path features_dir(const Common& c) {
  return c.features.empty() ? fs::path(c.corpus).parent_path() : fs::path(c.features);
}

fs::path prepare_out(const std::string& out) {
  fs::create_directories(out);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// ---------------------------------------------------------------------------

int run_train(const Common& c) {
  const TrainConfig cfg = load_config(c);
  const auto records = load_records(c);
  const fs::path out = prepare_out(c.out);
  FeatureStore store(features_dir(c), cfg.d);
  const auto result = train(records, store, cfg);
  save_checkpoint(out, result.pipeline);
  for (const auto& log : result.logs) {
    const std::string stage(to_string(log.stage));
    write_loss_csv(out / ("loss_" + stage + ".csv"), log.steps);
    auto v = open_out(out / ("validation_" + stage + ".csv"));
    v << "step,ce,con,total\n";
    v.precision(17);
    for (const auto& e : log.validation) v << e.step << ',' << e.loss.ce << ',' << e.loss.con << ',' << e.loss.total << '\n';
    std::cerr << stage << ": " << log.steps.size() << " steps" << (log.early_stopped ? " (early stop)" : "") << "\n";
  }
  return 0;
}

int run_eval(const Common& c, const std::string& predictions_path, bool oracle, std::size_t threads) {
  const auto records = select_split(load_records(c), c.split);
  const fs::path out = prepare_out(c.out);
  EvalOptions options;
  std::vector<Prediction> predictions;
  if (oracle) {
    predictions = oracle_predictions(records);
  } else if (!predictions_path.empty()) {
    predictions = load_predictions(predictions_path);
  } else {
    if (c.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required unless --predictions or --oracle");
    const auto pipeline = load_checkpoint(c.checkpoint);
    FeatureStore store(features_dir(c), pipeline.config.d);
    predictions = predict(pipeline, records, store, threads == 0 ? pipeline.config.threads : threads);
  }
  if (!c.checkpoint.empty() || !c.config.empty()) {
    const TrainConfig cfg = c.config.empty() ? load_checkpoint(c.checkpoint).config : load_config(c);
    options.thresholds = {cfg.threshold_rationale, cfg.threshold_answer};
    options.bleu_order = cfg.bleu_order;
  }
  save_predictions(out / "predictions.jsonl", predictions);
  const auto report = evaluate(records, predictions, options);
  write_report_csv(out / "report.csv", report);
  write_quadrant_csv(out / "quadrants.csv", report);
  std::cerr << "evaluated " << report.records.size() << " records; accuracy " << report.mean.accuracy << "\n";
  return 0;
}

void histogram_outputs(const fs::path& out, const std::string& field, const LengthHistogram& h, std::ostream& csv) {
  const auto logs = h.log_counts();
  tools::BarChart raw{field + " length", "characters", "count", {}, {}};
  tools::BarChart log{field + " length (log)", "characters", "log(1 + count)", {}, {}};
  const std::size_t label_every = std::max<std::size_t>(1, h.counts.size() / 10);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    csv << field << ',' << i * h.bin_width << ',' << h.counts[i] << ',' << logs[i] << '\n';
    const std::string label = i % label_every == 0 ? std::to_string(i * h.bin_width) : "";
    raw.labels.push_back(label);
    log.labels.push_back(label);
    raw.values.push_back(static_cast<double>(h.counts[i]));
    log.values.push_back(logs[i]);
  }
  tools::write_svg(out / ("hist_" + field + ".svg"), raw);
  tools::write_svg(out / ("hist_" + field + "_log.svg"), log);
}

int run_analyze(const Common& c, std::size_t bin_width) {
  const auto records = load_records(c);
  const fs::path out = prepare_out(c.out);
  const auto stats = split_stats(records, bin_width);

  auto counts = open_out(out / "split_counts.csv");
  counts << "split,count\n";
  for (Split s : kAllSplits) counts << to_string(s) << ',' << stats.count(s) << '\n';
  counts << "total," << stats.total << '\n';

  auto hist = open_out(out / "length_histograms.csv");
  hist.precision(17);
  hist << "field,bin_start,count,log_count\n";
  histogram_outputs(out, "question", stats.question, hist);
  histogram_outputs(out, "rationale", stats.rationale, hist);
  histogram_outputs(out, "answer", stats.answer, hist);

  const auto types = question_type_distribution(records);
  auto qt = open_out(out / "question_types.csv");
  qt << "type,count\n";
  tools::BarChart chart{"question types", "type", "count", {}, {}};
  for (std::size_t i = 0; i < types.size(); ++i) {
    const std::string name(to_string(static_cast<QuestionType>(i)));
    qt << name << ',' << types[i] << '\n';
    chart.labels.push_back(name);
    chart.values.push_back(static_cast<double>(types[i]));
  }
  tools::write_svg(out / "question_types.svg", chart);
  std::cerr << "train " << stats.count(Split::train) << ", val " << stats.count(Split::val) << ", test "
            << stats.count(Split::test) << ", total " << stats.total << "\n";
  return 0;
}

struct CurateArgs {
  std::string sources;
  std::string out;
  std::string journal;
  std::string failures;
  std::string generator = "echo";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/generate";
  std::size_t concurrency = 4;
  std::size_t retries = 3;
  long timeout_ms = 30000;
  std::vector<std::string> params;
};

int run_curate(const CurateArgs& a) {
  curation::CollectOptions options;
  options.concurrency = a.concurrency;
  options.max_retries = a.retries;
  options.timeout = std::chrono::milliseconds(a.timeout_ms);
  if (!a.journal.empty()) options.journal = fs::path(a.journal);
  for (const auto& kv : a.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--param", "expected key=value, got " + kv);
    options.generation_params[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  std::unique_ptr<curation::GeneratorClient> client;
  if (a.generator == "echo") {
    client = std::make_unique<curation::EchoGeneratorClient>();
  } else {
    client = std::make_unique<curation::HttpGeneratorClient>(a.host, a.port, a.path);
  }
  for (const auto& p : {fs::path(a.out), fs::path(a.journal)}) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  }
  const auto sources = curation::load_sources(a.sources);
  const auto result = curation::collect_rationales(sources, *client, options);
  save_corpus(a.out, result.records);
  const fs::path failures = a.failures.empty() ? fs::path(a.out).replace_extension(".failures.csv") : fs::path(a.failures);
  auto f = open_out(failures);
  f << "id,attempts,reason\n";
  for (const auto& x : result.failures) f << csv_field(x.id) << ',' << x.attempts << ',' << csv_field(x.reason) << '\n';
  std::cerr << result.records.size() << " triplets (" << result.resumed << " resumed), " << result.failures.size()
            << " failures, " << result.client_calls << " generator calls\n";
  return result.failures.empty() ? 0 : kExitPartial;
}

int run_review(const Common& c, const std::string& decisions) {
  auto records = load_records(c);
  const auto parsed = curation::load_review_decisions(decisions);
  const auto accepted = curation::apply_review(records, parsed);
  if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_corpus(c.out, records);
  std::cerr << accepted.size() << " of " << records.size() << " accepted\n";
  return 0;
}

int run_support_rate(const Common& c) {
  const auto records = load_records(c);
  const auto rates = metrics::support_rate(records, metrics::TokenContainmentScorer{});
  if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  auto out = open_out(c.out);
  out.precision(17);
  out << "split,supportive,total,rate\n";
  std::size_t s = 0, t = 0;
  for (const auto& r : rates) {
    out << to_string(r.split) << ',' << r.supportive << ',' << r.total << ',' << r.rate() << '\n';
    s += r.supportive;
    t += r.total;
  }
  out << "all," << s << ',' << t << ',' << static_cast<double>(s) / static_cast<double>(t) << '\n';
  return 0;
}

int run_case_study(const Common& c, const std::string& predictions_path, std::size_t threads) {
  const auto records = select_split(load_records(c), c.split);
  std::vector<Prediction> predictions;
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_config(c);
  if (!predictions_path.empty()) {
    predictions = load_predictions(predictions_path);
  } else {
    if (c.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "required unless --predictions");
    const auto pipeline = load_checkpoint(c.checkpoint);
    if (c.config.empty()) cfg = pipeline.config;
    FeatureStore store(features_dir(c), pipeline.config.d);
    predictions = predict(pipeline, records, store, threads == 0 ? pipeline.config.threads : threads);
  }
  EvalOptions options;
  options.thresholds = {cfg.threshold_rationale, cfg.threshold_answer};
  options.bleu_order = cfg.bleu_order;
  const auto report = evaluate(records, predictions, options);

  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;
  if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  auto out = open_out(c.out);
  out.precision(6);
  out << "id,quadrant,rationale_rouge,answer_rouge,question,gold_rationale,pred_rationale,gold_answer,pred_answer\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& s = report.records[i];
    const Prediction& p = *by_id.at(r.id);
    out << csv_field(r.id) << ',' << to_string(s.quadrant.quadrant()) << ',' << s.rationale_rouge << ','
        << s.answer_rouge << ',' << csv_field(r.question) << ',' << csv_field(r.rationale) << ','
        << csv_field(p.rationale) << ',' << csv_field(r.answer) << ',' << csv_field(p.answer) << '\n';
  }
  for (Quadrant q : kAllQuadrants)
    std::cerr << to_string(q) << ": " << report.quadrant_counts[static_cast<std::size_t>(q)] << "\n";
  return 0;
}

int run_synth(const std::string& kind, const std::string& out, std::uint64_t seed) {
  SyntheticCorpus corpus;
  if (kind == "overfit") {
    OverfitOptions o;
    o.seed = seed;
    corpus = make_overfit_corpus(o);
  } else {
    GroundedOptions o;
    o.seed = seed;
    corpus = make_image_grounded_corpus(o);
  }
  corpus.write(out);
  std::cerr << "wrote " << corpus.records.size() << " records to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage multimodal chain-of-thought toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mmcot 0.1.0");

  Common c;
  std::uint64_t seed_value = 0;
  auto add_seed = [&](CLI::App* sub) {
    return sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { c.seed = s; },
                                                   "Override the configured seed");
  };
  auto add_corpus = [&](CLI::App* sub) {
    sub->add_option("--corpus", c.corpus, "Triplet corpus (JSONL)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--strict", c.strict, "Abort on the first malformed record");
  };

  auto* train_cmd = app.add_subcommand("train", "Train both stages and write a checkpoint");
  add_corpus(train_cmd);
  train_cmd->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", c.out, "Checkpoint directory")->required();
  train_cmd->add_option("--features", c.features, "Base directory for image_ref (default: corpus directory)")
      ->check(CLI::ExistingDirectory);
  add_seed(train_cmd);

  std::string predictions;
  bool oracle = false;
  std::size_t threads = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Score a split; writes report.csv, quadrants.csv, predictions.jsonl");
  add_corpus(eval_cmd);
  eval_cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint directory")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--config", c.config, "Overrides thresholds from the checkpoint config")->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", c.split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--out", c.out, "Output directory")->required();
  eval_cmd->add_option("--features", c.features, "Base directory for image_ref")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--predictions", predictions, "Score these predictions instead of running the model")
      ->check(CLI::ExistingFile);
  eval_cmd->add_flag("--oracle", oracle, "Use gold values as predictions");
  eval_cmd->add_option("--threads", threads, "Prediction workers (0: from config)");
  add_seed(eval_cmd);

  std::size_t bin_width = 10;
  auto* analyze_cmd = app.add_subcommand("analyze", "Split counts, length histograms, question types, SVG plots");
  add_corpus(analyze_cmd);
  analyze_cmd->add_option("--out", c.out, "Output directory")->required();
  analyze_cmd->add_option("--bin-width", bin_width, "Histogram bin width in characters")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  CurateArgs ca;
  auto* curate_cmd = app.add_subcommand("curate", "Collect rationales from a generator for source records");
  curate_cmd->add_option("--sources", ca.sources, "Source records (JSONL)")->required()->check(CLI::ExistingFile);
  curate_cmd->add_option("--out", ca.out, "Output corpus (JSONL)")->required();
  curate_cmd->add_option("--journal", ca.journal, "Resume journal");
  curate_cmd->add_option("--failures", ca.failures, "Failure log CSV (default: <out>.failures.csv)");
  curate_cmd->add_option("--generator", ca.generator, "echo or http")
      ->capture_default_str()
      ->check(CLI::IsMember({"echo", "http"}));
  curate_cmd->add_option("--host", ca.host)->capture_default_str();
  curate_cmd->add_option("--port", ca.port)->capture_default_str();
  curate_cmd->add_option("--path", ca.path)->capture_default_str();
  curate_cmd->add_option("--concurrency", ca.concurrency)->capture_default_str()->check(CLI::PositiveNumber);
  curate_cmd->add_option("--retries", ca.retries, "Attempts per record")->capture_default_str()->check(CLI::PositiveNumber);
  curate_cmd->add_option("--timeout-ms", ca.timeout_ms)->capture_default_str()->check(CLI::PositiveNumber);
  curate_cmd->add_option("--param", ca.params, "Generation parameter key=value (repeatable)");

  std::string decisions;
  auto* review_cmd = app.add_subcommand("review", "Apply id,decision review CSV to a corpus");
  add_corpus(review_cmd);
  review_cmd->add_option("--decisions", decisions, "CSV with id,decision (accept|reject)")
      ->required()
      ->check(CLI::ExistingFile);
  review_cmd->add_option("--out", c.out, "Reviewed corpus (JSONL)")->required();

  auto* support_cmd = app.add_subcommand("support-rate", "Token-containment support rate per split");
  add_corpus(support_cmd);
  support_cmd->add_option("--out", c.out, "Output CSV")->required();

  auto* case_cmd = app.add_subcommand("case-study", "Per-record rationale/answer quadrant table");
  add_corpus(case_cmd);
  case_cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint directory")->check(CLI::ExistingDirectory);
  case_cmd->add_option("--predictions", predictions, "Predictions JSONL")->check(CLI::ExistingFile);
  case_cmd->add_option("--config", c.config, "Thresholds")->check(CLI::ExistingFile);
  case_cmd->add_option("--split", c.split, "train, val, test or all")->capture_default_str();
  case_cmd->add_option("--features", c.features, "Base directory for image_ref")->check(CLI::ExistingDirectory);
  case_cmd->add_option("--threads", threads, "Prediction workers (0: from config)");
  case_cmd->add_option("--out", c.out, "Output CSV")->required();

  std::string kind = "grounded";
  auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic corpus with image features");
  synth_cmd->add_option("--kind", kind, "overfit or grounded")
      ->capture_default_str()
      ->check(CLI::IsMember({"overfit", "grounded"}));
  synth_cmd->add_option("--out", c.out, "Output directory")->required();
  synth_cmd->add_option("--seed", seed_value, "Generator seed")->default_val(7);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cerr, std::cerr);
  }

  try {
    if (train_cmd->parsed()) return run_train(c);
    if (eval_cmd->parsed()) return run_eval(c, predictions, oracle, threads);
    if (analyze_cmd->parsed()) return run_analyze(c, bin_width);
    if (curate_cmd->parsed()) return run_curate(ca);
    if (review_cmd->parsed()) return run_review(c, decisions);
    if (support_cmd->parsed()) return run_support_rate(c);
    if (case_cmd->parsed()) return run_case_study(c, predictions, threads);
    if (synth_cmd->parsed()) return run_synth(kind, c.out, seed_value);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "mmcot: " << e.what() << "\n";
    return e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << "mmcot: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
