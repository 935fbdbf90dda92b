#include "mmcot/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mmcot/error.hpp"
#include "mmcot/tensor_io.hpp"

namespace mmcot {

FeatureStore::FeatureStore(std::filesystem::path base_dir, std::size_t width)
    : base_dir_(std::move(base_dir)), width_(width) {}

const Tensor& FeatureStore::get(const std::string& image_ref) {
  if (auto it = cache_.find(image_ref); it != cache_.end()) return it->second;
  if (image_ref.empty()) throw FormatError("record has no image_ref");
  std::filesystem::path path(image_ref);
  if (path.is_relative()) path = base_dir_ / path;
  return cache_.emplace(image_ref, load_image_features(path, width_)).first->second;
}

void FeatureStore::put(const std::string& image_ref, Tensor features) {
  if (features.requires_grad()) throw ContractError("image features must be frozen");
  if (features.rank() != 2 || features.shape()[1] != width_) throw DimensionError("feature width mismatch");
  cache_.insert_or_assign(image_ref, std::move(features));
}

std::vector<Example> make_examples(Stage stage, std::span<const TripletRecord> records, const Vocabulary& vocab,
                                   FeatureStore& features) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto question = vocab.encode(r.question);
    const auto rationale = vocab.encode(r.rationale);
    Example ex;
    ex.input = build_stage_input(stage, question, rationale, features.get(r.image_ref));
    ex.output = stage == Stage::rationale ? rationale : vocab.encode(r.answer);
    if (ex.input.tokens.empty()) throw FormatError("record " + r.id + " has an empty question");
    out.push_back(std::move(ex));
  }
  return out;
}

bool EarlyStopping::update(double loss) {
  if (has_previous_) {
    const double scale = std::max(std::abs(previous_), 1e-12);
    if (std::abs(loss - previous_) / scale < tolerance_) {
      ++stable_;
    } else {
      stable_ = 0;
    }
  }
  previous_ = loss;
  has_previous_ = true;
  return patience_ > 0 && stable_ >= patience_;
}

BatchLoss batch_loss(const ToyModel& model, std::span<const Example* const> batch, const TrainConfig& config,
                     bool contrastive) {
  if (batch.empty()) throw TrainingError("empty batch");
  std::vector<Tensor> ces;
  std::vector<SentenceEmbedding> image_emb, text_emb;
  const bool use_con = contrastive && batch.size() >= 2;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = *batch[i];
    TeacherForced tf = teacher_forced(model, ex.input, ex.output);
    ces.push_back(token_cross_entropy(tf.decoder.logits, tf.targets, Vocabulary::kPad));
    if (use_con) {
      image_emb.push_back(sentence_embed(ex.input.image, Modality::image, i));
      text_emb.push_back(sentence_embed(tf.decoder.states, Modality::text, i));
    }
  }
  Tensor ce = ces.front();
  for (std::size_t i = 1; i < ces.size(); ++i) ce = add(ce, ces[i]);
  ce = scale(ce, 1.0 / static_cast<double>(ces.size()));

  Tensor con = Tensor::scalar(0.0);
  if (use_con) {
    SimilarityMatrix s = similarity_matrix(image_emb, text_emb, config.tau);
    con = config.symmetric_contrastive ? symmetric_contrastive_loss(s) : contrastive_loss(s);
  }
  const double lambda = use_con ? config.lambda : 0.0;
  BatchLoss out;
  out.total = combine_losses(ce, con, lambda);
  out.values = total_loss(ce.item(), con.item(), config.lambda);
  return out;
}

LossBreakdown evaluate_loss(const ToyModel& model, std::span<const Example> examples, const TrainConfig& config,
                            bool contrastive) {
  if (examples.empty()) throw TrainingError("evaluate_loss: no examples");
  double ce = 0.0, con = 0.0;
  std::size_t chunks = 0;
  for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
    const std::size_t end = std::min(examples.size(), start + config.batch_size);
    std::vector<const Example*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[i]);
    const BatchLoss b = batch_loss(model, batch, config, contrastive);
    ce += b.values.ce;
    con += b.values.con;
    ++chunks;
  }
  return total_loss(ce / static_cast<double>(chunks), con / static_cast<double>(chunks), config.lambda);
}

StageLog train_stage(ToyModel& model, std::span<const Example> train, std::span<const Example> validation,
                     const TrainConfig& config, bool contrastive, std::mt19937_64& rng, Stage stage) {
  if (train.empty()) throw TrainingError("training split is empty");
  StageLog log;
  log.stage = stage;
  std::vector<Tensor> params = model.parameters();
  EarlyStopping stopper(config.patience, config.tolerance);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t eval_every = config.eval_every == 0 ? steps_per_epoch : config.eval_every;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (config.max_steps > 0 && step >= config.max_steps) return log;
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(&train[order[i]]);
      }
      try {
        BatchLoss b = batch_loss(model, batch, config, contrastive);
        backward(b.total);
        sgd_step(params, config.lr, config.grad_clip);
        log.steps.push_back(StepLog{step, b.values});
      } catch (const NonFiniteError& e) {
        throw TrainingError(std::string(to_string(stage)) + " stage diverged at step " + std::to_string(step) +
                            ": " + e.what());
      }
      ++step;
      if (!validation.empty() && step % eval_every == 0) {
        const LossBreakdown v = evaluate_loss(model, validation, config, contrastive);
        log.validation.push_back(ValidationLog{step, v});
        if (stopper.update(v.total)) {
          log.early_stopped = true;
          return log;
        }
      }
    }
  }
  return log;
}

ModelConfig model_config_for(const TrainConfig& config, std::size_t vocab_size) {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.width = config.d;
  m.heads = config.heads;
  m.hops = config.hops;
  m.ff_width = config.ff_width;
  m.gate_bias = config.gate_bias;
  m.init_scale = config.init_scale;
  return m;
}

TrainedPipeline initialize_pipeline(const TrainConfig& config, Vocabulary vocab) {
  config.validate();
  TrainedPipeline p;
  p.config = config;
  p.vocab = std::move(vocab);
  std::mt19937_64 rng(config.seed);
  const ModelConfig mc = model_config_for(config, p.vocab.size());
  p.rationale_model = std::make_shared<ToyModel>(ToyModel::init(mc, rng));
  p.answer_model = config.share_stages ? p.rationale_model : std::make_shared<ToyModel>(ToyModel::init(mc, rng));
  return p;
}

namespace {

bool contrastive_for(const TrainConfig& config, Stage stage) {
  switch (config.contrastive_stages) {
    case ContrastiveStages::both: return true;
    case ContrastiveStages::none: return false;
    case ContrastiveStages::rationale: return stage == Stage::rationale;
    case ContrastiveStages::answer: return stage == Stage::answer;
  }
  return true;
}

}  // namespace

TrainingResult train(std::span<const TripletRecord> corpus, FeatureStore& features, const TrainConfig& config) {
  config.validate();
  std::vector<TripletRecord> train_split, val_split;
  for (const auto& r : corpus) {
    if (r.review_status == ReviewStatus::rejected) continue;
    if (r.split == Split::train) train_split.push_back(r);
    if (r.split == Split::val) val_split.push_back(r);
  }
  if (train_split.empty()) throw TrainingError("training split is empty");

  TrainingResult result;
  result.pipeline = initialize_pipeline(config, Vocabulary::build(train_split, config.max_vocab));
  TrainedPipeline& p = result.pipeline;
  // Separate stream for shuffling so initialisation is independent of epochs.
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  auto tr1 = make_examples(Stage::rationale, train_split, p.vocab, features);
  auto va1 = make_examples(Stage::rationale, val_split, p.vocab, features);
  auto tr2 = make_examples(Stage::answer, train_split, p.vocab, features);
  auto va2 = make_examples(Stage::answer, val_split, p.vocab, features);

  if (config.share_stages) {
    std::vector<Example> tr(tr1), va(va1);
    tr.insert(tr.end(), tr2.begin(), tr2.end());
    va.insert(va.end(), va2.begin(), va2.end());
    const bool con = config.contrastive_stages != ContrastiveStages::none;
    result.logs.push_back(train_stage(*p.rationale_model, tr, va, config, con, rng, Stage::rationale));
  } else {
    result.logs.push_back(
        train_stage(*p.rationale_model, tr1, va1, config, contrastive_for(config, Stage::rationale), rng, Stage::rationale));
    result.logs.push_back(
        train_stage(*p.answer_model, tr2, va2, config, contrastive_for(config, Stage::answer), rng, Stage::answer));
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainedPipeline& pipeline) {
  std::filesystem::create_directories(dir);
  pipeline.config.save(dir / "config.txt");
  pipeline.vocab.save(dir / "vocab.txt");
  save_parameters(dir / "rationale.params", pipeline.rationale_model->named_parameters());
  save_parameters(dir / "answer.params", pipeline.answer_model->named_parameters());
}

TrainedPipeline load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("checkpoint directory " + dir.string() + " not found");
  TrainConfig config = TrainConfig::load(dir / "config.txt");
  TrainedPipeline p = initialize_pipeline(config, Vocabulary::load(dir / "vocab.txt"));
  try {
    p.rationale_model->load_parameters(load_parameters(dir / "rationale.params"));
    if (!config.share_stages) p.answer_model->load_parameters(load_parameters(dir / "answer.params"));
  } catch (const std::exception& e) {
    throw FormatError("checkpoint " + dir.string() + " does not match its config: " + e.what());
  }
  return p;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const StepLog> steps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "step,ce,con,total\n";
  for (const auto& s : steps) {
    out << s.step << ',' << format_double(s.loss.ce) << ',' << format_double(s.loss.con) << ','
        << format_double(s.loss.total) << '\n';
  }
}

}  // namespace mmcot
