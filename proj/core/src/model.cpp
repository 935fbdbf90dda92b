#include "mmcot/model.hpp"

#include <algorithm>
#include <numeric>

#include "mmcot/error.hpp"
#include "mmcot/vocab.hpp"

namespace mmcot {

FeedForward FeedForward::init(std::size_t width, std::size_t hidden, double scale, std::mt19937_64& rng) {
  FeedForward f;
  f.in_weight = Tensor::uniform({width, hidden}, -scale, scale, rng, true);
  f.in_bias = Tensor::zeros({hidden}, true);
  f.out_weight = Tensor::uniform({hidden, width}, -scale, scale, rng, true);
  f.out_bias = Tensor::zeros({width}, true);
  return f;
}

Tensor FeedForward::apply(const Tensor& x) const {
  Tensor hidden = relu(add_row_bias(matmul(x, in_weight), in_bias));
  return add_row_bias(matmul(hidden, out_weight), out_bias);
}

void FeedForward::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".in_weight", in_weight);
  out.emplace_back(prefix + ".in_bias", in_bias);
  out.emplace_back(prefix + ".out_weight", out_weight);
  out.emplace_back(prefix + ".out_bias", out_bias);
}

ToyModel ToyModel::init(const ModelConfig& config, std::mt19937_64& rng) {
  if (config.vocab_size <= Vocabulary::kReserved) throw ParameterError("model: vocabulary too small");
  if (config.width == 0 || config.ff_width == 0 || config.max_positions == 0) {
    throw ParameterError("model: widths and positional cap must be >= 1");
  }
  const double s = config.init_scale;
  ToyModel m;
  m.config = config;
  m.token_embedding = Tensor::uniform({config.vocab_size, config.width}, -s, s, rng, true);
  m.positions = Tensor::uniform({config.max_positions, config.width}, -s, s, rng, true);
  m.encoder.self_attention = MhaParams::init(config.width, config.heads, s, rng);
  m.encoder.feed_forward = FeedForward::init(config.width, config.ff_width, s, rng);
  m.fusion = FusionParams::init(config.width, config.hops, config.heads, config.gate_bias, rng, s);
  m.decoder.cross_attention = MhaParams::init(config.width, config.heads, s, rng);
  m.decoder.feed_forward = FeedForward::init(config.width, config.ff_width, s, rng);
  m.decoder.out_weight = Tensor::uniform({config.width, config.vocab_size}, -s, s, rng, true);
  m.decoder.out_bias = Tensor::zeros({config.vocab_size}, true);
  return m;
}

std::vector<NamedTensor> ToyModel::named_parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("embedding.tokens", token_embedding);
  out.emplace_back("embedding.positions", positions);
  encoder.self_attention.append_named("encoder.self_attention", out);
  encoder.feed_forward.append_named("encoder.feed_forward", out);
  for (auto& p : fusion.named_parameters("fusion")) out.push_back(std::move(p));
  decoder.cross_attention.append_named("decoder.cross_attention", out);
  decoder.feed_forward.append_named("decoder.feed_forward", out);
  out.emplace_back("decoder.out_weight", decoder.out_weight);
  out.emplace_back("decoder.out_bias", decoder.out_bias);
  return out;
}

std::vector<Tensor> ToyModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void ToyModel::load_parameters(const std::vector<NamedTensor>& values) const {
  assign_parameters(named_parameters(), values);
}

std::string_view to_string(Stage s) { return s == Stage::rationale ? "rationale" : "answer"; }

StageInput build_stage_input(Stage stage, std::span<const TokenId> question, std::span<const TokenId> rationale,
                             const Tensor& image) {
  StageInput in;
  in.stage = stage;
  in.image = image;
  in.tokens.assign(question.begin(), question.end());
  if (stage == Stage::answer) {
    in.tokens.push_back(Vocabulary::kSep);
    in.tokens.insert(in.tokens.end(), rationale.begin(), rationale.end());
  }
  return in;
}

namespace {

std::vector<std::size_t> position_ids(std::size_t first, std::size_t count, std::size_t cap) {
  if (first + count > cap) {
    throw DimensionError("sequence of " + std::to_string(first + count) + " positions exceeds the cap of " +
                         std::to_string(cap));
  }
  std::vector<std::size_t> ids(count);
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

Tensor embed(const ToyModel& model, std::span<const TokenId> tokens, std::size_t first_position) {
  for (TokenId t : tokens) {
    if (t >= model.config.vocab_size) throw DimensionError("unknown token id " + std::to_string(t));
  }
  const auto pos = position_ids(first_position, tokens.size(), model.config.max_positions);
  return add(gather_rows(model.token_embedding, tokens), gather_rows(model.positions, pos));
}

}  // namespace

Tensor encode_text(std::span<const TokenId> tokens, const ToyModel& model) {
  if (tokens.empty()) throw DimensionError("encode_text: empty token list");
  Tensor x = embed(model, tokens, 0);
  Tensor h = add(x, mha(x, x, x, model.encoder.self_attention).output);
  return add(h, model.encoder.feed_forward.apply(h));
}

EncodedInput encode_input(std::span<const TokenId> tokens, const Tensor& image, const ToyModel& model) {
  if (image.requires_grad()) throw ContractError("image features must be frozen");
  EncodedInput out;
  out.text = encode_text(tokens, model);
  FusionResult fused = multi_hop(out.text, image, model.fusion);
  out.memory = fused.state;
  out.trace = std::move(fused.trace);
  return out;
}

DecoderPass decode_step_batch(const ToyModel& model, const Tensor& memory, std::span<const TokenId> decoder_inputs,
                              std::size_t first_position) {
  Tensor x = embed(model, decoder_inputs, first_position);
  Tensor h = add(x, mha(x, memory, memory, model.decoder.cross_attention).output);
  Tensor states = add(h, model.decoder.feed_forward.apply(h));
  Tensor logits = add_row_bias(matmul(states, model.decoder.out_weight), model.decoder.out_bias);
  return DecoderPass{states, logits};
}

TeacherForced teacher_forced(const ToyModel& model, const StageInput& input, std::span<const TokenId> output) {
  TeacherForced tf;
  tf.encoded = encode_input(input.tokens, input.image, model);
  std::vector<TokenId> decoder_inputs{Vocabulary::kBos};
  decoder_inputs.insert(decoder_inputs.end(), output.begin(), output.end());
  tf.targets.assign(output.begin(), output.end());
  tf.targets.push_back(Vocabulary::kEos);
  tf.decoder = decode_step_batch(model, tf.encoded.memory, decoder_inputs);
  return tf;
}

DecodeResult greedy_decode(const ToyModel& model, const StageInput& input, const DecodeConfig& config) {
  DecodeResult result;
  if (config.max_length == 0) return result;
  std::size_t limit = config.max_length;
  // One slot is needed for the <eos> step.
  if (limit + 1 > model.config.max_positions) {
    limit = model.config.max_positions - 1;
    result.truncated = true;
  }
  std::span<const TokenId> tokens = input.tokens;
  if (tokens.size() > model.config.max_positions) {
    tokens = tokens.first(model.config.max_positions);
    result.truncated = true;
  }
  const EncodedInput encoded = encode_input(tokens, input.image, model);
  TokenId previous = Vocabulary::kBos;
  for (std::size_t pos = 0; pos <= limit; ++pos) {
    const TokenId step_input[] = {previous};
    DecoderPass pass = decode_step_batch(model, encoded.memory, step_input, pos);
    const auto logits = pass.logits.data();
    const auto best = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == Vocabulary::kEos) return result;
    if (pos == limit) break;
    result.tokens.push_back(best);
    previous = best;
  }
  result.truncated = true;
  return result;
}

DecodeResult stage1_generate_rationale(const ToyModel& model, std::span<const TokenId> question, const Tensor& image,
                                       const DecodeConfig& config) {
  return greedy_decode(model, build_stage_input(Stage::rationale, question, {}, image), config);
}

DecodeResult stage2_infer_answer(const ToyModel& model, std::span<const TokenId> question,
                                 std::span<const TokenId> rationale, const Tensor& image, const DecodeConfig& config) {
  return greedy_decode(model, build_stage_input(Stage::answer, question, rationale, image), config);
}

Tensor load_image_features(const std::filesystem::path& path, std::size_t width) {
  Tensor t = load_tensor(path);
  if (t.rank() != 2 || t.shape()[0] == 0) {
    throw FormatError(path.string() + ": image features must be a non-empty S x d matrix");
  }
  if (t.shape()[1] != width) {
    throw DimensionError(path.string() + ": feature width " + std::to_string(t.shape()[1]) + " != model width " +
                         std::to_string(width));
  }
  return t;  // read_tensor yields a non-trainable leaf
}

}  // namespace mmcot
