#pragma once

// Toy encoder-decoder with the multi-hop fusion block between text encoding
// and decoding. The same architecture serves both stages:
//
//   stage 1 (rationale): question tokens            -> rationale tokens
//   stage 2 (answer):    question <sep> rationale   -> answer tokens
//
// Encoder: token + learned positional embeddings, one self-attention layer
// and a ReLU feed-forward layer, both residual. The fused text states are
// the decoder memory. Decoder: embedding of the previous token plus its
// position, one cross-attention layer onto the memory, a feed-forward layer
// and the output projection to the vocabulary. With no decoder
// self-attention every output position depends only on its own input token,
// so teacher forcing and greedy decoding see identical computations.

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmcot/fusion.hpp"
#include "mmcot/objectives.hpp"
#include "mmcot/tensor.hpp"
#include "mmcot/tensor_io.hpp"

namespace mmcot {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t width = 16;
  std::size_t heads = 2;
  std::size_t hops = 2;
  std::size_t ff_width = 32;
  std::size_t max_positions = 64;
  bool gate_bias = true;
  double init_scale = 0.1;
};

struct FeedForward {
  Tensor in_weight, in_bias, out_weight, out_bias;

  static FeedForward init(std::size_t width, std::size_t hidden, double scale, std::mt19937_64& rng);
  Tensor apply(const Tensor& x) const;
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct EncoderParams {
  MhaParams self_attention;
  FeedForward feed_forward;
};

struct DecoderParams {
  MhaParams cross_attention;
  FeedForward feed_forward;
  Tensor out_weight;  // d x V
  Tensor out_bias;    // V
};

class ToyModel {
 public:
  static ToyModel init(const ModelConfig& config, std::mt19937_64& rng);

  ModelConfig config;
  Tensor token_embedding;  // V x d
  Tensor positions;        // max_positions x d
  EncoderParams encoder;
  FusionParams fusion;
  DecoderParams decoder;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void load_parameters(const std::vector<NamedTensor>& values) const;
};

enum class Stage { rationale, answer };

std::string_view to_string(Stage s);

struct StageInput {
  Stage stage = Stage::rationale;
  std::vector<TokenId> tokens;
  Tensor image;  // S x d, never trainable
};

// Stage 1: the question; stage 2: question ++ <sep> ++ rationale.
StageInput build_stage_input(Stage stage, std::span<const TokenId> question, std::span<const TokenId> rationale,
                             const Tensor& image);

// Contextual text states H_t^0, T x d. Throws on empty input, unknown ids or
// more tokens than positional slots.
Tensor encode_text(std::span<const TokenId> tokens, const ToyModel& model);

struct EncodedInput {
  Tensor text;    // H_t^0
  Tensor memory;  // H_t^K after fusion
  FusionTrace trace;
};

EncodedInput encode_input(std::span<const TokenId> tokens, const Tensor& image, const ToyModel& model);

struct DecoderPass {
  Tensor states;  // L x d, final decoder hidden states
  Tensor logits;  // L x V
};

// decoder_inputs[i] is the token preceding output position i (starting at <bos>).
DecoderPass decode_step_batch(const ToyModel& model, const Tensor& memory, std::span<const TokenId> decoder_inputs,
                              std::size_t first_position = 0);

struct TeacherForced {
  EncodedInput encoded;
  DecoderPass decoder;
  std::vector<TokenId> targets;  // output tokens followed by <eos>
};

TeacherForced teacher_forced(const ToyModel& model, const StageInput& input, std::span<const TokenId> output);

struct DecodeConfig {
  std::size_t max_length = 48;
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // without <eos>
  bool truncated = false;       // length limit hit (or clamped to the positional cap) before <eos>
};

DecodeResult greedy_decode(const ToyModel& model, const StageInput& input, const DecodeConfig& config);

DecodeResult stage1_generate_rationale(const ToyModel& model, std::span<const TokenId> question, const Tensor& image,
                                       const DecodeConfig& config);
DecodeResult stage2_infer_answer(const ToyModel& model, std::span<const TokenId> question,
                                 std::span<const TokenId> rationale, const Tensor& image, const DecodeConfig& config);

// Reads a tensor file as frozen S x width image features.
Tensor load_image_features(const std::filesystem::path& path, std::size_t width);

}  // namespace mmcot
