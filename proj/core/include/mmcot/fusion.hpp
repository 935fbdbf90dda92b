#pragma once

// Multi-hop gated cross-modal attention.
//
// Each hop attends from the current text states onto the frozen image
// features and blends the result back with a sigmoid gate:
//
//   A_k = MHA_k(H_{k-1}, H_img, H_img)
//   G_k = sigmoid([H_{k-1}, A_k] W_k + b_k)
//   H_k = (1 - G_k) * H_{k-1} + G_k * A_k
//
// With zero hops the text states pass through untouched.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmcot/tensor.hpp"
#include "mmcot/tensor_io.hpp"

namespace mmcot {

// Per-head projections (d x d_h each) plus the shared output projection (h*d_h x d).
struct MhaParams {
  std::vector<Tensor> query;
  std::vector<Tensor> key;
  std::vector<Tensor> value;
  Tensor output;

  std::size_t heads() const { return query.size(); }
  std::size_t width() const;
  std::size_t head_width() const;

  // Uniform(-scale, scale) initialisation. width must be divisible by heads.
  static MhaParams init(std::size_t width, std::size_t heads, double scale, std::mt19937_64& rng);
  void validate() const;
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct GateParams {
  Tensor weight;               // 2d x d
  std::optional<Tensor> bias;  // d

  static GateParams init(std::size_t width, bool with_bias, double scale, std::mt19937_64& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct HopParams {
  MhaParams attention;
  GateParams gate;
};

struct FusionParams {
  std::size_t width = 0;
  std::vector<HopParams> hops;

  std::size_t hop_count() const { return hops.size(); }

  static FusionParams init(std::size_t width, std::size_t hops, std::size_t heads, bool gate_bias,
                           std::mt19937_64& rng, double scale = 0.1);
  void validate() const;
  std::vector<NamedTensor> named_parameters(const std::string& prefix = "fusion") const;
  std::vector<Tensor> parameters() const;
};

struct MhaResult {
  Tensor output;                // T x d, after output projection
  Tensor pre_projection;        // T x (h*d_h), concatenated heads
  std::vector<Tensor> weights;  // one T x S matrix per head
};

MhaResult mha(const Tensor& query, const Tensor& key, const Tensor& value, const MhaParams& params);

Tensor gate(const Tensor& h_prev, const Tensor& attended, const GateParams& params);

struct HopTrace {
  std::vector<Tensor> attention;  // per head, T x S
  Tensor attended;                // A_k
  Tensor gate;                    // G_k
  Tensor state;                   // H_k
};

struct FusionTrace {
  std::vector<HopTrace> hops;
};

struct HopResult {
  Tensor state;
  HopTrace trace;
};

HopResult hop(const Tensor& h_prev, const Tensor& image, const HopParams& params);

struct FusionResult {
  Tensor state;
  FusionTrace trace;
};

FusionResult multi_hop(const Tensor& text, const Tensor& image, const FusionParams& params);

}  // namespace mmcot
