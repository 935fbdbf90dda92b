#include "mmcot/fusion.hpp"

#include <cmath>

#include "mmcot/error.hpp"

namespace mmcot {

std::size_t MhaParams::width() const { return output.rank() == 2 ? output.shape()[1] : 0; }

std::size_t MhaParams::head_width() const { return query.empty() ? 0 : query.front().shape()[1]; }

MhaParams MhaParams::init(std::size_t width, std::size_t heads, double scale, std::mt19937_64& rng) {
  if (heads == 0) throw ParameterError("mha: head count must be >= 1");
  if (width % heads != 0) {
    throw ParameterError("mha: width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t dh = width / heads;
  MhaParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.query.push_back(Tensor::uniform({width, dh}, -scale, scale, rng, true));
    p.key.push_back(Tensor::uniform({width, dh}, -scale, scale, rng, true));
    p.value.push_back(Tensor::uniform({width, dh}, -scale, scale, rng, true));
  }
  p.output = Tensor::uniform({heads * dh, width}, -scale, scale, rng, true);
  return p;
}

void MhaParams::validate() const {
  const std::size_t h = heads();
  if (h == 0) throw ParameterError("mha: no heads");
  if (key.size() != h || value.size() != h) throw DimensionError("mha: per-head projection counts differ");
  const std::size_t d = width();
  const std::size_t dh = head_width();
  if (h * dh != d) throw DimensionError("mha: heads * head_width != width");
  for (std::size_t i = 0; i < h; ++i) {
    for (const Tensor* w : {&query[i], &key[i], &value[i]}) {
      if (w->shape() != Shape{d, dh}) {
        throw DimensionError("mha: head projection shape " + shape_to_string(w->shape()));
      }
    }
  }
  if (output.shape() != Shape{h * dh, d}) throw DimensionError("mha: output projection shape");
}

void MhaParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t h = 0; h < heads(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    out.emplace_back(head + ".query", query[h]);
    out.emplace_back(head + ".key", key[h]);
    out.emplace_back(head + ".value", value[h]);
  }
  out.emplace_back(prefix + ".output", output);
}

GateParams GateParams::init(std::size_t width, bool with_bias, double scale, std::mt19937_64& rng) {
  GateParams g;
  g.weight = Tensor::uniform({2 * width, width}, -scale, scale, rng, true);
  if (with_bias) g.bias = Tensor::uniform({width}, -scale, scale, rng, true);
  return g;
}

void GateParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias) out.emplace_back(prefix + ".bias", *bias);
}

FusionParams FusionParams::init(std::size_t width, std::size_t hops, std::size_t heads, bool gate_bias,
                                std::mt19937_64& rng, double scale) {
  FusionParams p;
  p.width = width;
  for (std::size_t k = 0; k < hops; ++k) {
    HopParams hp{MhaParams::init(width, heads, scale, rng), GateParams::init(width, gate_bias, scale, rng)};
    p.hops.push_back(std::move(hp));
  }
  return p;
}

void FusionParams::validate() const {
  for (const auto& hp : hops) {
    hp.attention.validate();
    if (hp.attention.width() != width) throw DimensionError("fusion: attention width differs from model width");
    if (hp.gate.weight.shape() != Shape{2 * width, width}) throw DimensionError("fusion: gate weight shape");
    if (hp.gate.bias && hp.gate.bias->shape() != Shape{width}) throw DimensionError("fusion: gate bias shape");
  }
}

std::vector<NamedTensor> FusionParams::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < hops.size(); ++k) {
    const std::string hop_prefix = prefix + ".hop" + std::to_string(k);
    hops[k].attention.append_named(hop_prefix + ".mha", out);
    hops[k].gate.append_named(hop_prefix + ".gate", out);
  }
  return out;
}

std::vector<Tensor> FusionParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

MhaResult mha(const Tensor& query, const Tensor& key, const Tensor& value, const MhaParams& params) {
  params.validate();
  const std::size_t d = params.width();
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) throw DimensionError("mha: inputs must be matrices");
  if (key.shape()[0] == 0) throw DimensionError("mha: empty key set");
  if (query.shape()[1] != d || key.shape()[1] != d || value.shape()[1] != d) {
    throw DimensionError("mha: input width does not match model width " + std::to_string(d));
  }
  if (key.shape()[0] != value.shape()[0]) throw DimensionError("mha: key/value row counts differ");

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.head_width()));
  MhaResult result;
  Tensor heads_out;
  for (std::size_t h = 0; h < params.heads(); ++h) {
    Tensor q = matmul(query, params.query[h]);
    Tensor k = matmul(key, params.key[h]);
    Tensor v = matmul(value, params.value[h]);
    Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
    Tensor head = matmul(weights, v);
    heads_out = h == 0 ? head : concat_last(heads_out, head);
    result.weights.push_back(std::move(weights));
  }
  result.pre_projection = heads_out;
  result.output = matmul(heads_out, params.output);
  return result;
}

Tensor gate(const Tensor& h_prev, const Tensor& attended, const GateParams& params) {
  if (h_prev.shape() != attended.shape()) {
    throw DimensionError("gate: state/attention shapes differ " + shape_to_string(h_prev.shape()) + " vs " +
                         shape_to_string(attended.shape()));
  }
  if (params.weight.shape() != Shape{2 * h_prev.cols(), h_prev.cols()}) {
    throw DimensionError("gate: weight shape " + shape_to_string(params.weight.shape()));
  }
  Tensor logits = matmul(concat_last(h_prev, attended), params.weight);
  if (params.bias) logits = add_row_bias(logits, *params.bias);
  return sigmoid(logits);
}

HopResult hop(const Tensor& h_prev, const Tensor& image, const HopParams& params) {
  MhaResult attn = mha(h_prev, image, image, params.attention);
  Tensor g = gate(h_prev, attn.output, params.gate);
  Tensor next = add(mul(one_minus(g), h_prev), mul(g, attn.output));
  return HopResult{next, HopTrace{std::move(attn.weights), attn.output, g, next}};
}

FusionResult multi_hop(const Tensor& text, const Tensor& image, const FusionParams& params) {
  if (text.rank() != 2 || text.shape()[1] != params.width) {
    throw DimensionError("multi_hop: text width does not match fusion width " + std::to_string(params.width));
  }
  FusionResult result{text, {}};
  for (const HopParams& hp : params.hops) {
    HopResult step = hop(result.state, image, hp);
    result.state = step.state;
    result.trace.hops.push_back(std::move(step.trace));
  }
  return result;
}

}  // namespace mmcot
