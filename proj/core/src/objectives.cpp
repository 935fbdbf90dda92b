#include "mmcot/objectives.hpp"

#include <cmath>
#include <numeric>

#include "mmcot/error.hpp"

namespace mmcot {

SentenceEmbedding sentence_embed(const Tensor& states, Modality source, std::size_t batch_index) {
  if (states.rank() != 2 || states.shape()[0] == 0) {
    throw DimensionError("sentence_embed: need at least one position, got " + shape_to_string(states.shape()));
  }
  Tensor pooled = mean_rows(states);
  double sq = 0.0;
  for (double v : pooled.data()) sq += v * v;
  if (sq == 0.0) throw DegenerateEmbeddingError("sentence_embed: pooled vector is zero");
  return SentenceEmbedding{l2_normalize(pooled), source, batch_index};
}

SimilarityMatrix similarity_matrix(std::span<const SentenceEmbedding> image,
                                   std::span<const SentenceEmbedding> text, double tau) {
  if (!(tau > 0.0)) throw ParameterError("similarity_matrix: temperature must be > 0");
  if (image.empty() || image.size() != text.size()) {
    throw DimensionError("similarity_matrix: batch sizes " + std::to_string(image.size()) + " and " +
                         std::to_string(text.size()));
  }
  std::vector<Tensor> img_rows, txt_rows;
  for (const auto& e : image) img_rows.push_back(e.vector);
  for (const auto& e : text) txt_rows.push_back(e.vector);
  Tensor img = stack_rows(img_rows);
  Tensor txt = stack_rows(txt_rows);
  if (img.shape()[1] != txt.shape()[1]) throw DimensionError("similarity_matrix: embedding widths differ");
  return SimilarityMatrix{scale(matmul(img, transpose(txt)), 1.0 / tau), tau};
}

namespace {

Tensor diagonal_nll(const Tensor& logits) {
  if (logits.rank() != 2 || logits.shape()[0] != logits.shape()[1] || logits.shape()[0] == 0) {
    throw DimensionError("contrastive_loss: expected a non-empty square matrix, got " +
                         shape_to_string(logits.shape()));
  }
  std::vector<std::size_t> diag(logits.shape()[0]);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  // skip index B never matches a diagonal position
  return scale(pick_mean(log_softmax_rows(logits), diag, diag.size()), -1.0);
}

}  // namespace

Tensor contrastive_loss(const SimilarityMatrix& s) { return diagonal_nll(s.logits); }

Tensor symmetric_contrastive_loss(const SimilarityMatrix& s) {
  return scale(add(diagonal_nll(s.logits), diagonal_nll(transpose(s.logits))), 0.5);
}

Tensor token_cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId pad_id) {
  if (logits.rank() != 2 || logits.shape()[0] != targets.size()) {
    throw DimensionError("token_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_to_string(logits.shape()));
  }
  const std::size_t vocab = logits.shape()[1];
  bool any = false;
  for (TokenId t : targets) {
    if (t == pad_id) continue;
    any = true;
    if (t >= vocab) {
      throw DimensionError("token_cross_entropy: target " + std::to_string(t) + " outside vocabulary of " +
                           std::to_string(vocab));
    }
  }
  if (!any) throw DegenerateBatchError("token_cross_entropy: every position is padding");
  return scale(pick_mean(log_softmax_rows(logits), targets, pad_id), -1.0);
}

LossBreakdown total_loss(double ce, double con, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("total_loss: lambda must be >= 0");
  return LossBreakdown{ce, con, lambda, ce + lambda * con};
}

Tensor combine_losses(const Tensor& ce, const Tensor& con, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("combine_losses: lambda must be >= 0");
  if (lambda == 0.0) return ce;
  return add(ce, scale(con, lambda));
}

}  // namespace mmcot
