#pragma once

// Training objectives: sentence-level image/text contrastive loss with
// in-batch negatives, token-level cross-entropy, and their weighted sum.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmcot/tensor.hpp"

namespace mmcot {

class DegenerateEmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { image, text };

struct SentenceEmbedding {
  Tensor vector;  // rank-1, unit norm
  Modality source = Modality::text;
  std::size_t batch_index = 0;
};

// Mean over positions followed by L2 normalisation.
SentenceEmbedding sentence_embed(const Tensor& states, Modality source = Modality::text,
                                 std::size_t batch_index = 0);

struct SimilarityMatrix {
  Tensor logits;  // B x B, logits[i][j] = <img_i, txt_j> / tau
  double temperature = 1.0;
};

SimilarityMatrix similarity_matrix(std::span<const SentenceEmbedding> image,
                                   std::span<const SentenceEmbedding> text, double tau);

// Mean over anchors i of -log softmax(S[i, :])[i]. Images are the anchors.
Tensor contrastive_loss(const SimilarityMatrix& s);
// Average of the image-anchored and text-anchored losses.
Tensor symmetric_contrastive_loss(const SimilarityMatrix& s);

using TokenId = std::size_t;

// Mean of -log softmax(logits_t)[target_t] over positions whose target is not pad_id.
Tensor token_cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId pad_id);

struct LossBreakdown {
  double ce = 0.0;
  double con = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(double ce, double con, double lambda);
// Differentiable ce + lambda * con.
Tensor combine_losses(const Tensor& ce, const Tensor& con, double lambda);

}  // namespace mmcot
