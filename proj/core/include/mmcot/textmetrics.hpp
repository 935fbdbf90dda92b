#pragma once

// Evaluation metrics for generated rationales and answers: accuracy,
// average accuracy, BLEU with brevity penalty, cosine similarity and
// LCS-based ROUGE-L (LCS over the longer of the two lengths), plus the
// entailment-based support rate of a corpus.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmcot/dataset.hpp"

namespace mmcot::metrics {

class DegenerateVectorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TokenUnit { word, character };

// Lowercase, trim, collapse runs of whitespace to one space.
std::string normalize_text(std::string_view text);
// Whitespace tokens, or UTF-8 code points in character mode.
std::vector<std::string> tokenize(std::string_view text, TokenUnit unit = TokenUnit::word);

double accuracy(std::span<const std::string> predictions, std::span<const std::string> golds);
double average_accuracy(std::span<const double> per_aspect);

// A metric value plus a flag set when an input was empty and the value was
// defined by convention (0) rather than by the formula.
struct Score {
  double value = 0.0;
  bool degenerate = false;
};

struct BleuOptions {
  std::size_t max_order = 4;
  std::vector<double> weights;  // empty: uniform 1/N
  bool add_one_smoothing = false;
};

// Clipped n-gram precision; orders longer than the candidate are dropped and
// the remaining weights renormalised. Any zero precision gives 0.
Score bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
           const BleuOptions& options = {});
double brevity_penalty(std::size_t candidate_length, std::size_t reference_length);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
Score rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

double cosine_similarity(std::span<const double> c, std::span<const double> r);

// Pluggable sentence embedder for the Similarity metric.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Token-count vector over a fixed vocabulary; unknown tokens are ignored.
class BagOfTokensEmbedder final : public TextEmbedder {
 public:
  explicit BagOfTokensEmbedder(std::vector<std::string> vocabulary, TokenUnit unit = TokenUnit::word);
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::map<std::string, std::size_t> index_;
  TokenUnit unit_;
};

// Cosine similarity of the two texts' embeddings. Without an embedder the
// bag-of-tokens vectors over the pair's joint vocabulary are used. An empty
// side gives a degenerate 0.
Score text_similarity(std::string_view candidate, std::string_view reference,
                      const TextEmbedder* embedder = nullptr, TokenUnit unit = TokenUnit::word);

struct EntailmentResult {
  bool supportive = false;
  std::optional<double> confidence;
};

class EntailmentScorer {
 public:
  virtual ~EntailmentScorer() = default;
  virtual EntailmentResult score(std::string_view premise, std::string_view hypothesis) const = 0;
};

// Supportive iff every hypothesis word occurs in the premise (case- and
// punctuation-insensitive).
class TokenContainmentScorer final : public EntailmentScorer {
 public:
  EntailmentResult score(std::string_view premise, std::string_view hypothesis) const override;
};

struct SplitSupport {
  Split split = Split::train;
  std::size_t supportive = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(supportive) / static_cast<double>(total); }
};

// Premise = question + " " + rationale, hypothesis = answer. One entry per
// split present in the records, in train/val/test order.
std::vector<SplitSupport> support_rate(std::span<const TripletRecord> records, const EntailmentScorer& scorer);

}  // namespace mmcot::metrics
