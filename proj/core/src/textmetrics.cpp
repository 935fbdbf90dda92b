#include "mmcot/textmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "mmcot/error.hpp"

namespace mmcot::metrics {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<Gram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Gram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

std::string strip_punct_lower(std::string_view token) {
  std::string out;
  for (char ch : token) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::set<std::string> content_words(std::string_view text) {
  std::set<std::string> out;
  for (const auto& tok : tokenize(text)) {
    auto w = strip_punct_lower(tok);
    if (!w.empty()) out.insert(std::move(w));
  }
  return out;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, TokenUnit unit) {
  std::vector<std::string> out;
  if (unit == TokenUnit::character) {
    for (std::size_t i = 0; i < text.size();) {
      std::size_t len = 1;
      while (i + len < text.size() && (static_cast<unsigned char>(text[i + len]) & 0xC0) == 0x80) ++len;
      std::string_view cp = text.substr(i, len);
      if (!(len == 1 && std::isspace(static_cast<unsigned char>(cp[0])))) out.emplace_back(cp);
      i += len;
    }
    return out;
  }
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

double accuracy(std::span<const std::string> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) throw DimensionError("accuracy: prediction/gold counts differ");
  if (predictions.empty()) throw DimensionError("accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (normalize_text(predictions[i]) == normalize_text(golds[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double average_accuracy(std::span<const double> per_aspect) {
  if (per_aspect.empty()) throw DimensionError("average_accuracy: no aspects");
  double total = 0.0;
  for (double v : per_aspect) total += v;
  return total / static_cast<double>(per_aspect.size());
}

double brevity_penalty(std::size_t candidate_length, std::size_t reference_length) {
  if (candidate_length == 0) return 0.0;
  if (candidate_length > reference_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_length) / static_cast<double>(candidate_length));
}

Score bleu(std::span<const std::string> candidate, std::span<const std::string> reference, const BleuOptions& options) {
  if (options.max_order == 0) throw ParameterError("bleu: max_order must be >= 1");
  std::vector<double> weights = options.weights;
  if (weights.empty()) weights.assign(options.max_order, 1.0 / static_cast<double>(options.max_order));
  if (weights.size() != options.max_order) throw ParameterError("bleu: one weight per order required");
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ParameterError("bleu: negative weight");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) throw ParameterError("bleu: weights must sum to 1");

  if (candidate.empty()) return Score{0.0, true};

  const std::size_t orders = std::min(options.max_order, candidate.size());
  double active_weight = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) active_weight += weights[n - 1];
  if (active_weight <= 0.0) return Score{0.0, true};

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t clipped = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) clipped += std::min(count, it->second);
    }
    double numerator = static_cast<double>(clipped);
    double denominator = static_cast<double>(candidate.size() - n + 1);
    if (options.add_one_smoothing && n > 1) {
      numerator += 1.0;
      denominator += 1.0;
    }
    if (numerator == 0.0) return Score{0.0, false};
    log_sum += (weights[n - 1] / active_weight) * std::log(numerator / denominator);
  }
  return Score{brevity_penalty(candidate.size(), reference.size()) * std::exp(log_sum), false};
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // Two-row DP, O(|a||b|) time, O(|b|) space.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Score rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return Score{0.0, true};
  const auto longest = std::max(candidate.size(), reference.size());
  return Score{static_cast<double>(lcs_length(candidate, reference)) / static_cast<double>(longest), false};
}

double cosine_similarity(std::span<const double> c, std::span<const double> r) {
  if (c.size() != r.size()) throw DimensionError("cosine_similarity: dimensions differ");
  double dot = 0.0, cc = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    dot += c[i] * r[i];
    cc += c[i] * c[i];
    rr += r[i] * r[i];
  }
  if (cc == 0.0 || rr == 0.0) throw DegenerateVectorError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(cc) * std::sqrt(rr)), -1.0, 1.0);
}

BagOfTokensEmbedder::BagOfTokensEmbedder(std::vector<std::string> vocabulary, TokenUnit unit) : unit_(unit) {
  for (auto& tok : vocabulary) index_.emplace(normalize_text(tok), index_.size());
}

std::vector<double> BagOfTokensEmbedder::embed(std::string_view text) const {
  std::vector<double> v(index_.size(), 0.0);
  for (const auto& tok : tokenize(normalize_text(text), unit_)) {
    if (auto it = index_.find(tok); it != index_.end()) v[it->second] += 1.0;
  }
  return v;
}

Score text_similarity(std::string_view candidate, std::string_view reference, const TextEmbedder* embedder,
                      TokenUnit unit) {
  std::vector<double> c, r;
  if (embedder) {
    c = embedder->embed(candidate);
    r = embedder->embed(reference);
  } else {
    auto ct = tokenize(normalize_text(candidate), unit);
    auto rt = tokenize(normalize_text(reference), unit);
    std::set<std::string> joint(ct.begin(), ct.end());
    joint.insert(rt.begin(), rt.end());
    BagOfTokensEmbedder local(std::vector<std::string>(joint.begin(), joint.end()), unit);
    c = local.embed(candidate);
    r = local.embed(reference);
  }
  try {
    return Score{cosine_similarity(c, r), false};
  } catch (const DegenerateVectorError&) {
    return Score{0.0, true};
  }
}

EntailmentResult TokenContainmentScorer::score(std::string_view premise, std::string_view hypothesis) const {
  const auto have = content_words(premise);
  const auto need = content_words(hypothesis);
  const bool supportive = std::all_of(need.begin(), need.end(), [&](const std::string& w) { return have.count(w) > 0; });
  return EntailmentResult{supportive && !need.empty(), std::nullopt};
}

std::vector<SplitSupport> support_rate(std::span<const TripletRecord> records, const EntailmentScorer& scorer) {
  if (records.empty()) throw DimensionError("support_rate: no records");
  std::array<SplitSupport, 3> acc{};
  for (Split s : kAllSplits) acc[static_cast<std::size_t>(s)].split = s;
  for (const auto& r : records) {
    auto& slot = acc[static_cast<std::size_t>(r.split)];
    ++slot.total;
    if (scorer.score(r.question + " " + r.rationale, r.answer).supportive) ++slot.supportive;
  }
  std::vector<SplitSupport> out;
  for (const auto& s : acc) {
    if (s.total > 0) out.push_back(s);
  }
  return out;
}

}  // namespace mmcot::metrics
