#include "mmcot/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "mmcot/error.hpp"
#include "mmcot/textmetrics.hpp"

namespace mmcot {

namespace {
const std::vector<std::string> kReservedTokens{"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};
}

Vocabulary::Vocabulary() : tokens_(kReservedTokens) {
  for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), t) != kReservedTokens.end()) continue;
    v.tokens_.push_back(std::move(t));
  }
  v.index_.clear();
  for (TokenId i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], i).second) throw FormatError("vocabulary: duplicate token '" + v.tokens_[i] + "'");
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const TripletRecord> corpus, std::size_t max_size) {
  if (max_size < kReserved) throw ParameterError("vocabulary: max_size below reserved token count");
  std::map<std::string, std::size_t> freq;
  for (const auto& r : corpus) {
    for (const auto* text : {&r.question, &r.rationale, &r.answer}) {
      for (auto& tok : metrics::tokenize(metrics::normalize_text(*text))) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  for (auto& [tok, n] : ranked) {
    if (tokens.size() + kReserved >= max_size) break;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : metrics::tokenize(metrics::normalize_text(text))) ids.push_back(find(tok).value_or(kUnk));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < kReserved || id >= tokens_.size()) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens_[id];
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  if (tokens.size() < kReserved || !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens.begin())) {
    throw FormatError("vocabulary " + path.string() + " lacks the reserved tokens");
  }
  return from_tokens(std::move(tokens));
}

}  // namespace mmcot
