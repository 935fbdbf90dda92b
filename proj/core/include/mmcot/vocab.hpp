#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmcot/dataset.hpp"
#include "mmcot/objectives.hpp"

namespace mmcot {

// Whitespace vocabulary over normalised corpus text, with five reserved ids.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr std::size_t kReserved = 5;

  Vocabulary();

  // Most frequent tokens first (ties broken lexicographically), capped at max_size entries.
  static Vocabulary build(std::span<const TripletRecord> corpus, std::size_t max_size = 256);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::optional<TokenId> find(std::string_view token) const;

  // Unknown words map to kUnk.
  std::vector<TokenId> encode(std::string_view text) const;
  // Space-joined, reserved ids dropped.
  std::string decode(std::span<const TokenId> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

}  // namespace mmcot
