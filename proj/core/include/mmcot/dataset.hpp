#pragma once

// Question/rationale/answer triplet corpora stored as JSONL, plus the
// corpus analyses: split accounting, character-length histograms and the
// keyword-based question-type taxonomy.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmcot {

enum class Split { train, val, test };
enum class Source { caption, vqa };
enum class ReviewStatus { unreviewed, accepted, rejected };

inline constexpr std::array<Split, 3> kAllSplits{Split::train, Split::val, Split::test};

std::string_view to_string(Split s);
std::string_view to_string(Source s);
std::string_view to_string(ReviewStatus s);
std::optional<Split> parse_split(std::string_view text);
std::optional<Source> parse_source(std::string_view text);
std::optional<ReviewStatus> parse_review_status(std::string_view text);

struct TripletRecord {
  std::string id;
  std::string question;
  std::string rationale;
  std::string answer;
  std::string image_ref;
  Split split = Split::train;
  Source source = Source::vqa;
  std::optional<std::string> question_type;
  ReviewStatus review_status = ReviewStatus::unreviewed;

  bool operator==(const TripletRecord&) const = default;
};

struct LoadIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<TripletRecord> records;
  std::vector<LoadIssue> errors;
};

// Parses one JSON object line; throws FormatError naming the offending field.
TripletRecord parse_record(std::string_view json_line);
std::string serialize_record(const TripletRecord& record);

// Malformed lines are collected with their 1-based line numbers. In strict
// mode the first one throws FormatError instead.
LoadResult load_corpus(const std::filesystem::path& path, bool strict = false);
void save_corpus(const std::filesystem::path& path, const std::vector<TripletRecord>& records);

// Number of UTF-8 code points.
std::size_t char_length(std::string_view text);

struct LengthHistogram {
  std::size_t bin_width = 10;
  std::vector<std::size_t> counts;  // bin i covers [i*w, (i+1)*w)

  std::size_t total() const;
  // log(1 + count) per bin, the display scale for long-tailed length plots.
  std::vector<double> log_counts() const;
  void add(std::size_t length);
};

struct SplitStats {
  std::array<std::size_t, 3> counts{};  // indexed by Split
  std::size_t total = 0;
  LengthHistogram question;
  LengthHistogram rationale;
  LengthHistogram answer;

  std::size_t count(Split s) const { return counts[static_cast<std::size_t>(s)]; }
};

SplitStats split_stats(const std::vector<TripletRecord>& corpus, std::size_t bin_width = 10);

enum class QuestionType { caption, true_false, numeric, color, person, time, action, others };

inline constexpr std::array<QuestionType, 8> kAllQuestionTypes{
    QuestionType::caption, QuestionType::true_false, QuestionType::numeric, QuestionType::color,
    QuestionType::person,  QuestionType::time,       QuestionType::action,  QuestionType::others};

std::string_view to_string(QuestionType t);

// Heuristic keyword rule table; first matching rule wins, Others is the fallback.
QuestionType question_type_tag(std::string_view question);

// Uses the record's stored tag when present, otherwise caption-sourced
// records are Caption and the rest go through question_type_tag.
QuestionType record_question_type(const TripletRecord& record);

std::array<std::size_t, 8> question_type_distribution(const std::vector<TripletRecord>& corpus);

}  // namespace mmcot
