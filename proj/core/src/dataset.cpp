#include "mmcot/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmcot/error.hpp"

namespace mmcot {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string lower_ascii(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : lower_ascii(text)) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      current.push_back(ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string required_string(const ordered_json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw FormatError(std::string("missing field '") + field + "'");
  if (!it->is_string()) throw FormatError(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

std::string optional_string(const ordered_json& obj, const char* field, std::string fallback) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw FormatError(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(Source s) { return s == Source::caption ? "caption" : "vqa"; }

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::unreviewed: return "unreviewed";
    case ReviewStatus::accepted: return "accepted";
    case ReviewStatus::rejected: return "rejected";
  }
  return "unreviewed";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val" || text == "validation") return Split::val;
  if (text == "test") return Split::test;
  return std::nullopt;
}

std::optional<Source> parse_source(std::string_view text) {
  if (text == "caption") return Source::caption;
  if (text == "vqa") return Source::vqa;
  return std::nullopt;
}

std::optional<ReviewStatus> parse_review_status(std::string_view text) {
  if (text == "unreviewed") return ReviewStatus::unreviewed;
  if (text == "accepted") return ReviewStatus::accepted;
  if (text == "rejected") return ReviewStatus::rejected;
  return std::nullopt;
}

TripletRecord parse_record(std::string_view json_line) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(json_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FormatError("record must be a JSON object");

  TripletRecord r;
  auto id = obj.find("id");
  if (id == obj.end()) throw FormatError("missing field 'id'");
  if (id->is_string()) {
    r.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    r.id = std::to_string(id->get<long long>());
  } else {
    throw FormatError("field 'id' must be a string or integer");
  }
  r.question = required_string(obj, "question");
  r.rationale = required_string(obj, "rationale");
  r.answer = required_string(obj, "answer");
  r.image_ref = optional_string(obj, "image_ref", "");

  const std::string split = required_string(obj, "split");
  auto s = parse_split(split);
  if (!s) throw FormatError("field 'split' has unknown value '" + split + "'");
  r.split = *s;

  const std::string source = optional_string(obj, "source", "vqa");
  auto src = parse_source(source);
  if (!src) throw FormatError("field 'source' has unknown value '" + source + "'");
  r.source = *src;

  if (auto qt = obj.find("question_type"); qt != obj.end() && !qt->is_null()) {
    if (!qt->is_string()) throw FormatError("field 'question_type' must be a string");
    r.question_type = qt->get<std::string>();
  }

  const std::string status = optional_string(obj, "review_status", "unreviewed");
  auto st = parse_review_status(status);
  if (!st) throw FormatError("field 'review_status' has unknown value '" + status + "'");
  r.review_status = *st;

  if (r.review_status == ReviewStatus::accepted) {
    if (r.question.empty()) throw FormatError("field 'question' is empty on an accepted record");
    if (r.rationale.empty()) throw FormatError("field 'rationale' is empty on an accepted record");
    if (r.answer.empty()) throw FormatError("field 'answer' is empty on an accepted record");
  }
  return r;
}

std::string serialize_record(const TripletRecord& r) {
  ordered_json obj;
  obj["id"] = r.id;
  obj["question"] = r.question;
  obj["rationale"] = r.rationale;
  obj["answer"] = r.answer;
  obj["image_ref"] = r.image_ref;
  obj["split"] = std::string(to_string(r.split));
  obj["source"] = std::string(to_string(r.source));
  if (r.question_type) obj["question_type"] = *r.question_type;
  obj["review_status"] = std::string(to_string(r.review_status));
  return obj.dump();
}

LoadResult load_corpus(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus " + path.string());
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      result.records.push_back(parse_record(line));
    } catch (const FormatError& e) {
      if (strict) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      result.errors.push_back(LoadIssue{line_no, e.what()});
    }
  }
  return result;
}

void save_corpus(const std::filesystem::path& path, const std::vector<TripletRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write corpus " + path.string());
  for (const auto& r : records) out << serialize_record(r) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

std::size_t char_length(std::string_view text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::size_t LengthHistogram::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

std::vector<double> LengthHistogram::log_counts() const {
  std::vector<double> out;
  out.reserve(counts.size());
  for (auto c : counts) out.push_back(std::log1p(static_cast<double>(c)));
  return out;
}

void LengthHistogram::add(std::size_t length) {
  const std::size_t bin = length / bin_width;
  if (counts.size() <= bin) counts.resize(bin + 1, 0);
  ++counts[bin];
}

SplitStats split_stats(const std::vector<TripletRecord>& corpus, std::size_t bin_width) {
  if (bin_width == 0) throw ParameterError("split_stats: bin width must be >= 1");
  SplitStats stats;
  stats.question.bin_width = stats.rationale.bin_width = stats.answer.bin_width = bin_width;
  for (const auto& r : corpus) {
    ++stats.counts[static_cast<std::size_t>(r.split)];
    ++stats.total;
    stats.question.add(char_length(r.question));
    stats.rationale.add(char_length(r.rationale));
    stats.answer.add(char_length(r.answer));
  }
  return stats;
}

std::string_view to_string(QuestionType t) {
  switch (t) {
    case QuestionType::caption: return "Caption";
    case QuestionType::true_false: return "True/False";
    case QuestionType::numeric: return "Numeric";
    case QuestionType::color: return "Color";
    case QuestionType::person: return "Person";
    case QuestionType::time: return "Time";
    case QuestionType::action: return "Action";
    case QuestionType::others: return "Others";
  }
  return "Others";
}

QuestionType question_type_tag(std::string_view question) {
  const std::vector<std::string> w = words(question);
  if (w.empty()) return QuestionType::others;
  const std::string joined = [&] {
    std::string s = " ";
    for (const auto& x : w) s += x + " ";
    return s;
  }();
  auto has = [&](std::string_view phrase) { return joined.find(" " + std::string(phrase) + " ") != std::string::npos; };
  auto starts = [&](std::initializer_list<std::string_view> heads) {
    return std::any_of(heads.begin(), heads.end(), [&](std::string_view h) { return w.front() == h; });
  };

  if (has("caption") || has("captioned") || has("describe") || has("description") || has("title")) {
    return QuestionType::caption;
  }
  if (starts({"is", "are", "does", "do", "did", "can", "could", "was", "were", "has", "have", "will", "would",
              "should", "am"})) {
    return QuestionType::true_false;
  }
  if (has("how many") || has("how much") || has("what number") || has("how old") || has("how tall")) {
    return QuestionType::numeric;
  }
  if (has("color") || has("colour") || has("colors") || has("colored")) return QuestionType::color;
  if (has("what time") || starts({"when"}) || has("what season") || has("what year") || has("what day") ||
      has("what month")) {
    return QuestionType::time;
  }
  if (starts({"who", "whose", "whom"}) || has("what gender") || has("what is the man") ||
      has("what is the woman") || has("what is the person")) {
    if (has("doing")) return QuestionType::action;
    return QuestionType::person;
  }
  if (has("doing") || has("what sport") || has("what activity") || has("playing") || has("what action")) {
    return QuestionType::action;
  }
  return QuestionType::others;
}

QuestionType record_question_type(const TripletRecord& record) {
  if (record.question_type) {
    for (QuestionType t : kAllQuestionTypes) {
      if (lower_ascii(to_string(t)) == lower_ascii(*record.question_type)) return t;
    }
  }
  if (record.source == Source::caption) return QuestionType::caption;
  return question_type_tag(record.question);
}

std::array<std::size_t, 8> question_type_distribution(const std::vector<TripletRecord>& corpus) {
  std::array<std::size_t, 8> counts{};
  for (const auto& r : corpus) ++counts[static_cast<std::size_t>(record_question_type(r))];
  return counts;
}

}  // namespace mmcot
