#include "mmcot/curation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mmcot/error.hpp"

namespace mmcot::curation {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string string_field(const json& obj, const char* field, bool required) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    if (required) throw FormatError(std::string("source record missing field '") + field + "'");
    return {};
  }
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (!it->is_string()) throw FormatError(std::string("source field '") + field + "' must be a string");
  return it->get<std::string>();
}

std::map<std::string, std::string> read_journal(const std::filesystem::path& path) {
  std::map<std::string, std::string> done;
  std::ifstream in(path, std::ios::binary);
  if (!in) return done;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json entry = json::parse(line);
      done[entry.at("id").get<std::string>()] = entry.at("rationale").get<std::string>();
    } catch (const json::exception& e) {
      throw JournalError("journal " + path.string() + ":" + std::to_string(line_no) + " is corrupt: " + e.what());
    }
  }
  return done;
}

}  // namespace

const PromptTemplate& PromptTemplate::caption() {
  static const PromptTemplate t{TemplateKind::caption, kCaptionTemplate, {"[Caption]"}};
  return t;
}

const PromptTemplate& PromptTemplate::vqa() {
  static const PromptTemplate t{TemplateKind::vqa, kVqaTemplate, {"[Question]", "[Answer]"}};
  return t;
}

std::string PromptTemplate::render(std::span<const std::string_view> values) const {
  if (values.size() != placeholders.size()) {
    throw ParameterError("prompt template expects " + std::to_string(placeholders.size()) + " values");
  }
  std::string out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < placeholders.size(); ++i) {
    const auto at = text.find(placeholders[i], pos);
    out.append(text.substr(pos, at - pos));
    out.append(values[i]);
    pos = at + placeholders[i].size();
  }
  out.append(text.substr(pos));
  return out;
}

std::string render_caption_prompt(std::string_view caption) {
  if (caption.empty()) throw ParameterError("render_caption_prompt: empty caption");
  const std::string_view values[] = {caption};
  return PromptTemplate::caption().render(values);
}

std::string render_vqa_prompt(std::string_view question, std::string_view answer) {
  if (question.empty()) throw ParameterError("render_vqa_prompt: empty question");
  if (answer.empty()) throw ParameterError("render_vqa_prompt: empty answer");
  const std::string_view values[] = {question, answer};
  return PromptTemplate::vqa().render(values);
}

SourceRecord parse_source_record(std::string_view json_line) {
  json obj;
  try {
    obj = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("source record: invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) throw FormatError("source record must be a JSON object");
  SourceRecord s;
  s.id = string_field(obj, "id", true);
  s.image_ref = string_field(obj, "image_ref", false);
  if (obj.contains("caption")) {
    s.kind = TemplateKind::caption;
    s.caption = string_field(obj, "caption", true);
  } else {
    s.kind = TemplateKind::vqa;
    s.question = string_field(obj, "question", true);
    s.answer = string_field(obj, "answer", true);
  }
  if (const std::string split = string_field(obj, "split", false); !split.empty()) {
    auto parsed = parse_split(split);
    if (!parsed) throw FormatError("source record: unknown split '" + split + "'");
    s.split = *parsed;
  }
  return s;
}

std::vector<SourceRecord> load_sources(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open sources " + path.string());
  std::vector<SourceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_source_record(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

HttpGeneratorClient::HttpGeneratorClient(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {}

std::string HttpGeneratorClient::generate(const GenerationRequest& request) {
  httplib::Client client(host_, port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  json body{{"prompt", request.prompt}, {"image_ref", request.image_ref}, {"params", request.params}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw GenerationError("generator request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw GenerationError("generator returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw GenerationError(std::string("generator reply malformed: ") + e.what());
  }
}

TripletRecord make_triplet(const SourceRecord& source, std::string rationale, const CollectOptions& options) {
  TripletRecord r;
  r.id = source.id;
  r.image_ref = source.image_ref;
  r.split = source.split;
  r.rationale = std::move(rationale);
  r.review_status = ReviewStatus::unreviewed;
  if (source.kind == TemplateKind::caption) {
    r.source = Source::caption;
    r.question = options.caption_question;
    r.answer = source.caption;
  } else {
    r.source = Source::vqa;
    r.question = source.question;
    r.answer = source.answer;
  }
  return r;
}

CollectResult collect_rationales(std::span<const SourceRecord> sources, GeneratorClient& client,
                                 const CollectOptions& options) {
  if (options.concurrency == 0) throw ParameterError("collect_rationales: concurrency limit must be >= 1");
  if (options.max_retries == 0) throw ParameterError("collect_rationales: max_retries must be >= 1");

  std::map<std::string, std::string> journaled;
  if (options.journal) journaled = read_journal(*options.journal);

  std::ofstream journal_out;
  if (options.journal) {
    journal_out.open(*options.journal, std::ios::binary | std::ios::app);
    if (!journal_out) throw JournalError("cannot append to journal " + options.journal->string());
  }

  const std::size_t n = sources.size();
  std::vector<std::optional<std::string>> rationales(n);
  std::vector<std::optional<CollectFailure>> failures(n);
  std::vector<std::size_t> pending;
  CollectResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (auto it = journaled.find(sources[i].id); it != journaled.end()) {
      rationales[i] = it->second;
      ++result.resumed;
    } else {
      pending.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::mutex journal_mutex;

  auto worker = [&] {
    for (std::size_t slot = next++; slot < pending.size(); slot = next++) {
      const std::size_t i = pending[slot];
      const SourceRecord& src = sources[i];
      GenerationRequest request;
      request.image_ref = src.image_ref;
      request.timeout = options.timeout;
      request.params = options.generation_params;
      std::string reason;
      try {
        request.prompt = src.kind == TemplateKind::caption ? render_caption_prompt(src.caption)
                                                           : render_vqa_prompt(src.question, src.answer);
      } catch (const std::exception& e) {
        failures[i] = CollectFailure{src.id, 0, e.what()};
        continue;
      }
      std::size_t attempts = 0;
      while (attempts < options.max_retries) {
        ++attempts;
        ++calls;
        try {
          std::string text = client.generate(request);
          if (trim(text).empty()) throw GenerationError("empty generation");
          if (options.journal) {
            std::lock_guard lock(journal_mutex);
            journal_out << json{{"id", src.id}, {"rationale", text}}.dump() << '\n';
            journal_out.flush();
          }
          rationales[i] = std::move(text);
          break;
        } catch (const std::exception& e) {
          reason = e.what();
        }
      }
      if (!rationales[i]) failures[i] = CollectFailure{src.id, attempts, reason};
    }
  };

  const std::size_t threads = std::min(options.concurrency, pending.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  if (threads > 0) worker();
  for (auto& th : pool) th.join();

  result.client_calls = calls.load();
  for (std::size_t i = 0; i < n; ++i) {
    if (rationales[i]) {
      result.records.push_back(make_triplet(sources[i], *rationales[i], options));
    } else if (failures[i]) {
      result.failures.push_back(*failures[i]);
    }
  }
  return result;
}

std::vector<ReviewDecision> parse_review_decisions(std::string_view csv) {
  std::vector<ReviewDecision> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError("decisions line " + std::to_string(line_no) + ": expected 'id,accept|reject'");
    }
    std::string id = trim(std::string_view(line).substr(0, comma));
    std::string verdict = trim(std::string_view(line).substr(comma + 1));
    std::transform(verdict.begin(), verdict.end(), verdict.begin(), [](unsigned char c) { return std::tolower(c); });
    if (line_no == 1 && id == "id") continue;
    if (verdict != "accept" && verdict != "reject") {
      throw FormatError("decisions line " + std::to_string(line_no) + ": unknown decision '" + verdict + "'");
    }
    out.push_back(ReviewDecision{std::move(id), verdict == "accept"});
  }
  return out;
}

std::vector<ReviewDecision> load_review_decisions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open decisions " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_review_decisions(buffer.str());
}

std::vector<TripletRecord> apply_review(std::vector<TripletRecord>& records, std::span<const ReviewDecision> decisions) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, i);
  for (const auto& d : decisions) {
    if (!by_id.count(d.id)) throw ReviewError("review decision for unknown id '" + d.id + "'");
  }
  for (const auto& d : decisions) {
    records[by_id[d.id]].review_status = d.accept ? ReviewStatus::accepted : ReviewStatus::rejected;
  }
  std::vector<TripletRecord> accepted;
  for (const auto& r : records) {
    if (r.review_status == ReviewStatus::accepted) accepted.push_back(r);
  }
  return accepted;
}

}  // namespace mmcot::curation
