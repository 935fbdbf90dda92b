#pragma once

// Rationale elicitation for new triplets: render the caption / VQA prompt
// templates, send them to an external generator, journal the results so an
// interrupted run can resume, and apply the manual accept/reject review.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmcot/dataset.hpp"

namespace mmcot::curation {

enum class TemplateKind { caption, vqa };

struct PromptTemplate {
  TemplateKind kind;
  std::string_view text;
  std::vector<std::string_view> placeholders;

  static const PromptTemplate& caption();
  static const PromptTemplate& vqa();

  // Substitutes each placeholder once, in order.
  std::string render(std::span<const std::string_view> values) const;
};

inline constexpr std::string_view kCaptionTemplate =
    "The caption of this picture reads: [Caption]. Based on the content of the picture, use thinking logic to "
    "explain why this picture is captioned as such.";

inline constexpr std::string_view kVqaTemplate =
    "I have a question about this picture: [Question]. If you have answered, and your ANSWER is: [Answer]. Then "
    "please, based on the content of the picture, the question and answer, use thinking logic to explain why it is "
    "this answer.";

std::string render_caption_prompt(std::string_view caption);
std::string render_vqa_prompt(std::string_view question, std::string_view answer);

struct SourceRecord {
  std::string id;
  TemplateKind kind = TemplateKind::vqa;
  std::string caption;
  std::string question;
  std::string answer;
  std::string image_ref;
  Split split = Split::train;
};

// JSONL: caption sources carry {id, caption, image_ref}, VQA sources carry
// {id, question, answer, image_ref}. An optional "split" is passed through.
std::vector<SourceRecord> load_sources(const std::filesystem::path& path);
SourceRecord parse_source_record(std::string_view json_line);

struct GenerationRequest {
  std::string prompt;
  std::string image_ref;
  std::chrono::milliseconds timeout{30000};
  // Opaque backend parameters (temperature, max tokens, ...).
  std::map<std::string, std::string> params;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Contract for the external rationale generator. Implementations must be
// safe to call from several threads at once and signal failure by throwing
// GenerationError.
class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Deterministic stand-in: returns the prompt unchanged.
class EchoGeneratorClient final : public GeneratorClient {
 public:
  std::string generate(const GenerationRequest& request) override { return request.prompt; }
};

// POSTs {"prompt", "image_ref", "params"} as JSON to http://host:port/path and
// reads the "text" field of the JSON reply.
class HttpGeneratorClient final : public GeneratorClient {
 public:
  HttpGeneratorClient(std::string host, int port, std::string path = "/generate");
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
};

class JournalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CollectOptions {
  std::size_t concurrency = 4;
  std::size_t max_retries = 3;  // attempts per record
  std::optional<std::filesystem::path> journal;
  std::string caption_question = "What is the caption of this picture?";
  std::chrono::milliseconds timeout{30000};
  std::map<std::string, std::string> generation_params;
};

struct CollectFailure {
  std::string id;
  std::size_t attempts = 0;
  std::string reason;
};

struct CollectResult {
  std::vector<TripletRecord> records;  // source order, review_status = unreviewed
  std::vector<CollectFailure> failures;
  std::size_t client_calls = 0;
  std::size_t resumed = 0;  // records taken from the journal
};

// One candidate triplet per source record. Successful generations are
// appended to the journal as they finish; records already journaled are
// not sent again. A journal line that does not parse aborts the run.
CollectResult collect_rationales(std::span<const SourceRecord> sources, GeneratorClient& client,
                                 const CollectOptions& options = {});

TripletRecord make_triplet(const SourceRecord& source, std::string rationale, const CollectOptions& options);

class ReviewError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ReviewDecision {
  std::string id;
  bool accept = false;
};

// Two-column CSV `id,accept|reject`; an `id,decision` header line is allowed.
std::vector<ReviewDecision> load_review_decisions(const std::filesystem::path& path);
std::vector<ReviewDecision> parse_review_decisions(std::string_view csv);

// Marks records accepted/rejected and returns the accepted subset in corpus
// order. Decisions naming an unknown id raise ReviewError.
std::vector<TripletRecord> apply_review(std::vector<TripletRecord>& records,
                                        std::span<const ReviewDecision> decisions);

}  // namespace mmcot::curation
