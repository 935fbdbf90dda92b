#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mmcot/curation.hpp"
#include "mmcot/error.hpp"
#include "tempdir.hpp"

using namespace mmcot;
using namespace mmcot::curation;
using mmcot::testing::TempDir;
using mmcot::testing::write_file;

namespace {

std::size_t count(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<SourceRecord> vqa_sources(std::size_t n) {
  std::vector<SourceRecord> out;
  for (std::size_t i = 1; i <= n; ++i) {
    SourceRecord s;
    s.id = std::to_string(i);
    s.question = "question " + s.id;
    s.answer = "answer " + s.id;
    s.image_ref = "img/" + s.id;
    out.push_back(s);
  }
  return out;
}

// Fails every request whose prompt mentions `failing`; counts calls.
class FaultyClient final : public GeneratorClient {
 public:
  explicit FaultyClient(std::string failing) : failing_(std::move(failing)) {}
  std::string generate(const GenerationRequest& r) override {
    ++calls;
    if (r.prompt.find(failing_) != std::string::npos) throw GenerationError("refused");
    return "because " + r.image_ref;
  }
  std::atomic<std::size_t> calls{0};

 private:
  std::string failing_;
};

// Records the peak number of concurrent generate() calls.
class InstrumentedClient final : public GeneratorClient {
 public:
  std::string generate(const GenerationRequest& r) override {
    const std::size_t now = ++active_;
    std::size_t seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active_;
    return "ok " + r.image_ref;
  }
  std::atomic<std::size_t> peak{0};

 private:
  std::atomic<std::size_t> active_{0};
};

}  // namespace

TEST(Prompts, CaptionTemplate) {
  const auto p = render_caption_prompt("a dog");
  EXPECT_NE(p.find("reads: a dog."), std::string::npos);
  EXPECT_EQ(p, std::string(kCaptionTemplate).replace(kCaptionTemplate.find("[Caption]"), 9, "a dog"));
  const std::string punct = "a cat, asleep; on (the) mat!";
  EXPECT_NE(render_caption_prompt(punct).find(punct), std::string::npos);
  EXPECT_THROW(render_caption_prompt(""), std::invalid_argument);
}

TEST(Prompts, VqaTemplate) {
  const auto p = render_vqa_prompt("what color", "red");
  EXPECT_NE(p.find("your ANSWER is: red"), std::string::npos);
  EXPECT_NE(p.find("about this picture: what color."), std::string::npos);
  EXPECT_EQ(count(p, "[Question]") + count(p, "[Answer]"), 0u);
  const std::string uq = "¿Qué color tiene el 自転車?";
  EXPECT_NE(render_vqa_prompt(uq, "rojo").find(uq), std::string::npos);
  EXPECT_THROW(render_vqa_prompt("q", ""), std::invalid_argument);
  EXPECT_THROW(render_vqa_prompt("", "a"), std::invalid_argument);
}

TEST(Prompts, TemplateArity) {
  EXPECT_EQ(PromptTemplate::caption().placeholders.size(), 1u);
  EXPECT_EQ(PromptTemplate::vqa().placeholders.size(), 2u);
  EXPECT_EQ(count(kCaptionTemplate, "[Caption]"), 1u);
  EXPECT_EQ(count(kVqaTemplate, "[Question]"), 1u);
  EXPECT_EQ(count(kVqaTemplate, "[Answer]"), 1u);
}

TEST(Sources, ParseBothKinds) {
  const auto c = parse_source_record(R"({"id":"c1","caption":"two cats","image_ref":"x.txt","split":"val"})");
  EXPECT_EQ(c.kind, TemplateKind::caption);
  EXPECT_EQ(c.split, Split::val);
  const auto v = parse_source_record(R"({"id":5,"question":"why","answer":"because","image_ref":"y.txt"})");
  EXPECT_EQ(v.kind, TemplateKind::vqa);
  EXPECT_EQ(v.id, "5");
  EXPECT_THROW(parse_source_record(R"({"id":"1","question":"why"})"), FormatError);
}

TEST(Collect, EchoClientYieldsEveryRecord) {
  EchoGeneratorClient echo;
  auto sources = vqa_sources(6);
  SourceRecord cap;
  cap.id = "c";
  cap.kind = TemplateKind::caption;
  cap.caption = "a bus";
  sources.push_back(cap);
  const auto r = collect_rationales(sources, echo);
  ASSERT_EQ(r.records.size(), 7u);
  EXPECT_TRUE(r.failures.empty());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    EXPECT_EQ(r.records[i].id, sources[i].id);
    EXPECT_EQ(r.records[i].review_status, ReviewStatus::unreviewed);
  }
  EXPECT_EQ(r.records[0].rationale, render_vqa_prompt("question 1", "answer 1"));
  EXPECT_EQ(r.records[6].source, Source::caption);
  EXPECT_EQ(r.records[6].question, "What is the caption of this picture?");
  EXPECT_EQ(r.records[6].answer, "a bus");
}

TEST(Collect, FaultInjectionLogsOneFailure) {
  FaultyClient client("question 3.");
  CollectOptions opt;
  opt.max_retries = 2;
  const auto r = collect_rationales(vqa_sources(5), client, opt);
  EXPECT_EQ(r.records.size(), 4u);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].id, "3");
  EXPECT_EQ(r.failures[0].attempts, 2u);
  EXPECT_EQ(r.failures[0].reason, "refused");
  EXPECT_EQ(r.client_calls, 4u + 2u);
}

TEST(Collect, ResumeProcessesOnlyUnjournaled) {
  TempDir dir;
  CollectOptions opt;
  opt.journal = dir / "journal.jsonl";
  opt.max_retries = 1;
  FaultyClient faulty("question 2.");
  const auto first = collect_rationales(vqa_sources(4), faulty, opt);
  EXPECT_EQ(first.records.size(), 3u);
  FaultyClient healthy("never");
  const auto second = collect_rationales(vqa_sources(4), healthy, opt);
  EXPECT_EQ(healthy.calls.load(), 1u);
  EXPECT_EQ(second.resumed, 3u);
  EXPECT_EQ(second.records.size(), 4u);
  FaultyClient idle("never");
  const auto third = collect_rationales(vqa_sources(4), idle, opt);
  EXPECT_EQ(idle.calls.load(), 0u);
  EXPECT_EQ(third.records, second.records);
}

TEST(Collect, CorruptJournalAborts) {
  TempDir dir;
  write_file(dir / "journal.jsonl", "{\"id\":\"1\",\"rationale\":\"r\"}\n{broken\n");
  CollectOptions opt;
  opt.journal = dir / "journal.jsonl";
  EchoGeneratorClient echo;
  EXPECT_THROW(collect_rationales(vqa_sources(3), echo, opt), JournalError);
}

TEST(Collect, NeverExceedsConcurrencyLimit) {
  for (std::size_t limit : {1u, 2u, 3u}) {
    InstrumentedClient client;
    CollectOptions opt;
    opt.concurrency = limit;
    const auto r = collect_rationales(vqa_sources(24), client, opt);
    EXPECT_EQ(r.records.size(), 24u);
    EXPECT_LE(client.peak.load(), limit);
    EXPECT_GE(client.peak.load(), 1u);
  }
}

TEST(HttpClient, TalksToLocalServer) {
  httplib::Server server;
  std::string seen_prompt, seen_param;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    seen_prompt = body.at("prompt").get<std::string>();
    seen_param = body.at("params").value("temperature", "");
    res.set_content(nlohmann::json{{"text", "generated for " + body.at("image_ref").get<std::string>()}}.dump(),
                    "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpGeneratorClient client("127.0.0.1", port);
  GenerationRequest req;
  req.prompt = "hello";
  req.image_ref = "img/7";
  req.params["temperature"] = "0.2";
  EXPECT_EQ(client.generate(req), "generated for img/7");
  EXPECT_EQ(seen_prompt, "hello");
  EXPECT_EQ(seen_param, "0.2");
  HttpGeneratorClient broken("127.0.0.1", port, "/broken");
  EXPECT_THROW(broken.generate(req), GenerationError);

  server.stop();
  t.join();
  HttpGeneratorClient closed("127.0.0.1", port);
  req.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(closed.generate(req), GenerationError);
}

TEST(Review, ParseAndApply) {
  const auto decisions = parse_review_decisions("id,decision\n1,accept\n2,reject\n3,accept\n4,accept\n5,reject\n6,accept\n");
  ASSERT_EQ(decisions.size(), 6u);
  std::vector<TripletRecord> records;
  for (int i = 1; i <= 6; ++i) {
    TripletRecord r;
    r.id = std::to_string(i);
    r.question = r.rationale = r.answer = "x";
    records.push_back(r);
  }
  const auto accepted = apply_review(records, decisions);
  EXPECT_EQ(accepted.size(), 4u);
  EXPECT_EQ(records[1].review_status, ReviewStatus::rejected);
  EXPECT_EQ(records[0].review_status, ReviewStatus::accepted);

  std::vector<ReviewDecision> all;
  for (const auto& r : records) all.push_back({r.id, true});
  EXPECT_EQ(apply_review(records, all).size(), records.size());

  const std::vector<ReviewDecision> unknown{{"99", true}};
  EXPECT_THROW(apply_review(records, unknown), ReviewError);
  EXPECT_THROW(parse_review_decisions("1,maybe\n"), FormatError);
}
