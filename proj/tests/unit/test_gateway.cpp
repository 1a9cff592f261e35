#include <gtest/gtest.h>

#include <deque>
#include <unistd.h>

#include <filesystem>

#include "mmia/error.hpp"
#include "mmia/gateway.hpp"
#include "mmia/prompts.hpp"

using namespace mmia;
namespace fs = std::filesystem;

namespace {

// Replays queued outcomes: a reply text, or a transport failure when empty.
class QueueBackend : public Backend {
 public:
  explicit QueueBackend(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string id() const override { return "queue"; }
  ChatResponse send(const ChatRequest& request) override {
    prompts.push_back(request.user_prompt);
    if (replies_.empty()) fail(ErrorCode::backend_error, "script exhausted");
    std::string next = replies_.front();
    replies_.pop_front();
    if (next.empty()) throw TransportError("connection reset");
    return ChatResponse{next, TokenUsage{10, 5}, id()};
  }
  std::vector<std::string> prompts;

 private:
  std::deque<std::string> replies_;
};

ChatRequest request(Role role, std::string prompt) {
  ChatRequest r;
  r.role = role;
  r.system_prompt = system_prompt(role);
  r.user_prompt = std::move(prompt);
  r.response_schema = "test_v1";
  return r;
}

GatewayOptions fast() {
  GatewayOptions o;
  o.initial_backoff = std::chrono::milliseconds(0);
  return o;
}

json scenario() {
  return json::parse(R"({
    "schema": "scenario_v1", "id": "unit",
    "rules": [
      {"role": "judge", "contains": "stent", "response": {"fits": true}, "usage": {"prompt_tokens": 7, "completion_tokens": 3}},
      {"role": "judge", "response": "plain text"},
      {"regex": "case-[0-9]+", "response": {"matched": "regex"}}
    ],
    "default": "{}"
  })");
}

}  // namespace

TEST(TokenCounting, CeilingOfBytesOverFour) {
  EXPECT_EQ(count_tokens(""), 0);
  EXPECT_EQ(count_tokens("abc"), 1);
  EXPECT_EQ(count_tokens("abcd"), 1);
  EXPECT_EQ(count_tokens("abcde"), 2);
  EXPECT_EQ(count_tokens("\xC3\xA9\xC3\xA9\xC3\xA9"), 2);  // 6 UTF-8 bytes
}

TEST(ScriptedBackend, FirstMatchingRuleWins) {
  ScriptedBackend b = ScriptedBackend::from_json(scenario());
  EXPECT_EQ(b.id(), "unit");
  const ChatResponse r1 = b.send(request(Role::judge, "drug-eluting stent"));
  EXPECT_EQ(json::parse(r1.text), json({{"fits", true}}));
  EXPECT_EQ(r1.usage, (TokenUsage{7, 3}));
  EXPECT_EQ(b.send(request(Role::judge, "something else")).text, "plain text");
  EXPECT_EQ(json::parse(b.send(request(Role::planner, "case-12")).text), json({{"matched", "regex"}}));
  const ChatResponse fallback = b.send(request(Role::planner, "nothing"));
  EXPECT_EQ(fallback.text, "{}");
}

TEST(ScriptedBackend, UsageDefaultsToTokenCounts) {
  ScriptedBackend b = ScriptedBackend::from_json(scenario());
  const ChatRequest req = request(Role::judge, "something else");
  const ChatResponse r = b.send(req);
  EXPECT_EQ(r.usage.completion_tokens, count_tokens("plain text"));
  EXPECT_GT(r.usage.prompt_tokens, 0);
}

TEST(ScriptedBackend, RejectsBadScenarios) {
  EXPECT_THROW(ScriptedBackend::from_json(json{{"schema", "other"}}), Error);
  json bad = scenario();
  bad["rules"][0]["role"] = "nobody";
  EXPECT_THROW(ScriptedBackend::from_json(bad), Error);
  bad = scenario();
  bad["rules"][2]["regex"] = "(";
  EXPECT_THROW(ScriptedBackend::from_json(bad), Error);
}

TEST(Gateway, RetriesTransportFailures) {
  auto backend = std::make_shared<QueueBackend>(std::deque<std::string>{"", "", "ok"});
  Gateway g(backend, fast());
  EXPECT_EQ(g.complete(request(Role::executor, "hi")).text, "ok");
  EXPECT_EQ(g.calls(), 1u);
  EXPECT_EQ(backend->prompts.size(), 3u);
}

TEST(Gateway, ExhaustedRetriesAreBackendErrors) {
  Gateway g(std::make_shared<QueueBackend>(std::deque<std::string>{"", "", ""}), fast());
  try {
    g.complete(request(Role::executor, "hi"));
    FAIL();
  } catch (const TransportError&) {
    FAIL() << "transport errors must not escape the gateway";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::backend_error);
  }
}

TEST(Gateway, PreconditionsOnRequests) {
  Gateway g(std::make_shared<QueueBackend>(std::deque<std::string>{}), fast());
  ChatRequest r = request(Role::executor, "");
  EXPECT_THROW(g.complete(r), Error);
  r = request(Role::executor, "x");
  r.temperature = 3.0;
  try {
    g.complete(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition_violation);
  }
}

TEST(Gateway, RepairsMalformedReplies) {
  auto backend = std::make_shared<QueueBackend>(
      std::deque<std::string>{"not json", "```json\n{\"answer\": 1}\n```", "{\"answer\": \"yes\"}"});
  Gateway g(backend, fast());
  const StructuredReply reply = g.complete_structured(request(Role::planner, "question"), [](const json& doc) {
    if (!doc.at("answer").is_string()) fail(ErrorCode::validation_error, "answer must be a string");
  });
  EXPECT_EQ(reply.document.at("answer"), "yes");
  EXPECT_EQ(reply.usage, (TokenUsage{30, 15}));
  ASSERT_EQ(backend->prompts.size(), 3u);
  EXPECT_NE(backend->prompts[2].find("answer must be a string"), std::string::npos);
}

TEST(Gateway, GivesUpAfterRepairBudget) {
  Gateway g(std::make_shared<QueueBackend>(std::deque<std::string>{"a", "b", "c"}), fast());
  try {
    g.complete_structured(request(Role::planner, "q"), [](const json&) {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::protocol_error);
  }
}

TEST(Gateway, WritesCallAuditTrail) {
  const fs::path file = fs::temp_directory_path() / ("mmia-gateway-" + std::to_string(::getpid()) + ".jsonl");
  fs::remove(file);
  GatewayOptions o = fast();
  o.audit_file = file;
  o.clock = Clock{true};
  {
    Gateway g(std::make_shared<QueueBackend>(std::deque<std::string>{"", "done"}), o);
    g.complete(request(Role::auditor, "check"));
  }
  const auto records = read_jsonl(file);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].at("role"), "auditor");
  EXPECT_EQ(records[0].at("attempts"), 2);
  EXPECT_EQ(records[0].at("response"), "done");
  EXPECT_EQ(records[0].at("at"), Clock{true}.now());
  fs::remove(file);
}

TEST(JsonExtraction, ToleratesProse) {
  EXPECT_EQ(extract_json_document("Sure! {\"a\": [1, 2]} hope that helps"), json({{"a", {1, 2}}}));
  EXPECT_EQ(extract_json_document("[1]"), json::array({1}));
  EXPECT_THROW(extract_json_document("no json here"), Error);
}

TEST(Prompts, ContextBlocksRoundTrip) {
  const json ctx{{"purpose", "plan"}, {"b", 2}, {"a", 1}};
  const std::string block = context_block(ctx);
  EXPECT_EQ(parse_context("preamble\n" + block + "\ntrailer"), ctx);
  EXPECT_THROW(parse_context("nothing"), Error);
  EXPECT_THROW(render_prompt("no-such-template", {}), Error);
  EXPECT_THROW(render_template("{{missing}}", {}), Error);
  EXPECT_EQ(render_template("a {{x}} b", {{"x", "1"}}), "a 1 b");
  EXPECT_EQ(canonical_dump(ctx), R"({"a":1,"b":2,"purpose":"plan"})");
}
