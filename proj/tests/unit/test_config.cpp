#include <gtest/gtest.h>

#include <cstdlib>

#include "mmia/config.hpp"
#include "mmia/error.hpp"

using namespace mmia;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::io_error;
}

// Sets an environment variable for the lifetime of the guard.
struct EnvGuard {
  std::string name;
  EnvGuard(std::string n, const char* value) : name(std::move(n)) { ::setenv(name.c_str(), value, 1); }
  ~EnvGuard() { ::unsetenv(name.c_str()); }
};

}  // namespace

TEST(Config, ParsesKeyValueText) {
  const EngineConfig c = parse_config_text(R"(
# comment
backend = grounded
consensus.n = 5          # trailing comment
consensus.rule = majority
similarity_threshold = 0.75
budget.max_steps = 40
seed_pack_axioms = off
data_dir = /tmp/somewhere
api_key = s3cret
)");
  EXPECT_EQ(c.consensus_n, 5);
  EXPECT_EQ(c.consensus_rule, ConsensusRule::majority);
  EXPECT_DOUBLE_EQ(c.similarity_threshold, 0.75);
  EXPECT_EQ(c.budget.max_steps, 40);
  EXPECT_FALSE(c.seed_pack_axioms);
  EXPECT_EQ(c.data_dir, "/tmp/somewhere");
  EXPECT_EQ(c.api_key, "s3cret");
}

TEST(Config, RejectsBadInput) {
  EXPECT_EQ(code_of([] { parse_config_text("colour = blue"); }), ErrorCode::configuration_error);
  EXPECT_EQ(code_of([] { parse_config_text("consensus.n"); }), ErrorCode::configuration_error);
  EXPECT_EQ(code_of([] { parse_config_text("consensus.n = three"); }), ErrorCode::configuration_error);
  EXPECT_EQ(code_of([] { parse_config_text("replay = maybe"); }), ErrorCode::configuration_error);
  EXPECT_EQ(code_of([] { parse_config_text("backend = magic"); }), ErrorCode::configuration_error);
  EXPECT_EQ(code_of([] { parse_config_text("consensus.rule = plurality"); }), ErrorCode::configuration_error);
}

TEST(Config, ValidationCatchesInconsistentSettings) {
  EngineConfig c;
  EXPECT_NO_THROW(validate(c));
  c.verifier = VerifierMode::llm;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::configuration_error);
  c = EngineConfig{};
  c.similarity_threshold = 1.5;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::configuration_error);
  c = EngineConfig{};
  c.backend = BackendKind::scripted;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::configuration_error);
  c = EngineConfig{};
  c.backend = BackendKind::http;
  c.backend_url = "https://example.invalid/v1";
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::configuration_error);
  c.backend_model = "m";
  EXPECT_NO_THROW(validate(c));
  c = EngineConfig{};
  c.consensus_n = 0;
  EXPECT_EQ(code_of([&] { validate(c); }), ErrorCode::configuration_error);
}

TEST(Config, EnvironmentOverridesFileValues) {
  EnvGuard n("MMIA_CONSENSUS_N", "5");
  EnvGuard t("MMIA_SIMILARITY_THRESHOLD", "0.9");
  EngineConfig c = parse_config_text("consensus.n = 3\n");
  apply_env_overrides(c);
  EXPECT_EQ(c.consensus_n, 5);
  EXPECT_DOUBLE_EQ(c.similarity_threshold, 0.9);
  const EngineConfig loaded = load_config({});
  EXPECT_EQ(loaded.consensus_n, 5);
}

TEST(Config, BadEnvironmentValueIsAConfigurationError) {
  EnvGuard g("MMIA_BUDGET_MAX_DEPTH", "deep");
  EXPECT_EQ(code_of([] { load_config({}); }), ErrorCode::configuration_error);
}

TEST(Config, MissingFileIsAConfigurationError) {
  EXPECT_EQ(code_of([] { load_config("/nonexistent/mmia.conf"); }), ErrorCode::configuration_error);
}

TEST(Config, TextRoundTrip) {
  EngineConfig c;
  c.consensus_n = 5;
  c.consensus_rule = ConsensusRule::majority;
  c.similarity_threshold = 0.85;
  c.replay = true;
  c.seed = 77;
  c.port = 0;
  c.web_fixtures = "/srv/web";
  const EngineConfig back = parse_config_text(to_config_text(c));
  EXPECT_EQ(to_config_text(back), to_config_text(c));
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.web_fixtures, "/srv/web");
  // The api key is a secret and never written back out.
  c.api_key = "k";
  EXPECT_EQ(to_config_text(c).find("api_key"), std::string::npos);
}

TEST(Config, EveryDocumentedKeyIsAccepted) {
  for (const auto& [key, doc] : config_keys()) {
    EXPECT_FALSE(doc.empty()) << key;
    EngineConfig c;
    std::string value = "1";
    if (key == "backend") value = "grounded";
    if (key == "verifier") value = "deterministic";
    if (key == "consensus.rule") value = "unanimity";
    if (key == "similarity_threshold") value = "0.5";
    EXPECT_NO_THROW(apply_config_value(c, key, value)) << key;
  }
  EXPECT_FALSE(version().empty());
}

TEST(Config, VerifierPanelFollowsTheConfig) {
  EngineConfig c;
  c.consensus_n = 5;
  Gateway gateway(make_backend(c, PackRegistry::builtin()));
  const auto panel = make_verifiers(c, gateway);
  ASSERT_EQ(panel.size(), 5u);
  const ConsensusPolicy p = consensus_policy(c, gateway.backend().id());
  EXPECT_EQ(p.n, 5);
  EXPECT_NO_THROW(validate_policy(p));
}
