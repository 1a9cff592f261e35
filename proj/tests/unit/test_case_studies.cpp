#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "mmia/case_studies.hpp"
#include "mmia/error.hpp"

using namespace mmia;
namespace fs = std::filesystem;

TEST(CaseStudies, OneCorrectAndOneFlawedPerDomain) {
  std::map<std::string, std::pair<int, int>> per;
  for (const CaseStudy& s : case_studies()) {
    auto& [ok, bad] = per[s.source.scenario];
    (s.certified ? ok : bad)++;
    EXPECT_EQ(s.certified, !s.flagged_rule.has_value()) << s.name;
  }
  ASSERT_EQ(per.size(), 4u);
  for (const auto& [scenario, counts] : per) {
    EXPECT_EQ(counts, std::make_pair(1, 1)) << scenario;
  }
  EXPECT_EQ(find_case_study("drg-fz19-certified").source.scenario, "drg");
  EXPECT_THROW(find_case_study("nope"), Error);
}

TEST(CaseStudies, ShippedFixturesMatchRegeneration) {
  const fs::path dir = fs::temp_directory_path() / ("mmia-fixtures-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  export_fixtures(dir, PackRegistry::builtin(), Clock{true});
  const fs::path shipped = default_data_dir() / "fixtures";
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path name = entry.path().filename();
    ASSERT_TRUE(fs::exists(shipped / name)) << name;
    EXPECT_EQ(read_text_file(entry.path()), read_text_file(shipped / name)) << name;
    ++compared;
  }
  EXPECT_EQ(compared, static_cast<int>(2 * case_studies().size()));
  fs::remove_all(dir);
}

TEST(CaseStudies, FlawedChainsDifferOnlyInVerdictsAndAnswer) {
  const auto& packs = PackRegistry::builtin();
  const Clock clock{true};
  const auto kb = fixture_kb(packs, clock);
  const CaseStudy& study = find_case_study("ehr-allergy-conflict-flawed");
  const ExecutionLog flawed = build_fixture_log(study, packs, kb, clock);
  const ExecutionLog honest = overlook_violations(flawed, packs.get("ehr"));
  EXPECT_EQ(to_json(honest), to_json(flawed));  // nothing left to overlook
  ASSERT_TRUE(flawed.final_answer);
  for (const auto* step : flatten_steps(flawed)) {
    for (const Claim& c : step->atoms) {
      if (is_verdict_claim(c)) EXPECT_NE(c.value, Value::text("violated")) << c.text();
    }
  }
}
