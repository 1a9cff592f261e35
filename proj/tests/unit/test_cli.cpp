#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include "mmia/case_studies.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int exit_code = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  static const fs::path data = fs::temp_directory_path() / ("mmia-cli-" + std::to_string(::getpid()));
  const std::string cmd = "MMIA_DATA_DIR='" + data.string() + "' MMIA_REPLAY=true '" + std::string(MMIA_CLI_PATH) +
                          "' " + args + " 2>&1";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string fixture(const std::string& name) {
  return "'" + (mmia::default_data_dir() / "fixtures" / (name + ".log.json")).string() + "'";
}

}  // namespace

TEST(Cli, AuditExitCodes) {
  const CliRun ok = cli("audit " + fixture("insurance-transplant-certified"));
  EXPECT_EQ(ok.exit_code, 0) << ok.out;
  EXPECT_NE(ok.out.find("certified"), std::string::npos);
  const CliRun bad = cli("audit " + fixture("insurance-enrollment-flawed"));
  EXPECT_EQ(bad.exit_code, 2) << bad.out;
  EXPECT_NE(bad.out.find("flagged"), std::string::npos);
}

TEST(Cli, SimulateCost) {
  const CliRun r = cli("simulate-cost --denovo 3500 --match 500 --fraction 0.8");
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("1100"), std::string::npos);
  EXPECT_NE(r.out.find("31.4%"), std::string::npos);
}

TEST(Cli, BadArgumentsExitWithOne) {
  EXPECT_EQ(cli("").exit_code, 1);
  EXPECT_EQ(cli("simulate-cost --fraction banana").exit_code, 1);
  EXPECT_EQ(cli("audit /nonexistent/log.json").exit_code, 1);
  EXPECT_EQ(cli("--version").exit_code, 0);
}
