#include <gtest/gtest.h>

#include <sstream>

#include "ccx/host/scenario.hpp"
#include "support/fixtures.hpp"

using namespace ccx;
using namespace ccx::host;
using testutil::fixture;

namespace {

ScenarioReport run(const std::string& name, SimMode mode, const std::string& cfg = "configs/default.json") {
  ScenarioOptions o;
  o.mode = mode;
  return run_scenario_file(Config::load(fixture(cfg)), fixture("scenarios/" + name), o);
}

std::string jsonl(const ScenarioReport& r) {
  std::ostringstream s;
  r.write_jsonl(s);
  return s.str();
}

}  // namespace

class ScenarioModes : public ::testing::TestWithParam<SimMode> {};

TEST_P(ScenarioModes, ShippedScenariosPass) {
  for (const char* s : {"lifecycle.scn", "sealunseal.scn", "attestation.scn", "interrupts.scn",
                        "dynamic.scn"}) {
    const ScenarioReport r = run(s, GetParam());
    EXPECT_EQ(r.exit_code(), 0) << s << ": " << r.error << r.failure;
  }
}

TEST_P(ScenarioModes, FailingExpectStopsWithExitOne) {
  const ScenarioReport r = run("failing_expect.scn", GetParam());
  EXPECT_EQ(r.exit_code(), 1);
  EXPECT_EQ(r.failed_line, 4u);
  EXPECT_NE(r.failure.find("actual 4"), std::string::npos);
  // The command after the failure never ran.
  EXPECT_EQ(r.events.back()["line"], 4);
  EXPECT_TRUE(r.summary()["snapshot"].contains("enclaves"));
}

INSTANTIATE_TEST_SUITE_P(Modes, ScenarioModes, ::testing::Values(SimMode::kSgx, SimMode::kCcx));

TEST(Scenario, ModesAgreeOnFunctionalOutput) {
  for (const char* s : {"lifecycle.scn", "sealunseal.scn", "attestation.scn", "interrupts.scn"}) {
    EXPECT_EQ(run(s, SimMode::kSgx).functional(), run(s, SimMode::kCcx).functional()) << s;
  }
}

TEST(Scenario, OversubscribeSwapsOnlyInSgxMode) {
  const ScenarioReport sgx = run("oversubscribe.scn", SimMode::kSgx, "configs/small_epc.json");
  const ScenarioReport ccx = run("oversubscribe.scn", SimMode::kCcx, "configs/small_epc.json");
  ASSERT_EQ(sgx.exit_code(), 0) << sgx.error << sgx.failure;
  ASSERT_EQ(ccx.exit_code(), 0) << ccx.error << ccx.failure;
  EXPECT_EQ(sgx.functional(), ccx.functional());
  EXPECT_GE(sgx.leaf_count(Leaf::kEwb), 64u);
  EXPECT_EQ(ccx.leaf_count(Leaf::kEwb), 0u);
  EXPECT_EQ(ccx.leaf_count(Leaf::kEldu), 0u);
}

TEST(Scenario, ReportsAreByteIdentical) {
  EXPECT_EQ(jsonl(run("sealunseal.scn", SimMode::kSgx)), jsonl(run("sealunseal.scn", SimMode::kSgx)));
  EXPECT_EQ(jsonl(run("interrupts.scn", SimMode::kCcx)), jsonl(run("interrupts.scn", SimMode::kCcx)));
}

TEST(Scenario, SetModeRespectsOverride) {
  const std::string script = "SET_MODE ccx\nCREATE a basic.manifest\n";
  ScenarioOptions o;
  o.base_dir = fixture("enclave");
  EXPECT_EQ(run_scenario(Config{}, script, o).mode, "ccx");
  o.mode = SimMode::kSgx;
  const ScenarioReport r = run_scenario(Config{}, script, o);
  EXPECT_EQ(r.mode, "sgx");
  EXPECT_EQ(r.events[0]["stats"]["ignored"], true);
}

TEST(Scenario, ParseErrorsCarryLineNumbers) {
  auto bad = parse_scenario("# c\nCREATE a x.manifest\nFROB 1\n");
  ASSERT_FALSE(bad.has_value());
  EXPECT_EQ(bad.error().line, 3u);
  auto arity = parse_scenario("\nECALL a\n");
  ASSERT_FALSE(arity.has_value());
  EXPECT_EQ(arity.error().line, 2u);
  auto quote = parse_scenario("SEAL a mrenclave \"open as b\n");
  ASSERT_FALSE(quote.has_value());
  EXPECT_EQ(quote.error().message, "unterminated string");
  const ScenarioReport r = run_scenario(Config{}, "ECALL a echo 1\n FROB\n");
  EXPECT_EQ(r.exit_code(), 2);
  EXPECT_EQ(r.error_line, 2u);
}

TEST(Scenario, UnknownEntitiesAreErrors) {
  ScenarioOptions o;
  o.base_dir = fixture("enclave");
  const ScenarioReport r = run_scenario(Config{}, "CREATE a basic.manifest\nECALL b echo 1\n", o);
  EXPECT_EQ(r.exit_code(), 2);
  EXPECT_EQ(r.error_line, 2u);
  EXPECT_NE(r.error.find("unknown enclave 'b'"), std::string::npos);
  const ScenarioReport u = run_scenario(Config{}, "CREATE a basic.manifest\nUNSEAL a nope\n", o);
  EXPECT_NE(u.error.find("unknown blob"), std::string::npos);
}

TEST(Scenario, FailedCreateIsAResultNotAnError) {
  ScenarioOptions o;
  o.base_dir = fixture("enclave");
  const ScenarioReport r = run_scenario(
      Config{}, "CREATE a basic.manifest\nCREATE b basic.manifest\nEXPECT mrenclave.a == mrenclave.b\n", o);
  EXPECT_EQ(r.exit_code(), 0) << r.error << r.failure;
  EXPECT_NE(r.events[0]["stats"]["eid"], r.events[1]["stats"]["eid"]);
}

TEST(Scenario, SummaryCountsLeaves) {
  const ScenarioReport r = run("lifecycle.scn", SimMode::kSgx);
  const auto s = r.summary();
  EXPECT_EQ(s["leaves"]["ECREATE"]["count"], 1);
  EXPECT_EQ(s["leaves"]["EINIT"]["count"], 1);
  EXPECT_GE(s["leaves"]["EENTER"]["count"].get<int>(), 4);
  EXPECT_GT(s["total_cost"].get<std::uint64_t>(), 0u);
}
