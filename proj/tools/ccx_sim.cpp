#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ccx/bytes.hpp"
#include "ccx/host/bench.hpp"
#include "ccx/host/inspect.hpp"
#include "ccx/host/scenario.hpp"
#include "ccx/host/urts.hpp"

using namespace ccx;
using namespace ccx::host;

namespace {

struct Common {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  bool json = false;
  std::string trace;
};

Config load_config(const Common& c) {
  std::string path = c.config;
  if (path.empty()) {
    if (const char* env = std::getenv("CCX_SIM_CONFIG")) path = env;
  }
  Config cfg = path.empty() ? Config{} : Config::load(path);
  if (!c.mode.empty()) cfg.mode = *sim_mode_from_string(c.mode);
  if (c.seed) {
    cfg.crypto_seed = *c.seed;
    cfg.scheduler_seed = *c.seed;
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "machine config (JSON); default $CCX_SIM_CONFIG");
  app->add_option("--mode", c.mode, "override the memory mode")->check(CLI::IsMember({"sgx", "ccx"}));
  app->add_option("--seed", c.seed, "crypto and scheduler seed");
  app->add_flag("--json", c.json, "structured output");
  app->add_option("--trace", c.trace, "write the machine trace (JSON lines) here");
}

std::filesystem::path fixtures_dir() {
  if (const char* env = std::getenv("CCX_FIXTURES")) return env;
  return CCX_DEFAULT_FIXTURES;
}

int cmd_run(const Common& c, const std::string& script) {
  const Config cfg = load_config(c);
  ScenarioOptions o;
  if (!c.mode.empty()) o.mode = cfg.mode;
  std::ofstream trace;
  if (!c.trace.empty()) {
    trace.open(c.trace);
    if (!trace) throw std::runtime_error("cannot write " + c.trace);
    o.trace = &trace;
  }
  const ScenarioReport r = run_scenario_file(cfg, script, o);
  if (c.json) {
    r.write_jsonl(std::cout);
  } else {
    r.write_text(std::cout);
  }
  if (!r.error.empty()) std::cerr << script << ":" << r.error_line << ": " << r.error << '\n';
  if (!r.passed) std::cerr << script << ":" << r.failed_line << ": EXPECT failed\n";
  return r.exit_code();
}

int cmd_bench(const Common& c, const std::string& suite, unsigned reps, const std::string& fixtures) {
  const Config cfg = load_config(c);
  BenchOptions o;
  o.reps = reps;
  o.fixtures = fixtures.empty() ? fixtures_dir() : std::filesystem::path(fixtures);
  std::vector<std::string> suites = suite == "all" ? bench_suites() : std::vector<std::string>{suite};
  int rc = 0;
  for (const auto& s : suites) {
    const BenchReport r = run_bench(cfg, s, o);
    if (c.json) {
      std::cout << r.to_json().dump() << '\n';
    } else {
      r.write_text(std::cout);
    }
    if (!r.error.empty()) rc = 2;
  }
  return rc;
}

int cmd_inspect(const Common& c, const std::vector<std::string>& inputs, bool debug) {
  const Config cfg = load_config(c);
  Machine m(cfg);
  Runtime rt(m);
  for (const auto& in : inputs) {
    auto man = Manifest::load(in);
    if (!man) {
      std::cerr << in << ":" << man.error().line << ": " << man.error().message << '\n';
      return 2;
    }
    auto eid = rt.create(*man);
    if (!eid) {
      std::cerr << in << ": " << to_string(eid.error()) << '\n';
      return 2;
    }
  }
  InspectOptions o;
  o.debug_enclave = debug;
  const auto snap = inspect(rt, o);
  if (c.json) {
    std::cout << snap.dump(2) << '\n';
  } else {
    print_inspect(std::cout, snap);
  }
  if (!c.trace.empty()) {
    std::ofstream t(c.trace);
    m.trace().write_jsonl(t);
  }
  return 0;
}

int cmd_attest(const Common& c, const std::string& a_path, const std::string& b_path,
               const std::string& expect_b, const std::string& tamper) {
  const Config cfg = load_config(c);
  Machine m(cfg);
  Runtime rt(m);
  auto load = [&](const std::string& p) -> std::pair<Manifest, EnclaveId> {
    auto man = Manifest::load(p);
    if (!man) throw std::runtime_error(p + ":" + std::to_string(man.error().line) + ": " + man.error().message);
    auto eid = rt.create(*man);
    if (!eid) throw std::runtime_error(p + ": " + to_string(eid.error()));
    return {*man, *eid};
  };
  auto [ma, a] = load(a_path);
  auto [mb, b] = load(b_path);

  // The identity A is willing to accept for B: B's own manifest unless a
  // reference build is given.
  Manifest ref = mb;
  if (!expect_b.empty()) {
    auto r = Manifest::load(expect_b);
    if (!r) throw std::runtime_error(expect_b + ": " + r.error().message);
    ref = *r;
  }
  auto ref_pages = materialize(ref);
  if (!ref_pages) throw std::runtime_error("reference manifest: " + ref_pages.error().message);
  const Digest want_b = expected_mrenclave(ref, *ref_pages);

  struct Way {
    std::string name;
    EnclaveId from, to;
    bool tampered;
    bool mac_ok = false;
    Digest seen{};
  };
  std::vector<Way> ways = {{"A verifies B", b, a, tamper == "b"}, {"B verifies A", a, b, tamper == "a"}};
  for (auto& w : ways) {
    auto ti = rt.target_info(w.to);
    if (!ti) throw std::runtime_error("target info: " + std::string(to_string(ti.error())));
    auto rep = rt.report(w.from, *ti, ReportData{});
    if (!rep) throw std::runtime_error("report: " + std::string(to_string(rep.error())));
    if (w.tampered) rep->body.reportdata[0] ^= 1;
    auto ok = rt.verify(w.to, *rep);
    if (!ok) throw std::runtime_error("verify: " + std::string(to_string(ok.error())));
    w.mac_ok = *ok;
    w.seen = rep->body.mrenclave;
  }
  const bool b_identity = ways[0].seen == want_b;
  const bool a_identity = ways[1].seen == rt.handle(a)->mrenclave;
  const bool pass = ways[0].mac_ok && ways[1].mac_ok && a_identity && b_identity;

  if (c.json) {
    nlohmann::json j;
    j["a"] = {{"manifest", a_path}, {"mrenclave", to_hex(rt.handle(a)->mrenclave)}};
    j["b"] = {{"manifest", b_path}, {"mrenclave", to_hex(rt.handle(b)->mrenclave)},
              {"expected_mrenclave", to_hex(want_b)}};
    j["a_verifies_b"] = {{"mac", ways[0].mac_ok}, {"identity", b_identity}};
    j["b_verifies_a"] = {{"mac", ways[1].mac_ok}, {"identity", a_identity}};
    j["verdict"] = pass ? "trusted" : "rejected";
    std::cout << j.dump() << '\n';
  } else {
    for (std::size_t i = 0; i < ways.size(); ++i) {
      const bool id_ok = i == 0 ? b_identity : a_identity;
      std::cout << ways[i].name << ": report MAC " << (ways[i].mac_ok ? "ok" : "FAIL") << ", mrenclave "
                << to_hex(ways[i].seen).substr(0, 16) << "... "
                << (id_ok ? "matches" : "MISMATCH (expected " + to_hex(want_b).substr(0, 16) + "...)")
                << '\n';
    }
    std::cout << (pass ? "trusted" : "rejected") << '\n';
  }
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator for SGX enclave leaves on a granule-protected machine"};
  app.require_subcommand(1);

  Common run_c, bench_c, inspect_c, attest_c;

  std::string script;
  auto* run = app.add_subcommand("run", "run a scenario script");
  add_common(run, run_c);
  run->add_option("scenario", script, "scenario file")->required()->check(CLI::ExistingFile);

  std::string suite = "leaves";
  unsigned reps = 100;
  std::string fixtures;
  auto* bench = app.add_subcommand("bench", "per-leaf cost benchmark");
  add_common(bench, bench_c);
  bench->add_option("--suite", suite, "leaves, oversubscribe or all")
      ->check(CLI::IsMember({"leaves", "oversubscribe", "all"}));
  bench->add_option("--reps", reps, "rounds of the leaves suite")->check(CLI::PositiveNumber);
  bench->add_option("--fixtures", fixtures, "fixture directory ($CCX_FIXTURES)");

  std::vector<std::string> manifests;
  bool debug = false;
  auto* insp = app.add_subcommand("inspect", "load manifests and dump the machine state");
  add_common(insp, inspect_c);
  insp->add_option("manifests", manifests, "enclave manifests")->check(CLI::ExistingFile);
  insp->add_flag("--debug-enclave", debug, "show contents of DEBUG enclaves");

  std::string a_path, b_path, expect_b, tamper;
  auto* att = app.add_subcommand("attest", "mutual local attestation between two enclaves");
  add_common(att, attest_c);
  att->add_option("a", a_path, "first enclave manifest")->required()->check(CLI::ExistingFile);
  att->add_option("b", b_path, "second enclave manifest")->required()->check(CLI::ExistingFile);
  att->add_option("--expect-b", expect_b, "reference manifest for the identity A expects of B")
      ->check(CLI::ExistingFile);
  att->add_option("--tamper", tamper, "flip a byte in the report produced by a or b")
      ->check(CLI::IsMember({"a", "b"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_c, script);
    if (*bench) return cmd_bench(bench_c, suite, reps, fixtures);
    if (*insp) return cmd_inspect(inspect_c, manifests, debug);
    if (*att) return cmd_attest(attest_c, a_path, b_path, expect_b, tamper);
  } catch (const std::exception& e) {
    std::cerr << "ccx-sim: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
