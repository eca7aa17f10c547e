#include "ccx/host/bench.hpp"

#include <chrono>
#include <iomanip>
#include <ostream>

#include "ccx/host/scenario.hpp"
#include "ccx/host/urts.hpp"

namespace ccx::host {
namespace {

struct BenchFailure {
  std::string what;
};

void need(bool ok, const std::string& what) {
  if (!ok) throw BenchFailure{what};
}

void need(Status s, const std::string& what) {
  if (s != Status::kSuccess) throw BenchFailure{what + ": " + std::string(to_string(s))};
}

void need(const LeafResult& r, const std::string& what) { need(r.status, what); }

EnclaveId load(Runtime& rt, const std::filesystem::path& p) {
  auto man = Manifest::load(p);
  if (!man) throw BenchFailure{p.string() + ": " + man.error().message};
  auto eid = rt.create(*man);
  if (!eid) throw BenchFailure{"load " + p.string() + ": " + to_string(eid.error())};
  return *eid;
}

std::uint64_t ecall_value(Runtime& rt, EnclaveId e, Selector s, std::array<std::uint64_t, 4> args) {
  const EcallResult r = rt.ecall(e, 0, static_cast<std::uint64_t>(s), args);
  need(r.status, std::string(to_string(s)));
  return r.value;
}

GranuleNum resident(Machine& m, EnclaveId e, VirtAddr va) {
  const Secs* s = m.enclaves().find(e);
  auto it = s->pages.find(va);
  need(it != s->pages.end(), "page not resident");
  return it->second;
}

void write_back_round(Runtime& rt, EnclaveId e, VirtAddr va) {
  Driver& d = rt.driver();
  Machine& m = rt.machine();
  auto va_page = d.alloc_epc();
  need(va_page.has_value(), "EPC for VA page");
  need(d.epa(*va_page), "EPA");
  const PhysAddr slot = granule_base(*va_page);

  // EBLOCK, ETRACK, EWB, ELDU, then again ending in ELDB.
  for (bool blocked : {false, true}) {
    const GranuleNum g = resident(m, e, va);
    if (!m.memory().epcm_lookup(g).blocked) need(d.eblock(g), "EBLOCK");
    need(d.etrack(e), "ETRACK");
    need(d.ewb(g, slot), "EWB");
    d.unmap(va);
    d.free_epc(g);
    auto t = d.alloc_epc();
    need(t.has_value(), "EPC for reload");
    need(d.eld(blocked, va, e, *t, slot), blocked ? "ELDB" : "ELDU");
    d.map(va, *t);
  }
  need(d.eremove(*va_page), "EREMOVE VA");
  d.free_epc(*va_page);
}

void leaves_round(Runtime& rt, const std::filesystem::path& dir, EnclaveId notify, bool fixed) {
  Machine& m = rt.machine();
  Driver& d = rt.driver();
  const EnclaveId e = load(rt, dir / "enclave/debug.manifest");
  const VirtAddr base = rt.handle(e)->base;
  const VirtAddr data = base + 0x8000;
  const std::uint64_t rw = SecInfo{PageType::kReg, {true, true, false}}.pack();
  const std::uint64_t r_only = SecInfo{PageType::kReg, {true, false, false}}.pack();

  ecall_value(rt, e, Selector::kEcho, {1});

  const GranuleNum dg = resident(m, e, data);
  need(d.edbgwr(granule_base(dg) + 8, 0x5A5A), "EDBGWR");
  need(d.edbgrd(granule_base(dg) + 8), "EDBGRD");

  // SGX2: EAUG/EACCEPT, EMODPR + EACCEPT, EMODPE, EACCEPTCOPY, EMODT.
  const VirtAddr dyn = base + 0x20000;
  need(rt.alloc_pages(e, dyn, 1), "EAUG");
  need(d.emodpr(SecInfo{PageType::kReg, {true, false, false}}, resident(m, e, dyn)), "EMODPR");
  need(static_cast<Status>(ecall_value(rt, e, Selector::kEaccept, {dyn, r_only})), "EACCEPT");
  need(static_cast<Status>(ecall_value(rt, e, Selector::kEmodpe, {dyn, rw})), "EMODPE");
  const VirtAddr copy = base + 0x21000;
  auto g = d.alloc_epc();
  need(g.has_value(), "EPC for EAUG");
  need(d.eaug(e, copy, *g), "EAUG");
  d.map(copy, *g);
  need(static_cast<Status>(ecall_value(rt, e, Selector::kEacceptcopy, {copy, data, rw})),
       "EACCEPTCOPY");
  need(d.emodt(SecInfo{PageType::kTrim, {}}, *g), "EMODT");
  need(static_cast<Status>(ecall_value(rt, e, Selector::kEaccept, {copy, SecInfo{PageType::kTrim, {}}.pack()})),
       "EACCEPT TRIM");

  auto ti = rt.target_info(notify);
  need(ti.has_value(), "target info");
  auto rep = rt.report(e, *ti, ReportData{});
  need(rep.has_value(), "EREPORT");
  auto ok = rt.verify(notify, *rep);
  need(ok.has_value() && *ok, "report verification");

  if (fixed) write_back_round(rt, e, base + 0x9000);

  // AEX with the notify handler: ERESUME into the handler, EDECCSSA.
  VCpu& cpu = m.vcpu(0);
  cpu.irq.at.insert(cpu.enclave_steps + 10);
  const EcallResult c = rt.ecall(notify, 0, static_cast<std::uint64_t>(Selector::kCompute),
                                 {50, rt.handle(notify)->base + 0x8000, 3});
  need(c.status, "notify compute");
  need(c.aex_count == 1, "expected one AEX");

  need(rt.destroy(e), "destroy");
}

}  // namespace

std::vector<std::string> bench_suites() { return {"leaves", "oversubscribe"}; }

std::uint64_t BenchReport::mean_cost(Leaf l) const {
  const LeafStats& s = stats(l);
  return s.count ? s.cost / s.count : 0;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["mode"] = mode;
  j["granule_count"] = granule_count;
  j["reps"] = reps;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& info : kLeaves) {
    const LeafStats& s = stats(info.leaf);
    rows.push_back({{"leaf", std::string(info.name)},
                    {"count", s.count},
                    {"cost", s.cost},
                    {"mean_cost", mean_cost(info.leaf)}});
  }
  j["leaves"] = std::move(rows);
  if (!error.empty()) j["error"] = error;
  return j;
}

void BenchReport::write_text(std::ostream& os) const {
  os << "suite " << suite << ", mode " << mode << ", " << granule_count << " granules, " << reps
     << " reps\n";
  os << std::left << std::setw(12) << "leaf" << std::right << std::setw(10) << "count"
     << std::setw(16) << "cost" << std::setw(12) << "mean" << '\n';
  for (const auto& info : kLeaves) {
    const LeafStats& s = stats(info.leaf);
    os << std::left << std::setw(12) << info.name << std::right << std::setw(10) << s.count
       << std::setw(16) << s.cost << std::setw(12) << mean_cost(info.leaf) << '\n';
  }
  os << std::fixed << std::setprecision(1) << "wall " << wall_ms << " ms (informational)\n";
  if (!error.empty()) os << "error: " << error << '\n';
}

BenchReport run_bench(const Config& cfg, const std::string& suite, const BenchOptions& opts) {
  BenchReport rep;
  rep.suite = suite;
  rep.mode = std::string(to_string(cfg.mode));
  rep.granule_count = cfg.granule_count;
  rep.reps = suite == "leaves" ? opts.reps : 1;
  const auto t0 = std::chrono::steady_clock::now();

  if (suite == "oversubscribe") {
    ScenarioOptions so;
    const ScenarioReport r = run_scenario_file(cfg, opts.fixtures / "scenarios/oversubscribe.scn", so);
    rep.leaves = r.leaves;
    if (r.exit_code() != 0) rep.error = r.error.empty() ? r.failure : r.error;
  } else if (suite == "leaves") {
    Machine m(cfg);
    Runtime rt(m);
    try {
      const EnclaveId notify = load(rt, opts.fixtures / "enclave/notify.manifest");
      for (unsigned i = 0; i < opts.reps; ++i) {
        leaves_round(rt, opts.fixtures, notify, rt.driver().fixed_epc());
      }
    } catch (const BenchFailure& f) {
      rep.error = f.what;
    }
    for (const auto& info : kLeaves) rep.leaves[static_cast<std::size_t>(info.leaf)] = m.costs().stats(info.leaf);
  } else {
    rep.error = "unknown suite '" + suite + "'";
  }
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ccx::host
