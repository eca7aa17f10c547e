#include "ccx/host/inspect.hpp"

#include <iomanip>

#include "ccx/bytes.hpp"

namespace ccx::host {
namespace {

using nlohmann::json;

constexpr std::size_t kHeadBytes = 32;
constexpr Pas kAllPas[] = {Pas::kNormal, Pas::kSecure, Pas::kRealm, Pas::kRoot, Pas::kNoAccess};

json pas_counts(const GptSet& gpts, const GptSelector& sel) {
  std::array<std::uint64_t, 5> n{};
  for (Pas p : gpts.table(sel)) ++n[static_cast<std::size_t>(p)];
  json out = json::object();
  for (Pas p : kAllPas) out[std::string(to_string(p))] = n[static_cast<std::size_t>(p)];
  return out;
}

std::string hex_addr(std::uint64_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << v;
  return s.str();
}

json attribute_names(std::uint64_t a) {
  json out = json::array();
  if (a & kAttrInit) out.push_back("init");
  if (a & kAttrDebug) out.push_back("debug");
  if (a & kAttrProvisionKey) out.push_back("provisionkey");
  if (a & kAttrAexNotify) out.push_back("aexnotify");
  return out;
}

// Reads a page the way a debugger would: EDBGRD, one word at a time.
json debug_contents(Driver& d, GranuleNum g) {
  Bytes page(kGranuleSize);
  for (std::size_t off = 0; off < kGranuleSize; off += 8) {
    const LeafResult r = d.edbgrd(granule_base(g) + off);
    if (!r.succeeded()) return std::string(to_string(r.status));
    store_u64(page, off, r.value);
  }
  return json{{"sha256", to_hex(sha256(page))},
              {"head", to_hex(std::span(page).first(kHeadBytes))}};
}

}  // namespace

json inspect(Runtime& rt, const InspectOptions& opts) {
  Machine& m = rt.machine();
  const MachineMemory& mem = m.memory();
  const Config& cfg = m.config();
  json out;
  out["mode"] = std::string(to_string(cfg.mode));
  out["granule_count"] = mem.granule_count();
  out["epc"] = {{"base", cfg.epc_base},
                {"size", cfg.epc_size},
                {"free", rt.driver().epc_free()}};

  json gpt;
  gpt["system"] = pas_counts(mem.gpts(), GptSelector::system());
  json tables = json::array();
  for (EnclaveId e : mem.gpts().enclave_ids()) {
    json t = pas_counts(mem.gpts(), GptSelector::of(e));
    t["eid"] = to_underlying(e);
    tables.push_back(std::move(t));
  }
  gpt["enclaves"] = std::move(tables);
  out["gpt"] = std::move(gpt);

  std::map<std::string, std::uint64_t> by_type;
  std::uint64_t valid = 0;
  for (GranuleNum g = 0; g < mem.granule_count(); ++g) {
    const EpcmEntry& e = mem.epcm_lookup(g);
    if (!e.valid) continue;
    ++valid;
    ++by_type[std::string(to_string(e.type))];
  }
  out["epcm"] = {{"valid", valid}, {"by_type", by_type}};

  json roster = json::array();
  for (EnclaveId eid : m.enclaves().ids()) {
    const Secs* s = m.enclaves().find(eid);
    const EnclaveHandle* h = rt.handle(eid);
    json e;
    e["eid"] = to_underlying(eid);
    e["name"] = h ? h->name : "";
    e["base"] = hex_addr(s->base);
    e["size"] = hex_addr(s->size);
    e["attributes"] = attribute_names(s->attributes);
    e["initialized"] = s->initialized();
    e["mrenclave"] = to_hex(s->mrenclave);
    e["mrsigner"] = to_hex(s->mrsigner);
    e["isv_prod_id"] = s->isv_prod_id;
    e["isv_svn"] = s->isv_svn;
    e["secs_granule"] = s->granule;
    e["threads"] = h ? h->tcs.size() : 0;
    e["resident_pages"] = s->pages.size();
    if (opts.pages) {
      const bool readable = opts.debug_enclave && (s->attributes & kAttrDebug) != 0;
      json pages = json::array();
      for (const auto& [va, g] : s->pages) {
        const EpcmEntry& ent = mem.epcm_lookup(g);
        json p;
        p["va"] = hex_addr(va);
        p["granule"] = g;
        p["type"] = std::string(to_string(ent.type));
        p["perms"] = to_string(ent.perms);
        p["pending"] = ent.pending;
        p["modified"] = ent.modified;
        p["blocked"] = ent.blocked;
        p["content"] = readable && ent.type != PageType::kTcs ? debug_contents(rt.driver(), g)
                                                               : json("redacted");
        pages.push_back(std::move(p));
      }
      e["pages"] = std::move(pages);
    }
    roster.push_back(std::move(e));
  }
  out["enclaves"] = std::move(roster);
  return out;
}

void print_inspect(std::ostream& os, const json& s) {
  os << "mode " << s["mode"].get<std::string>() << ", " << s["granule_count"] << " granules, EPC "
     << s["epc"]["free"] << "/" << s["epc"]["size"] << " free\n";
  os << "system GPT:";
  for (auto& [k, v] : s["gpt"]["system"].items()) os << ' ' << k << '=' << v;
  os << "\nEPCM: " << s["epcm"]["valid"] << " valid";
  for (auto& [k, v] : s["epcm"]["by_type"].items()) os << ' ' << k << '=' << v;
  os << '\n';
  for (const auto& e : s["enclaves"]) {
    os << "enclave " << e["eid"] << " '" << e["name"].get<std::string>() << "' base "
       << e["base"].get<std::string>() << " size " << e["size"].get<std::string>()
       << (e["initialized"].get<bool>() ? " INIT" : " uninit") << '\n';
    os << "  mrenclave " << e["mrenclave"].get<std::string>() << '\n';
    os << "  mrsigner  " << e["mrsigner"].get<std::string>() << '\n';
    if (!e.contains("pages")) continue;
    for (const auto& p : e["pages"]) {
      os << "  " << std::setw(10) << p["va"].get<std::string>() << ' ' << std::setw(4)
         << p["type"].get<std::string>() << ' ' << p["perms"].get<std::string>() << " g"
         << p["granule"];
      if (p["pending"].get<bool>()) os << " pending";
      if (p["modified"].get<bool>()) os << " modified";
      if (p["blocked"].get<bool>()) os << " blocked";
      if (p["content"].is_string()) {
        os << ' ' << p["content"].get<std::string>();
      } else {
        os << " sha256 " << p["content"]["sha256"].get<std::string>().substr(0, 16) << "...";
      }
      os << '\n';
    }
  }
}

}  // namespace ccx::host
