#include "ccx/host/scenario.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <memory>
#include <iomanip>
#include <sstream>

#include "ccx/bytes.hpp"
#include "ccx/host/inspect.hpp"
#include "ccx/host/urts.hpp"

namespace ccx::host {
namespace {

using nlohmann::json;

struct Abort {
  std::string message;
};

std::optional<std::uint64_t> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Whitespace split; double quotes group words and are kept on the token.
Expected<std::vector<std::string>, std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size() || line[i] == '#') break;
    std::string tok;
    if (line[i] == '"') {
      tok.push_back('"');
      ++i;
      bool closed = false;
      while (i < line.size()) {
        if (line[i] == '\\' && i + 1 < line.size()) {
          tok.push_back(line[i + 1]);
          i += 2;
          continue;
        }
        if (line[i] == '"') {
          closed = true;
          ++i;
          break;
        }
        tok.push_back(line[i++]);
      }
      if (!closed) return Unexpected(std::string("unterminated string"));
      tok.push_back('"');
    } else {
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) tok.push_back(line[i++]);
    }
    out.push_back(std::move(tok));
  }
  return out;
}

bool is_quoted(const std::string& s) { return s.size() >= 2 && s.front() == '"' && s.back() == '"'; }
std::string unquote(const std::string& s) { return is_quoted(s) ? s.substr(1, s.size() - 2) : s; }

struct Arity {
  std::string_view op;
  std::size_t min;
  std::size_t max;
};

constexpr Arity kCommands[] = {
    {"SET_MODE", 1, 1}, {"CREATE", 2, 2},  {"DESTROY", 1, 1},   {"ECALL", 2, 8},
    {"INJECT_IRQ", 2, 2}, {"SWAP_OUT", 2, 2}, {"SWAP_IN", 2, 2}, {"ALLOC", 3, 3},
    {"ATTEST", 2, 2},   {"SEAL", 5, 5},    {"UNSEAL", 2, 2},    {"TAMPER", 2, 2},
    {"EXPECT", 3, 3},
};

class Interpreter {
 public:
  Interpreter(const Config& cfg, const ScenarioOptions& opts, ScenarioReport& rep)
      : cfg_(cfg), opts_(opts), rep_(rep) {
    if (opts.mode) cfg_.mode = *opts.mode;
    build();
  }

  ~Interpreter() { teardown(); }

  // Returns false once the script must stop.
  bool exec(const ScenarioLine& l) {
    json ev;
    ev["line"] = l.line;
    ev["cmd"] = l.text;
    out_ = json::object();
    stats_ = json::object();
    bool keep_going = true;
    if (l.op == "SET_MODE") set_mode(l);
    else if (l.op == "CREATE") create(l);
    else if (l.op == "DESTROY") destroy(l);
    else if (l.op == "ECALL") ecall(l);
    else if (l.op == "INJECT_IRQ") inject(l);
    else if (l.op == "SWAP_OUT" || l.op == "SWAP_IN") swap(l);
    else if (l.op == "ALLOC") alloc(l);
    else if (l.op == "ATTEST") attest(l);
    else if (l.op == "SEAL") seal(l);
    else if (l.op == "UNSEAL") unseal(l);
    else if (l.op == "TAMPER") tamper(l);
    else if (l.op == "EXPECT") keep_going = expect(l);
    ev["out"] = out_;
    if (!stats_.empty()) ev["stats"] = stats_;
    rep_.events.push_back(std::move(ev));
    if (l.op != "EXPECT") last_ = {{"out", out_}, {"stats", stats_}};
    return keep_going;
  }

  void finish() { teardown(); }

 private:
  void build() {
    m_ = std::make_unique<Machine>(cfg_);
    rt_ = std::make_unique<Runtime>(*m_);
    rep_.mode = std::string(to_string(cfg_.mode));
  }

  void teardown() {
    if (!m_) return;
    for (std::size_t i = 0; i < kLeafCount; ++i) {
      const LeafStats& s = m_->costs().stats(static_cast<Leaf>(i));
      rep_.leaves[i].count += s.count;
      rep_.leaves[i].cost += s.cost;
    }
    rep_.swap_outs += rt_->swap().ewb_count();
    rep_.swap_ins += rt_->swap().eldu_count();
    if (opts_.trace) m_->trace().write_jsonl(*opts_.trace);
    rt_.reset();
    m_.reset();
  }

  EnclaveId enclave(const std::string& name) const {
    auto it = names_.find(name);
    if (it == names_.end()) throw Abort{"unknown enclave '" + name + "'"};
    return it->second;
  }

  std::uint64_t number(const std::string& s) const {
    auto v = parse_number(s);
    if (!v) throw Abort{"bad number '" + s + "'"};
    return *v;
  }

  // number | base[+off] | shared[+off]
  std::uint64_t address_arg(const std::string& s, EnclaveId eid) const {
    auto rel = [&](std::string_view prefix, std::uint64_t origin) -> std::optional<std::uint64_t> {
      if (!std::string_view(s).starts_with(prefix)) return std::nullopt;
      std::string_view rest = std::string_view(s).substr(prefix.size());
      if (rest.empty()) return origin;
      if (rest.front() != '+') return std::nullopt;
      auto off = parse_number(rest.substr(1));
      if (!off) return std::nullopt;
      return origin + *off;
    };
    if (auto v = rel("base", rt_->handle(eid)->base)) return *v;
    if (auto v = rel("shared", rt_->shared())) return *v;
    return number(s);
  }

  void set_mode(const ScenarioLine& l) {
    auto mode = sim_mode_from_string(l.args[0]);
    if (!mode) throw Abort{"unknown mode '" + l.args[0] + "'"};
    if (opts_.mode) {
      stats_["ignored"] = true;  // command-line override
      return;
    }
    if (!names_.empty()) throw Abort{"SET_MODE after CREATE"};
    if (*mode == cfg_.mode) return;
    teardown();
    cfg_.mode = *mode;
    build();
  }

  void create(const ScenarioLine& l) {
    const std::string& name = l.args[0];
    if (names_.count(name)) throw Abort{"enclave '" + name + "' already exists"};
    std::filesystem::path p = unquote(l.args[1]);
    if (p.is_relative()) p = opts_.base_dir / p;
    auto man = Manifest::load(p);
    if (!man) throw Abort{p.string() + ":" + std::to_string(man.error().line) + ": " + man.error().message};
    auto eid = rt_->create(*man);
    if (!eid) {
      out_["status"] = std::string(to_string(eid.error().status));
      out_["step"] = eid.error().step;
      return;
    }
    names_[name] = *eid;
    const EnclaveHandle* h = rt_->handle(*eid);
    out_["status"] = "SUCCESS";
    out_["mrenclave"] = to_hex(h->mrenclave);
    stats_["eid"] = to_underlying(*eid);
  }

  void destroy(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    const Status s = rt_->destroy(eid);
    out_["status"] = std::string(to_string(s));
    if (s == Status::kSuccess) names_.erase(l.args[0]);
  }

  void ecall(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    auto sel = selector_from_string(l.args[1]);
    if (!sel) throw Abort{"unknown selector '" + l.args[1] + "'"};
    std::array<std::uint64_t, 4> args{};
    std::size_t n = 0, tcs = 0;
    unsigned vcpu = 0;
    for (std::size_t i = 2; i < l.args.size(); ++i) {
      const std::string& a = l.args[i];
      if (a.starts_with("tcs=")) {
        tcs = number(a.substr(4));
      } else if (a.starts_with("vcpu=")) {
        vcpu = static_cast<unsigned>(number(a.substr(5)));
        if (vcpu >= cfg_.vcpus) throw Abort{"no vcpu " + a.substr(5)};
      } else {
        if (n == args.size()) throw Abort{"too many ECALL arguments"};
        args[n++] = address_arg(a, eid);
      }
    }
    const EcallResult r = rt_->ecall(eid, tcs, static_cast<std::uint64_t>(*sel), args, vcpu);
    out_["status"] = std::string(to_string(r.status));
    if (r.ok()) {
      out_["value"] = r.value;
      out_["value2"] = r.value2;
    }
    out_["fault"] = r.fault ? r.fault->reason : "none";
    stats_["aex"] = r.aex_count;
    stats_["ocalls"] = r.ocalls;
    stats_["swap_ins"] = r.swap_ins;
    stats_["steps"] = r.steps;
  }

  void inject(const ScenarioLine& l) {
    const std::uint64_t v = number(l.args[0]);
    if (v >= cfg_.vcpus) throw Abort{"no vcpu " + l.args[0]};
    VCpu& cpu = m_->vcpu(static_cast<unsigned>(v));
    const std::string& when = l.args[1];
    if (when == "every") {
      cpu.irq.every_step = true;
    } else if (when == "off") {
      cpu.irq.every_step = false;
      cpu.irq.at.clear();
    } else {
      cpu.irq.at.insert(cpu.enclave_steps + number(when));
    }
  }

  void swap(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    const VirtAddr va = rt_->handle(eid)->base + number(l.args[1]);
    const Status s = l.op == "SWAP_OUT" ? rt_->swap().swap_out(eid, va) : rt_->swap().swap_in(eid, va);
    out_["status"] = std::string(to_string(s));
  }

  void alloc(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    const VirtAddr va = rt_->handle(eid)->base + number(l.args[1]);
    const Status s = rt_->alloc_pages(eid, va, number(l.args[2]));
    out_["status"] = std::string(to_string(s));
  }

  void attest(const ScenarioLine& l) {
    const AttestResult r = rt_->attest(enclave(l.args[0]), enclave(l.args[1]));
    out_["status"] = std::string(to_string(r.status));
    out_["a_verifies_b"] = r.a_verifies_b;
    out_["b_verifies_a"] = r.b_verifies_a;
    out_["verdict"] = r.a_verifies_b && r.b_verifies_a ? "both"
                      : r.a_verifies_b                 ? "a"
                      : r.b_verifies_a                 ? "b"
                                                       : "none";
    out_["a_sees"] = to_hex(r.a_sees);
    out_["b_sees"] = to_hex(r.b_sees);
  }

  // SEAL <enclave> <mrenclave|mrsigner> "<payload>" as <blob>
  void seal(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    std::uint16_t policy = 0;
    if (l.args[1] == "mrenclave") policy = kSealPolicyMrEnclave;
    else if (l.args[1] == "mrsigner") policy = kSealPolicyMrSigner;
    else throw Abort{"seal policy must be mrenclave or mrsigner"};
    if (!is_quoted(l.args[2])) throw Abort{"payload must be quoted"};
    if (l.args[3] != "as") throw Abort{"expected 'as <name>'"};
    const std::string payload = unquote(l.args[2]);
    auto blob = rt_->seal(eid, policy, Bytes(payload.begin(), payload.end()));
    if (!blob) {
      out_["status"] = std::string(to_string(blob.error()));
      return;
    }
    out_["status"] = "SUCCESS";
    out_["bytes"] = blob->size();
    blobs_[l.args[4]] = std::move(*blob);
  }

  void unseal(const ScenarioLine& l) {
    const EnclaveId eid = enclave(l.args[0]);
    auto it = blobs_.find(l.args[1]);
    if (it == blobs_.end()) throw Abort{"unknown blob '" + l.args[1] + "'"};
    auto plain = rt_->unseal(eid, it->second);
    if (!plain) {
      out_["status"] = std::string(to_string(plain.error()));
      return;
    }
    out_["status"] = "SUCCESS";
    out_["payload"] = std::string(plain->begin(), plain->end());
  }

  void tamper(const ScenarioLine& l) {
    auto it = blobs_.find(l.args[0]);
    if (it == blobs_.end()) throw Abort{"unknown blob '" + l.args[0] + "'"};
    const std::uint64_t off = number(l.args[1]);
    if (off >= it->second.size()) throw Abort{"offset past the end of the blob"};
    it->second[off] ^= 0x01;
  }

  json lookup(const std::string& key) const {
    if (auto dot = key.find('.'); dot != std::string::npos) {
      const std::string head = key.substr(0, dot);
      const std::string tail = key.substr(dot + 1);
      if (head == "count" || head == "cost") {
        auto leaf = leaf_from_string(tail);
        if (!leaf) throw Abort{"unknown leaf '" + tail + "'"};
        const LeafStats total = leaf_total(*leaf);
        return head == "count" ? total.count : total.cost;
      }
      if (head == "mrenclave" || head == "mrsigner" || head == "initialized") {
        const Secs* s = m_->enclaves().find(enclave(tail));
        if (head == "initialized") return s->initialized();
        return to_hex(head == "mrenclave" ? s->mrenclave : s->mrsigner);
      }
      throw Abort{"unknown key '" + key + "'"};
    }
    if (key == "enclaves") return names_.size();
    if (key == "epc_free") return rt_->driver().epc_free();
    if (key == "ewb") return leaf_total(Leaf::kEwb).count;
    if (key == "eldu") return leaf_total(Leaf::kEldu).count;
    for (const char* part : {"out", "stats"}) {
      if (last_.contains(part) && last_[part].contains(key)) return last_[part][key];
    }
    if (last_.is_null()) throw Abort{"EXPECT " + key + " before any command"};
    return "none";
  }

  LeafStats leaf_total(Leaf l) const {
    LeafStats s = rep_.leaves[static_cast<std::size_t>(l)];
    s.count += m_->costs().stats(l).count;
    s.cost += m_->costs().stats(l).cost;
    return s;
  }

  static std::string show(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  bool expect(const ScenarioLine& l) {
    const json lhs = lookup(l.args[0]);
    const std::string& op = l.args[1];
    const std::string& r = l.args[2];
    json rhs;
    if (is_quoted(r)) {
      rhs = unquote(r);
    } else if (auto n = parse_number(r)) {
      rhs = *n;
    } else if (r.find('.') != std::string::npos) {
      rhs = lookup(r);
    } else if (r == "true" || r == "false") {
      rhs = r == "true";
    } else {
      rhs = r;
    }
    bool ok = false;
    if (lhs.is_number() && rhs.is_number()) {
      const auto a = lhs.get<std::uint64_t>();
      const auto b = rhs.get<std::uint64_t>();
      if (op == "==") ok = a == b;
      else if (op == "!=") ok = a != b;
      else if (op == ">=") ok = a >= b;
      else if (op == "<=") ok = a <= b;
      else if (op == ">") ok = a > b;
      else if (op == "<") ok = a < b;
      else throw Abort{"unknown operator '" + op + "'"};
    } else {
      if (op == "==") ok = show(lhs) == show(rhs);
      else if (op == "!=") ok = show(lhs) != show(rhs);
      else throw Abort{"operator '" + op + "' needs numbers"};
    }
    out_["pass"] = ok;
    if (!ok) {
      out_["actual"] = lhs;
      rep_.passed = false;
      rep_.failed_line = l.line;
      rep_.failure = "line " + std::to_string(l.line) + ": " + l.text + " (actual " + show(lhs) + ")";
      InspectOptions io;
      io.pages = false;
      rep_.snapshot = inspect(*rt_, io);
      rep_.snapshot["last"] = last_;
    }
    return ok;
  }

  Config cfg_;
  const ScenarioOptions& opts_;
  ScenarioReport& rep_;
  std::unique_ptr<Machine> m_;
  std::unique_ptr<Runtime> rt_;
  std::map<std::string, EnclaveId> names_;
  std::map<std::string, Bytes> blobs_;
  json out_;
  json stats_;
  json last_;
};

}  // namespace

Expected<std::vector<ScenarioLine>, ScenarioParseError> parse_scenario(std::string_view text) {
  std::vector<ScenarioLine> out;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    auto toks = tokenize(raw);
    if (!toks) return Unexpected(ScenarioParseError{lineno, toks.error()});
    if (toks->empty()) continue;
    ScenarioLine l;
    l.line = lineno;
    l.op = (*toks)[0];
    l.args.assign(toks->begin() + 1, toks->end());
    const auto first = raw.find_first_not_of(" \t");
    l.text = raw.substr(first);
    if (auto hash = l.text.find(" #"); hash != std::string::npos && l.text.find('"') == std::string::npos) {
      l.text.erase(hash);
    }
    while (!l.text.empty() && std::isspace(static_cast<unsigned char>(l.text.back()))) l.text.pop_back();
    const Arity* a = nullptr;
    for (const auto& c : kCommands) {
      if (c.op == l.op) a = &c;
    }
    if (!a) return Unexpected(ScenarioParseError{lineno, "unknown command '" + l.op + "'"});
    if (l.args.size() < a->min || l.args.size() > a->max) {
      return Unexpected(ScenarioParseError{lineno, l.op + ": wrong number of arguments"});
    }
    out.push_back(std::move(l));
  }
  return out;
}

int ScenarioReport::exit_code() const noexcept {
  if (!error.empty()) return 2;
  return passed ? 0 : 1;
}

json ScenarioReport::summary() const {
  json s;
  s["mode"] = mode;
  s["passed"] = passed && error.empty();
  s["commands"] = events.size();
  if (!error.empty()) {
    s["error"] = error;
    s["error_line"] = error_line;
  }
  if (!passed) {
    s["failed_line"] = failed_line;
    s["failure"] = failure;
    s["snapshot"] = snapshot;
  }
  json leaves = json::object();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < kLeafCount; ++i) {
    const LeafStats& st = this->leaves[i];
    leaves[std::string(to_string(static_cast<Leaf>(i)))] = {{"count", st.count}, {"cost", st.cost}};
    total += st.cost;
  }
  s["leaves"] = std::move(leaves);
  s["total_cost"] = total;
  s["swap"] = {{"out", swap_outs}, {"in", swap_ins}};
  return s;
}

std::vector<json> ScenarioReport::functional() const {
  std::vector<json> out;
  for (const auto& e : events) out.push_back(json{{"line", e["line"]}, {"out", e["out"]}});
  return out;
}

void ScenarioReport::write_jsonl(std::ostream& os) const {
  for (const auto& e : events) os << e.dump() << '\n';
  os << json{{"summary", summary()}}.dump() << '\n';
}

void ScenarioReport::write_text(std::ostream& os) const {
  for (const auto& e : events) {
    os << std::setw(4) << e["line"].get<std::size_t>() << "  " << e["cmd"].get<std::string>();
    const json& o = e["out"];
    if (o.contains("pass")) {
      os << (o["pass"].get<bool>() ? "  ok" : "  FAILED");
    } else if (!o.empty()) {
      os << "  ->";
      for (auto& [k, v] : o.items()) {
        os << ' ' << k << '=' << (v.is_string() ? v.get<std::string>() : v.dump());
      }
    }
    os << '\n';
  }
  const json s = summary();
  os << "mode " << mode << ", " << events.size() << " commands, total cost "
     << s["total_cost"].get<std::uint64_t>() << ", swap out " << swap_outs << " in " << swap_ins
     << '\n';
  for (std::size_t i = 0; i < kLeafCount; ++i) {
    if (leaves[i].count == 0) continue;
    os << "  " << std::left << std::setw(12) << to_string(static_cast<Leaf>(i)) << std::right
       << std::setw(8) << leaves[i].count << std::setw(14) << leaves[i].cost << '\n';
  }
  if (!error.empty()) os << "error at line " << error_line << ": " << error << '\n';
  if (!passed) os << "EXPECT failed at " << failure << '\n';
  if (passed && error.empty()) os << "PASS\n";
}

ScenarioReport run_scenario(const Config& cfg, std::string_view script, const ScenarioOptions& opts) {
  ScenarioReport rep;
  rep.mode = std::string(to_string(opts.mode.value_or(cfg.mode)));
  auto lines = parse_scenario(script);
  if (!lines) {
    rep.error = lines.error().message;
    rep.error_line = lines.error().line;
    return rep;
  }
  Interpreter in(cfg, opts, rep);
  for (const auto& l : *lines) {
    try {
      if (!in.exec(l)) break;
    } catch (const Abort& a) {
      rep.error = a.message;
      rep.error_line = l.line;
      break;
    } catch (const std::exception& e) {
      rep.error = std::string("internal: ") + e.what();
      rep.error_line = l.line;
      break;
    }
  }
  in.finish();
  return rep;
}

ScenarioReport run_scenario_file(const Config& cfg, const std::filesystem::path& path,
                                 ScenarioOptions opts) {
  std::ifstream in(path);
  if (!in) {
    ScenarioReport rep;
    rep.error = "cannot read " + path.string();
    return rep;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  if (opts.base_dir.empty()) opts.base_dir = path.parent_path();
  return run_scenario(cfg, ss.str(), opts);
}

}  // namespace ccx::host
