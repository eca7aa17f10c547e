#include "ccx/host/manifest.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ccx/isa.hpp"
#include "ccx/measurement.hpp"

namespace ccx::host {
namespace {

struct AttrName {
  std::string_view name;
  std::uint64_t bit;
};

constexpr AttrName kAttrNames[] = {
    {"debug", kAttrDebug},
    {"provisionkey", kAttrProvisionKey},
    {"aexnotify", kAttrAexNotify},
};

constexpr AttrName kTcsFlagNames[] = {
    {"dbgoptin", kTcsDbgOptIn},
    {"aexnotify", kTcsAexNotify},
};

template <std::size_t N>
std::optional<std::uint64_t> parse_flags(std::string_view s, const AttrName (&names)[N]) {
  if (auto n = parse_number(s)) return n;
  if (s == "none" || s.empty()) return 0;
  std::uint64_t v = 0;
  while (!s.empty()) {
    const auto bar = s.find('|');
    const std::string_view part = s.substr(0, bar);
    bool found = false;
    for (const auto& a : names) {
      if (a.name == part) {
        v |= a.bit;
        found = true;
      }
    }
    if (!found) return std::nullopt;
    if (bar == std::string_view::npos) break;
    s.remove_prefix(bar + 1);
  }
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "yes" || s == "true" || s == "1") return true;
  if (s == "no" || s == "false" || s == "0") return false;
  return std::nullopt;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

Expected<std::string, std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return Unexpected(std::string("cannot open ") + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string to_string(const ManifestError& e) {
  return "line " + std::to_string(e.line) + ": " + e.message;
}

std::optional<std::uint64_t> parse_number(std::string_view s) noexcept {
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_attributes(std::string_view s) noexcept {
  return parse_flags(s, kAttrNames);
}

std::string attributes_to_string(std::uint64_t attrs) {
  std::string out;
  auto add = [&](std::string_view n) {
    if (!out.empty()) out += '|';
    out += n;
  };
  if (attrs & kAttrInit) add("init");
  for (const auto& a : kAttrNames) {
    if (attrs & a.bit) add(a.name);
  }
  return out.empty() ? "none" : out;
}

Expected<Manifest, ManifestError> Manifest::parse(std::string_view text,
                                                  const std::filesystem::path& dir) {
  Manifest m;
  bool have_header = false;
  int lineno = 0;
  auto err = [&](std::string msg) { return Unexpected(ManifestError{lineno, std::move(msg)}); };

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto words = split_ws(line);
    if (words.empty()) continue;

    std::map<std::string_view, std::string_view> kv;
    for (std::size_t i = 1; i < words.size(); ++i) {
      const auto eq = words[i].find('=');
      if (eq == std::string_view::npos || eq == 0) {
        return err("expected key=value, got '" + std::string(words[i]) + "'");
      }
      if (!kv.emplace(words[i].substr(0, eq), words[i].substr(eq + 1)).second) {
        return err("duplicate key '" + std::string(words[i].substr(0, eq)) + "'");
      }
    }
    std::set<std::string_view> used;
    auto get = [&](std::string_view key) -> std::optional<std::string_view> {
      used.insert(key);
      auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      return it->second;
    };
    auto number = [&](std::string_view key, bool required,
                      std::uint64_t dflt) -> Expected<std::uint64_t, ManifestError> {
      auto v = get(key);
      if (!v) {
        if (required) return err("missing " + std::string(key));
        return dflt;
      }
      auto n = parse_number(*v);
      if (!n) return err("bad number for " + std::string(key) + ": '" + std::string(*v) + "'");
      return *n;
    };

    const std::string_view kind = words[0];
    if (kind == "enclave") {
      if (have_header) return err("second enclave line");
      have_header = true;
      if (auto n = get("name")) m.name = *n;
      else return err("missing name");
      auto size = number("size", true, 0);
      if (!size) return Unexpected(size.error());
      m.size = *size;
      auto ssa = number("ssa_frame_size", false, 1);
      if (!ssa) return Unexpected(ssa.error());
      if (*ssa == 0 || *ssa > 0xFFFF) return err("ssa_frame_size out of range");
      m.ssa_frame_size = static_cast<std::uint32_t>(*ssa);
      if (auto a = get("attributes")) {
        auto v = parse_attributes(*a);
        if (!v) return err("bad attributes '" + std::string(*a) + "'");
        m.attributes = *v;
      }
      auto prod = number("isv_prod_id", false, 0);
      if (!prod) return Unexpected(prod.error());
      auto svn = number("isv_svn", false, 0);
      if (!svn) return Unexpected(svn.error());
      if (*prod > 0xFFFF || *svn > 0xFFFF) return err("isv ids are 16-bit");
      m.isv_prod_id = static_cast<std::uint16_t>(*prod);
      m.isv_svn = static_cast<std::uint16_t>(*svn);
      if (auto p = get("max_perms")) {
        auto v = perms_from_string(*p);
        if (!v) return err("bad max_perms");
        m.max_perms = *v;
      }
      if (auto s = get("sigstruct")) {
        if (*s == "sign-with-test-key") {
          m.sig_source = SigSource::kTestKey;
        } else if (s->starts_with("sign-with-key:")) {
          m.sig_source = SigSource::kNamedKey;
          m.sig_key = std::string(s->substr(14));
          if (m.sig_key.empty()) return err("empty key label");
        } else if (s->starts_with("file:")) {
          m.sig_source = SigSource::kFile;
          m.sig_path = dir / std::string(s->substr(5));
        } else {
          return err("bad sigstruct source '" + std::string(*s) + "'");
        }
      }
    } else if (kind == "page") {
      if (!have_header) return err("page before enclave line");
      PageEntry p;
      p.line = lineno;
      auto off = number("offset", true, 0);
      if (!off) return Unexpected(off.error());
      p.offset = *off;
      if (auto t = get("type")) {
        auto v = page_type_from_string(*t);
        if (!v || (*v != PageType::kReg)) return err("page type must be reg (use a tcs line)");
        p.type = *v;
      }
      if (auto pr = get("perms")) {
        auto v = perms_from_string(*pr);
        if (!v) return err("bad perms '" + std::string(*pr) + "'");
        p.perms = *v;
      }
      if (auto src = get("source")) {
        if (*src == "zero") {
          p.source = ContentKind::kZero;
        } else if (src->starts_with("file:")) {
          p.source = ContentKind::kFile;
          p.path = dir / std::string(src->substr(5));
        } else if (src->starts_with("asm:")) {
          p.source = ContentKind::kAsm;
          p.path = dir / std::string(src->substr(4));
        } else {
          return err("bad source '" + std::string(*src) + "'");
        }
      }
      auto count = number("count", false, 0);
      if (!count) return Unexpected(count.error());
      p.count = *count;
      if (p.source == ContentKind::kZero && p.count == 0) p.count = 1;
      if (auto v = get("measured")) {
        auto b = parse_bool(*v);
        if (!b) return err("measured must be yes or no");
        p.measured = *b;
      }
      if (auto v = get("evictable")) {
        auto b = parse_bool(*v);
        if (!b) return err("evictable must be yes or no");
        p.evictable = *b;
      }
      m.pages.push_back(std::move(p));
    } else if (kind == "tcs") {
      if (!have_header) return err("tcs before enclave line");
      TcsEntry t;
      auto off = number("offset", true, 0);
      auto oentry = number("oentry", true, 0);
      auto ossa = number("ossa", true, 0);
      auto tls = number("tls", true, 0);
      auto nssa = number("nssa", false, 1);
      for (auto* e : {&off, &oentry, &ossa, &tls, &nssa}) {
        if (!*e) return Unexpected(e->error());
      }
      if (*nssa == 0 || *nssa > 64) return err("nssa out of range");
      t.offset = *off;
      t.oentry = *oentry;
      t.ossa = *ossa;
      t.tls = *tls;
      t.nssa = static_cast<std::uint32_t>(*nssa);
      if (auto f = get("flags")) {
        auto v = parse_flags(*f, kTcsFlagNames);
        if (!v) return err("bad tcs flags '" + std::string(*f) + "'");
        t.flags = *v;
      }
      PageEntry p;
      p.line = lineno;
      p.offset = t.offset;
      p.type = PageType::kTcs;
      p.perms = Perms{};
      p.source = ContentKind::kTcs;
      p.count = 1;
      p.tcs_index = m.tcs.size();
      if (auto v = get("measured")) {
        auto b = parse_bool(*v);
        if (!b) return err("measured must be yes or no");
        p.measured = *b;
      }
      m.tcs.push_back(t);
      m.pages.push_back(std::move(p));
    } else {
      return err("unknown record '" + std::string(kind) + "'");
    }
    for (const auto& [k, v] : kv) {
      if (!used.count(k)) return err("unknown key '" + std::string(k) + "'");
    }
  }
  lineno = 0;
  if (!have_header) return err("no enclave line");
  if (m.tcs.empty()) return err("no tcs");
  return m;
}

Expected<Manifest, ManifestError> Manifest::load(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (!text) return Unexpected(ManifestError{0, text.error()});
  return parse(*text, path.parent_path());
}

Expected<std::vector<PageImage>, ManifestError> materialize(const Manifest& m) {
  std::vector<PageImage> out;
  std::set<std::uint64_t> offsets;
  std::map<std::uint64_t, const PageImage*> by_offset;

  for (const PageEntry& p : m.pages) {
    auto err = [&](std::string msg) { return Unexpected(ManifestError{p.line, std::move(msg)}); };
    if (p.offset % kGranuleSize != 0) return err("offset not page aligned");

    Bytes content;
    switch (p.source) {
      case ContentKind::kZero:
        break;
      case ContentKind::kFile: {
        auto f = read_file(p.path);
        if (!f) return err(f.error());
        content.assign(f->begin(), f->end());
        break;
      }
      case ContentKind::kAsm: {
        auto f = read_file(p.path);
        if (!f) return err(f.error());
        auto prog = assemble(*f);
        if (!prog) {
          return err(p.path.filename().string() + ":" + std::to_string(prog.error().line) + ": " +
                     prog.error().message);
        }
        content = std::move(prog->image);
        break;
      }
      case ContentKind::kTcs: {
        const TcsEntry& t = m.tcs[p.tcs_index];
        Tcs tcs;
        tcs.flags = t.flags;
        tcs.ossa = t.ossa;
        tcs.nssa = t.nssa;
        tcs.oentry = t.oentry;
        tcs.tls_base = t.tls;
        content.resize(kGranuleSize);
        tcs.store(content);
        break;
      }
    }
    std::uint64_t pages = p.count;
    const std::uint64_t needed = std::max<std::uint64_t>(1, (content.size() + kGranuleSize - 1) /
                                                                kGranuleSize);
    if (pages == 0) pages = needed;
    if (pages < needed) return err("content larger than count pages");
    content.resize(pages * kGranuleSize, 0);

    for (std::uint64_t i = 0; i < pages; ++i) {
      PageImage img;
      img.offset = p.offset + i * kGranuleSize;
      if (img.offset >= m.size) return err("page outside the enclave");
      if (!offsets.insert(img.offset).second) return err("duplicate page offset");
      img.secinfo = SecInfo{p.type, p.perms}.normalized();
      img.content.assign(content.begin() + static_cast<std::ptrdiff_t>(i * kGranuleSize),
                         content.begin() + static_cast<std::ptrdiff_t>((i + 1) * kGranuleSize));
      img.measured = p.measured;
      img.evictable = p.evictable && p.type == PageType::kReg;
      out.push_back(std::move(img));
    }
  }

  for (const auto& img : out) by_offset[img.offset] = &img;
  auto writable = [&](std::uint64_t off) {
    auto it = by_offset.find(off);
    return it != by_offset.end() && it->second->secinfo.type == PageType::kReg &&
           it->second->secinfo.perms.r && it->second->secinfo.perms.w;
  };
  for (const PageEntry& p : m.pages) {
    if (p.source != ContentKind::kTcs) continue;
    const TcsEntry& t = m.tcs[p.tcs_index];
    auto err = [&](std::string msg) { return Unexpected(ManifestError{p.line, std::move(msg)}); };
    for (std::uint64_t i = 0; i < std::uint64_t{t.nssa} * m.ssa_frame_size; ++i) {
      if (!writable(t.ossa + i * kGranuleSize)) return err("ssa frames must be rw pages");
    }
    if (!writable(t.tls)) return err("tls must be an rw page");
    auto it = by_offset.find(page_floor(t.oentry));
    if (it == by_offset.end() || !it->second->secinfo.perms.x) {
      return err("oentry must be in an executable page");
    }
  }
  return out;
}

Digest expected_mrenclave(const Manifest& m, const std::vector<PageImage>& pages) {
  MeasurementBuilder b(m.size, m.ssa_frame_size);
  for (const PageImage& p : pages) {
    b.add_page(p.offset, p.secinfo.pack());
    if (p.measured) b.extend_page(p.offset, p.content);
  }
  return b.digest();
}

SigStruct sign_manifest(const CryptoEngine& crypto, const Manifest& m, const Digest& mrenclave) {
  SigBody body;
  body.enclavehash = mrenclave;
  body.attributes = m.attributes;
  body.attribute_mask = kAttrRequestable;
  body.isv_prod_id = m.isv_prod_id;
  body.isv_svn = m.isv_svn;
  body.max_page_perms = m.max_perms;
  const std::string_view label =
      m.sig_source == SigSource::kNamedKey ? std::string_view(m.sig_key) : kTestKeyLabel;
  return sign_sigstruct(crypto.test_signing_key(label), body);
}

}  // namespace ccx::host
