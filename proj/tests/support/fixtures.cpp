#include "support/fixtures.hpp"

#include <stdexcept>

namespace testutil {

std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(CCX_FIXTURE_DIR) / rel;
}

ccx::host::Manifest manifest(const std::string& rel) {
  auto m = ccx::host::Manifest::load(fixture(rel));
  if (!m) throw std::runtime_error(rel + ": " + ccx::host::to_string(m.error()));
  return *m;
}

ccx::Config small_config(ccx::SimMode mode) {
  ccx::Config c;
  c.mode = mode;
  c.granule_count = 4096;
  c.epc_base = 512;
  c.epc_size = 512;
  c.vcpus = 4;
  return c;
}

std::vector<ref::Page> ref_pages(const std::vector<ccx::host::PageImage>& pages) {
  std::vector<ref::Page> out;
  for (const auto& p : pages) {
    ref::Page r;
    r.offset = p.offset;
    r.type = static_cast<std::uint8_t>(p.secinfo.type);
    r.perms = static_cast<std::uint8_t>((p.secinfo.perms.r ? 1 : 0) | (p.secinfo.perms.w ? 2 : 0) |
                                        (p.secinfo.perms.x ? 4 : 0));
    r.content = p.content;
    r.measured = p.measured;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace testutil
