#pragma once

// Enclave manifests: a line-oriented description of an enclave image.
// docs/manifest.md has the grammar.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccx/crypto.hpp"
#include "ccx/structs.hpp"

namespace ccx::host {

struct ManifestError {
  int line = 0;
  std::string message;
};

std::string to_string(const ManifestError& e);

enum class ContentKind : std::uint8_t { kZero, kFile, kAsm, kTcs };

struct PageEntry {
  std::uint64_t offset = 0;
  PageType type = PageType::kReg;
  Perms perms{true, false, false};
  ContentKind source = ContentKind::kZero;
  std::filesystem::path path;  // resolved against the manifest directory
  std::uint64_t count = 0;     // 0: as many pages as the content needs (at least one)
  bool measured = true;
  bool evictable = false;
  std::size_t tcs_index = 0;   // for ContentKind::kTcs
  int line = 0;
};

struct TcsEntry {
  std::uint64_t offset = 0;
  std::uint64_t oentry = 0;
  std::uint64_t ossa = 0;
  std::uint64_t tls = 0;
  std::uint32_t nssa = 1;
  std::uint64_t flags = 0;
};

enum class SigSource : std::uint8_t { kTestKey, kNamedKey, kFile };

inline constexpr std::string_view kTestKeyLabel = "test";

struct Manifest {
  std::string name;
  std::uint64_t size = 0;
  std::uint32_t ssa_frame_size = 1;
  std::uint64_t attributes = 0;
  std::uint16_t isv_prod_id = 0;
  std::uint16_t isv_svn = 0;
  Perms max_perms{true, true, true};
  SigSource sig_source = SigSource::kTestKey;
  std::string sig_key = std::string(kTestKeyLabel);
  std::filesystem::path sig_path;

  // Pages in manifest order, TCS pages included.
  std::vector<PageEntry> pages;
  std::vector<TcsEntry> tcs;

  static Expected<Manifest, ManifestError> parse(std::string_view text,
                                                 const std::filesystem::path& dir);
  static Expected<Manifest, ManifestError> load(const std::filesystem::path& path);
};

// One page ready for EADD.
struct PageImage {
  std::uint64_t offset = 0;
  SecInfo secinfo;
  Bytes content;  // kGranuleSize bytes
  bool measured = true;
  bool evictable = false;
};

// Expands the manifest into pages, reading files and assembling sources.
Expected<std::vector<PageImage>, ManifestError> materialize(const Manifest& m);

// The value EINIT will compute for these pages.
Digest expected_mrenclave(const Manifest& m, const std::vector<PageImage>& pages);

// Builds and signs a SIGSTRUCT for the manifest (not used for kFile).
SigStruct sign_manifest(const CryptoEngine& crypto, const Manifest& m, const Digest& mrenclave);

// Decimal or 0x-prefixed hex.
std::optional<std::uint64_t> parse_number(std::string_view s) noexcept;

// Parses "debug|aexnotify" or a hex / decimal number.
std::optional<std::uint64_t> parse_attributes(std::string_view s) noexcept;
std::string attributes_to_string(std::uint64_t attrs);

}  // namespace ccx::host
