#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccx/host/driver.hpp"
#include "ccx/host/manifest.hpp"
#include "ccx/host/swap.hpp"

namespace ccx::host {

struct LoadError {
  std::string step;  // "manifest", "ECREATE", "EADD", ...
  Status status = Status::kSuccess;
  std::string detail;
};

std::string to_string(const LoadError& e);

// A host virtual page that still maps an enclave granule after EADD. The
// loader wrote the page contents through it; GPT checks now deny it.
struct DoubleMapping {
  VirtAddr host_va = 0;
  VirtAddr enclave_va = 0;
  GranuleNum granule = 0;
};

struct EnclaveHandle {
  std::string name;
  EnclaveId eid{0};
  VirtAddr base = 0;
  std::uint64_t size = 0;
  std::uint64_t attributes = 0;
  std::vector<VirtAddr> tcs;  // in manifest order
  Digest mrenclave{};
  Digest mrsigner{};
  std::vector<DoubleMapping> aliases;
};

struct LoadOptions {
  // Replaces the manifest's signature source.
  std::optional<SigStruct> sigstruct;
};

Expected<EnclaveHandle, LoadError> load_enclave(Driver& d, SwapManager& swap, const Manifest& m,
                                                const LoadOptions& opts = {});

// EREMOVEs every page, then the SECS, and returns the granules.
Status unload_enclave(Driver& d, SwapManager& swap, EnclaveHandle& h);

}  // namespace ccx::host
