#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccx/config.hpp"
#include "ccx/host/manifest.hpp"
#include "support/ref_measure.hpp"

namespace testutil {

std::filesystem::path fixture(const std::string& rel);

// Parses a fixture manifest; fails the test binary with a message otherwise.
ccx::host::Manifest manifest(const std::string& rel);

// Small machine suitable for unit tests.
ccx::Config small_config(ccx::SimMode mode = ccx::SimMode::kSgx);

// Converts materialized pages into the reference oracle's input.
std::vector<ref::Page> ref_pages(const std::vector<ccx::host::PageImage>& pages);

}  // namespace testutil
