#pragma once

// Machine state dump: EPC usage, GPT summaries, the EPCM and the enclave
// roster. Page contents of live enclaves are shown only for DEBUG enclaves
// and only when asked for, the same gate EDBGRD applies.

#include <nlohmann/json.hpp>
#include <ostream>

#include "ccx/host/urts.hpp"

namespace ccx::host {

struct InspectOptions {
  bool debug_enclave = false;  // read contents of DEBUG enclaves through EDBGRD
  bool pages = true;           // list every resident page
};

nlohmann::json inspect(Runtime& rt, const InspectOptions& opts = {});

// Human-readable rendering of the same data.
void print_inspect(std::ostream& os, const nlohmann::json& snapshot);

}  // namespace ccx::host
