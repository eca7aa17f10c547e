#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccx/leaf.hpp"
#include "support/lab.hpp"

namespace testutil {

struct LeafExample {
  ccx::Leaf leaf;
  std::string name;
  std::function<void(Lab&)> run;
  bool sgx_only = false;
};

const std::vector<LeafExample>& leaf_examples();

// Runs one example on a fresh machine. Returns the failure message, if any.
std::optional<std::string> run_example(const LeafExample& ex, ccx::SimMode mode);

// Undefined ENCLS / ENCLU numbers and unknown services must all be refused.
std::optional<std::string> check_undefined_leaves(ccx::SimMode mode);

// Every (from, to) permission pair through EMODPR + EACCEPT.
std::optional<std::string> check_emodpr_matrix(ccx::SimMode mode);

}  // namespace testutil
