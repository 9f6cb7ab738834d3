#pragma once

// Oracle equivalence suites behind `inhibitor verify`.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "inhibitor/tensor.hpp"

namespace inhibitor {

struct SuiteResult {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  std::string failure;  // first failing case, empty on success
};

using InhibitKernel = std::function<Tensor2D(const Tensor2D& v, const Tensor2D& z)>;

struct VerifyOptions {
  std::string filter;  // substring of suite names; empty runs everything
  std::uint64_t seed = 0;
  std::size_t random_cases = 1000;
  // Kernels under test. Defaults are the library's fused forms; overriding
  // them is how the suites are checked against injected faults.
  InhibitKernel fused = nullptr;
  InhibitKernel signed_fused = nullptr;
};

std::vector<std::string> suite_names();

// Runs every suite whose name contains opt.filter.
std::vector<SuiteResult> run_verify(const VerifyOptions& opt);

}  // namespace inhibitor
