#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stereoae/tensor.hpp"

namespace stereoae::gradcheck {

struct CheckResult {
  std::string name;
  // ||analytic - numeric|| / max(||analytic||, ||numeric||) over the probed
  // entries, worst input.
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  std::int64_t entries = 0;
  double seconds = 0.0;

  bool passed() const { return rel_error < tolerance; }
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  double step = 1e-6;
  int max_entries_per_input = 64;  // random subset when an input is larger
  int composite_entries = 48;
  double primitive_tolerance = 1e-4;
  double composite_tolerance = 1e-3;
  bool include_composite = true;
};

using Function = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

// Central differences on the scalar sum(w * f(inputs)) for fixed random w,
// against the tape gradient. Inputs are modified during probing and
// restored afterwards.
CheckResult check(const std::string& name, const Function& f, std::vector<Tensor<double>> inputs, double tolerance,
                  const SuiteOptions& options, std::mt19937_64& rng);

// Every differentiable primitive plus the end-to-end desk network loss.
std::vector<CheckResult> run_suite(const SuiteOptions& options = {});

// One line per check: "name rel=... abs=... tol=... PASS|FAIL".
void write_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace stereoae::gradcheck
