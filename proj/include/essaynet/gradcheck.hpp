#pragma once

#include <functional>
#include <string>
#include <vector>

#include "essaynet/tape.hpp"

namespace essaynet {

// Rebuilds the graph from scratch for each probe, so it must be deterministic
// given `params`: same ops, same order. `param_nodes` receives one leaf id per
// parameter tensor, in the same order as `params`.
using TapeBuilder = std::function<NodeId(
    Tape& tape, const std::vector<Tensor>& params, std::vector<NodeId>& param_nodes)>;

struct GradCheckRow {
  std::string param;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::vector<GradCheckRow> rows;
  // Primitive kinds whose local reverse rule disagrees with finite
  // differences; filled only when the end-to-end check fails.
  std::vector<std::string> failing_primitives;
  std::string summary() const;
};

// Central finite differences (step h) against the tape's analytic gradients,
// per parameter element. Relative error uses max(|analytic|, |numeric|) as
// denominator; both below 1e-6 counts as a match.
GradCheckReport grad_check(const TapeBuilder& build,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double tolerance, double h = 1e-5,
                           Tape* tape_with_faults = nullptr);

}  // namespace essaynet
