#include "essaynet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace essaynet {

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max(std::fabs(analytic), std::fabs(numeric));
  if (denom < 1e-6) return 0.0;
  return std::fabs(analytic - numeric) / denom;
}

// Checks one node's reverse rule against central differences of its own
// forward semantics, probing with a fixed non-uniform upstream vector.
bool local_node_check(const Tape& tape, const TapeNode& node, double tolerance, double h) {
  std::vector<const Tensor*> in_values;
  std::vector<Tensor> in_copy;
  in_copy.reserve(node.inputs.size());
  for (NodeId id : node.inputs) in_copy.push_back(tape.value(id));
  for (const Tensor& t : in_copy) in_values.push_back(&t);

  Tensor upstream = Tensor::zeros_like(node.value);
  for (std::size_t i = 0; i < upstream.size(); ++i) {
    upstream[i] = 1.0 + 0.5 * (static_cast<double>(i % 3) - 1.0);
  }

  std::vector<Tensor> analytic;
  for (const Tensor& t : in_copy) analytic.push_back(Tensor::zeros_like(t));
  tape.apply_reverse(node, upstream,
                     [&](std::size_t i) -> Tensor& { return analytic[i]; });

  for (std::size_t j = 0; j < in_copy.size(); ++j) {
    for (std::size_t e = 0; e < in_copy[j].size(); ++e) {
      const double saved = in_copy[j][e];
      in_copy[j][e] = saved + h;
      const Tensor plus = eval_primitive(node.op, in_values, node.attrs);
      in_copy[j][e] = saved - h;
      const Tensor minus = eval_primitive(node.op, in_values, node.attrs);
      in_copy[j][e] = saved;
      double fd = 0.0;
      for (std::size_t o = 0; o < plus.size(); ++o) {
        fd += upstream[o] * (plus[o] - minus[o]) / (2.0 * h);
      }
      if (rel_error(analytic[j][e], fd) > tolerance) return false;
    }
  }
  return true;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error
     << " tolerance=" << tolerance;
  if (!failing_primitives.empty()) {
    os << " failing_primitives=";
    for (std::size_t i = 0; i < failing_primitives.size(); ++i) {
      if (i) os << ',';
      os << failing_primitives[i];
    }
  }
  return os.str();
}

GradCheckReport grad_check(const TapeBuilder& build,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double tolerance, double h, Tape* tape_with_faults) {
  Tape local;
  Tape& tape = tape_with_faults ? *tape_with_faults : local;

  std::vector<Tensor> values;
  values.reserve(params.size());
  for (const auto& [name, t] : params) values.push_back(t);

  const auto rebuild = [&](const std::vector<Tensor>& vals, std::vector<NodeId>* leaves) {
    tape.clear();
    std::vector<NodeId> ids;
    const NodeId loss = build(tape, vals, ids);
    if (ids.size() != params.size()) {
      throw std::invalid_argument("grad_check: builder bound " + std::to_string(ids.size()) +
                                  " parameters, expected " + std::to_string(params.size()));
    }
    if (leaves) *leaves = ids;
    return loss;
  };

  std::vector<NodeId> leaves;
  NodeId loss = rebuild(values, &leaves);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(tape.grad(leaves[i]));

  const auto loss_at = [&](const std::vector<Tensor>& vals) {
    return tape.value(rebuild(vals, nullptr))[0];
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckRow row;
    row.param = params[i].first;
    for (std::size_t e = 0; e < values[i].size(); ++e) {
      const double saved = values[i][e];
      values[i][e] = saved + h;
      const double f_plus = loss_at(values);
      values[i][e] = saved - h;
      const double f_minus = loss_at(values);
      values[i][e] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      row.max_rel_error = std::max(row.max_rel_error, rel_error(analytic[i][e], fd));
    }
    row.pass = row.max_rel_error <= tolerance;
    report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
    report.pass = report.pass && row.pass;
    report.rows.push_back(std::move(row));
  }

  if (!report.pass) {
    // Attribute the failure: locally finite-difference each primitive kind
    // present on the tape (a few nodes per kind is enough; the reverse rule
    // is the same object for every node of a kind).
    rebuild(values, &leaves);
    std::set<std::string> failing;
    std::map<Primitive, int> seen;
    for (NodeId id = 0; id < tape.size(); ++id) {
      const TapeNode& n = tape.node(id);
      if (n.op == Primitive::kLeaf) continue;
      if (seen[n.op]++ >= 3) continue;
      if (!local_node_check(tape, n, std::max(tolerance, 1e-4), h)) {
        failing.insert(primitive_name(n.op));
      }
    }
    report.failing_primitives.assign(failing.begin(), failing.end());
  }
  return report;
}

}  // namespace essaynet
