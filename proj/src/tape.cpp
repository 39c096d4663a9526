#include "essaynet/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace essaynet {

namespace {

[[noreturn]] void shape_error(Primitive op, const std::string& detail) {
  throw std::invalid_argument(std::string(primitive_name(op)) + ": " + detail);
}

void require_same_shape(Primitive op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_error(op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

double stable_log_sum_exp(const double* z, std::size_t n) {
  double m = z[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - m);
  return m + std::log(s);
}

}  // namespace

const char* primitive_name(Primitive op) {
  switch (op) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kMultiply: return "elementwise-multiply";
    case Primitive::kConcat: return "concat-last-axis";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kTanh: return "tanh";
    case Primitive::kMeanOverTime: return "mean-over-time-axis";
    case Primitive::kSoftmaxCrossEntropy: return "softmax-cross-entropy";
    case Primitive::kSquaredError: return "squared-error";
    case Primitive::kScaleShift: return "scalar-scale-and-shift";
  }
  return "?";
}

Tensor eval_primitive(Primitive op, const std::vector<const Tensor*>& in,
                      const PrimitiveAttrs& attrs) {
  switch (op) {
    case Primitive::kLeaf:
      shape_error(op, "leaf has no forward rule");

    case Primitive::kMatmul: {
      if (in.size() != 2) shape_error(op, "expects 2 inputs");
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1)) {
        shape_error(op, "unsupported ranks " + a.shape_str() + " and " + b.shape_str());
      }
      const std::size_t m = a.dim(0), k = a.dim(1);
      const std::size_t n = (b.rank() == 2) ? b.dim(1) : 1;
      if (b.dim(0) != k) {
        shape_error(op, "incompatible shapes " + a.shape_str() + " and " + b.shape_str());
      }
      Tensor out(b.rank() == 2 ? std::vector<std::size_t>{m, n}
                               : std::vector<std::size_t>{m});
      // Single-element outputs use exactly rounded accumulation so pooled-head
      // dot products are invariant under input permutation.
      if (m * n == 1) {
        thread_local std::vector<double> prods;
        prods.resize(k);
        for (std::size_t p = 0; p < k; ++p) prods[p] = a.data()[p] * b.data()[p];
        out[0] = exactly_rounded_sum(prods.data(), k);
        return out;
      }
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) s += a.data()[i * k + p] * b.data()[p * n + j];
          out[i * n + j] = s;
        }
      }
      return out;
    }

    case Primitive::kAdd: {
      if (in.size() != 2) shape_error(op, "expects 2 inputs");
      require_same_shape(op, *in[0], *in[1]);
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[1]->data()[i];
      return out;
    }

    case Primitive::kMultiply: {
      if (in.size() != 2) shape_error(op, "expects 2 inputs");
      require_same_shape(op, *in[0], *in[1]);
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= in[1]->data()[i];
      return out;
    }

    case Primitive::kConcat: {
      if (in.empty()) shape_error(op, "expects at least 1 input");
      const std::size_t rank = in[0]->rank();
      if (rank != 1 && rank != 2) shape_error(op, "supports rank 1 or 2, got " + in[0]->shape_str());
      std::size_t last = 0;
      for (const Tensor* t : in) {
        if (t->rank() != rank || (rank == 2 && t->dim(0) != in[0]->dim(0))) {
          shape_error(op, "incompatible shapes " + in[0]->shape_str() + " and " + t->shape_str());
        }
        last += t->dim(rank - 1);
      }
      if (rank == 1) {
        Tensor out({last});
        std::size_t pos = 0;
        for (const Tensor* t : in) {
          for (std::size_t i = 0; i < t->size(); ++i) out[pos++] = t->data()[i];
        }
        return out;
      }
      const std::size_t rows = in[0]->dim(0);
      Tensor out({rows, last});
      std::size_t col0 = 0;
      for (const Tensor* t : in) {
        const std::size_t cols = t->dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) out.at(r, col0 + c) = t->at(r, c);
        }
        col0 += cols;
      }
      return out;
    }

    case Primitive::kSigmoid: {
      if (in.size() != 1) shape_error(op, "expects 1 input");
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
      return out;
    }

    case Primitive::kTanh: {
      if (in.size() != 1) shape_error(op, "expects 1 input");
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
      return out;
    }

    case Primitive::kMeanOverTime: {
      if (in.empty()) shape_error(op, "expects at least 1 input");
      for (const Tensor* t : in) require_same_shape(op, *in[0], *t);
      Tensor out = Tensor::zeros_like(*in[0]);
      thread_local std::vector<double> column;
      column.resize(in.size());
      for (std::size_t e = 0; e < out.size(); ++e) {
        for (std::size_t t = 0; t < in.size(); ++t) column[t] = in[t]->data()[e];
        out[e] = stable_mean(column.data(), column.size());
      }
      return out;
    }

    case Primitive::kSoftmaxCrossEntropy: {
      if (in.size() != 1) shape_error(op, "expects 1 input");
      const Tensor& z = *in[0];
      if (z.rank() != 1) shape_error(op, "logits must be rank 1, got " + z.shape_str());
      if (attrs.target >= z.size()) {
        shape_error(op, "target index " + std::to_string(attrs.target) +
                            " out of range for logits " + z.shape_str());
      }
      return Tensor::scalar(stable_log_sum_exp(z.data(), z.size()) - z[attrs.target]);
    }

    case Primitive::kSquaredError: {
      if (in.size() != 2) shape_error(op, "expects 2 inputs");
      require_same_shape(op, *in[0], *in[1]);
      double s = 0.0;
      for (std::size_t i = 0; i < in[0]->size(); ++i) {
        const double d = in[0]->data()[i] - in[1]->data()[i];
        s += d * d;
      }
      return Tensor::scalar(s);
    }

    case Primitive::kScaleShift: {
      if (in.size() != 1) shape_error(op, "expects 1 input");
      Tensor out = *in[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = attrs.scale * out[i] + attrs.shift;
      return out;
    }
  }
  shape_error(op, "unknown primitive");
}

NodeId Tape::leaf(Tensor value) {
  nodes_.push_back(TapeNode{Primitive::kLeaf, {}, std::move(value), Tensor{}, {}});
  return nodes_.size() - 1;
}

NodeId Tape::apply(Primitive op, const std::vector<NodeId>& inputs,
                   const PrimitiveAttrs& attrs) {
  std::vector<const Tensor*> in;
  in.reserve(inputs.size());
  for (NodeId id : inputs) {
    if (id >= nodes_.size()) {
      throw std::invalid_argument(std::string(primitive_name(op)) + ": unknown input node id " +
                                  std::to_string(id));
    }
    in.push_back(&nodes_[id].value);
  }
  Tensor out = eval_primitive(op, in, attrs);
  nodes_.push_back(TapeNode{op, inputs, std::move(out), Tensor{}, attrs});
  return nodes_.size() - 1;
}

NodeId Tape::matmul(NodeId a, NodeId b) { return apply(Primitive::kMatmul, {a, b}); }
NodeId Tape::add(NodeId a, NodeId b) { return apply(Primitive::kAdd, {a, b}); }
NodeId Tape::multiply(NodeId a, NodeId b) { return apply(Primitive::kMultiply, {a, b}); }
NodeId Tape::concat(const std::vector<NodeId>& xs) { return apply(Primitive::kConcat, xs); }
NodeId Tape::sigmoid(NodeId x) { return apply(Primitive::kSigmoid, {x}); }
NodeId Tape::tanh(NodeId x) { return apply(Primitive::kTanh, {x}); }

NodeId Tape::mean_over_time(const std::vector<NodeId>& steps) {
  return apply(Primitive::kMeanOverTime, steps);
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::size_t target) {
  PrimitiveAttrs attrs;
  attrs.target = target;
  return apply(Primitive::kSoftmaxCrossEntropy, {logits}, attrs);
}

NodeId Tape::squared_error(NodeId prediction, NodeId target) {
  return apply(Primitive::kSquaredError, {prediction, target});
}

NodeId Tape::scale_shift(NodeId x, double scale, double shift) {
  PrimitiveAttrs attrs;
  attrs.scale = scale;
  attrs.shift = shift;
  return apply(Primitive::kScaleShift, {x}, attrs);
}

void Tape::reset_gradients() {
  for (TapeNode& n : nodes_) n.grad = Tensor{};
}

void Tape::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::invalid_argument("backward: unknown loss node");
  const Tensor& lv = nodes_[loss].value;
  if (lv.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + lv.shape_str());
  }
  reset_gradients();
  nodes_[loss].grad = Tensor::scalar(1.0);

  for (NodeId id = loss + 1; id-- > 0;) {
    TapeNode& n = nodes_[id];
    if (n.grad.empty() || n.op == Primitive::kLeaf) continue;
    apply_reverse(n, n.grad, [&](std::size_t i) -> Tensor& {
      TapeNode& src = nodes_[n.inputs[i]];
      if (src.grad.empty()) src.grad = Tensor::zeros_like(src.value);
      return src.grad;
    });
  }
}

const Tensor& Tape::grad(NodeId id) {
  TapeNode& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

void Tape::inject_backward_fault(Primitive op, double scale) {
  fault_op_ = op;
  fault_scale_ = scale;
}

void Tape::clear_backward_fault() { fault_op_.reset(); }

void Tape::apply_reverse(const TapeNode& node, const Tensor& upstream,
                         const std::function<Tensor&(std::size_t)>& input_grad) const {
  // Every reverse rule is linear in the upstream gradient, so injecting a
  // fault is equivalent to scaling the upstream once here.
  const Tensor* g = &upstream;
  Tensor scaled;
  if (fault_op_ && *fault_op_ == node.op) {
    scaled = upstream;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= fault_scale_;
    g = &scaled;
  }

  const auto value_of = [&](std::size_t i) -> const Tensor& {
    // inputs' values live on the tape; node.inputs indexes it
    return nodes_[node.inputs[i]].value;
  };

  switch (node.op) {
    case Primitive::kLeaf:
      return;

    case Primitive::kMatmul: {
      const Tensor& a = value_of(0);
      const Tensor& b = value_of(1);
      const std::size_t m = a.dim(0), k = a.dim(1);
      const std::size_t n = (b.rank() == 2) ? b.dim(1) : 1;
      Tensor& ga = input_grad(0);
      Tensor& gb = input_grad(1);
      // dA = G * B^T ; dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g->data()[i * n + j] * b.data()[p * n + j];
          ga.data()[i * k + p] += s;
        }
      }
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += a.data()[i * k + p] * g->data()[i * n + j];
          gb.data()[p * n + j] += s;
        }
      }
      return;
    }

    case Primitive::kAdd: {
      axpy(input_grad(0), *g);
      axpy(input_grad(1), *g);
      return;
    }

    case Primitive::kMultiply: {
      Tensor& ga = input_grad(0);
      Tensor& gb = input_grad(1);
      const Tensor& a = value_of(0);
      const Tensor& b = value_of(1);
      for (std::size_t i = 0; i < g->size(); ++i) {
        ga[i] += g->data()[i] * b.data()[i];
        gb[i] += g->data()[i] * a.data()[i];
      }
      return;
    }

    case Primitive::kConcat: {
      const std::size_t rank = value_of(0).rank();
      if (rank == 1) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          Tensor& gi = input_grad(i);
          for (std::size_t e = 0; e < gi.size(); ++e) gi[e] += g->data()[pos++];
        }
      } else {
        const std::size_t rows = value_of(0).dim(0);
        const std::size_t total_cols = node.value.dim(1);
        std::size_t col0 = 0;
        for (std::size_t i = 0; i < node.inputs.size(); ++i) {
          Tensor& gi = input_grad(i);
          const std::size_t cols = value_of(i).dim(1);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              gi.at(r, c) += g->data()[r * total_cols + col0 + c];
            }
          }
          col0 += cols;
        }
      }
      return;
    }

    case Primitive::kSigmoid: {
      Tensor& gi = input_grad(0);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double s = node.value[i];
        gi[i] += g->data()[i] * s * (1.0 - s);
      }
      return;
    }

    case Primitive::kTanh: {
      Tensor& gi = input_grad(0);
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double t = node.value[i];
        gi[i] += g->data()[i] * (1.0 - t * t);
      }
      return;
    }

    case Primitive::kMeanOverTime: {
      const double inv = 1.0 / static_cast<double>(node.inputs.size());
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        axpy(input_grad(i), *g, inv);
      }
      return;
    }

    case Primitive::kSoftmaxCrossEntropy: {
      const Tensor& z = value_of(0);
      Tensor& gi = input_grad(0);
      double m = z[0];
      for (std::size_t i = 1; i < z.size(); ++i) m = std::max(m, z[i]);
      double denom = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) denom += std::exp(z[i] - m);
      const double g0 = g->data()[0];
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = std::exp(z[i] - m) / denom;
        gi[i] += g0 * (p - (i == node.attrs.target ? 1.0 : 0.0));
      }
      return;
    }

    case Primitive::kSquaredError: {
      const Tensor& a = value_of(0);
      const Tensor& b = value_of(1);
      Tensor& ga = input_grad(0);
      Tensor& gb = input_grad(1);
      const double g0 = g->data()[0];
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = 2.0 * (a[i] - b[i]) * g0;
        ga[i] += d;
        gb[i] -= d;
      }
      return;
    }

    case Primitive::kScaleShift: {
      axpy(input_grad(0), *g, node.attrs.scale);
      return;
    }
  }
}

}  // namespace essaynet
