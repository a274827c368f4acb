#include "wavegnn/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "wavegnn/errors.hpp"

namespace wavegnn {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kMatmulNT: return "matmul_nt";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kSin: return "sin";
    case OpKind::kExp: return "exp";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kTime2VecActivation: return "time2vec_activation";
    case OpKind::kSum: return "sum";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kMaskedSoftmax: return "masked_softmax";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kMaxRows: return "max_rows";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kBinaryCrossEntropy: return "binary_cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  return record(OpKind::kConstant, {}, std::move(value), nullptr);
}

Var Tape::parameter(const ParamStore& store, std::string_view name) {
  const std::size_t index = store.index_of(name);
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  const Parameter& p = store.entry(index);
  Var v = record(OpKind::kParameter, {}, p.value, nullptr);
  nodes_[v.id()].requires_grad = p.trainable;
  nodes_[v.id()].param_index = static_cast<std::ptrdiff_t>(index);
  param_nodes_.emplace(index, v.id());
  return v;
}

Var Tape::record(OpKind op, std::vector<NodeId> inputs, Tensor value,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError(std::string("non-finite output from ") + op_name(op));
  }
  bool needs = false;
  for (NodeId in : inputs) needs = needs || nodes_.at(in).requires_grad;
  Node node;
  node.op = op;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::reverse_sweep(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss recorded on another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("reverse sweep needs a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id())[0] = 1.0;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.numel() == 0) continue;
    n.backward(*this, id);
  }
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.numel() == n.value.numel()) return n.grad;
  return Tensor(n.value.shape());
}

GradientSet Tape::parameter_gradients(const ParamStore& store) const {
  GradientSet grads(store);
  for (const auto& [index, node_id] : param_nodes_) {
    const Node& n = nodes_[node_id];
    if (!n.requires_grad || n.grad.numel() == 0) continue;
    auto dst = grads[index].data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return grads;
}

namespace ops {
namespace {

Tape& common_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands on different tapes");
  return a.tape();
}

struct BroadcastPlan {
  std::array<std::size_t, 4> dims{1, 1, 1, 1};
  std::array<std::size_t, 4> stride_a{0, 0, 0, 0};
  std::array<std::size_t, 4> stride_b{0, 0, 0, 0};
  Shape out_shape;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  if (rank > 4) throw DimensionError(std::string(op) + ": rank above 4");
  auto pad = [](const Shape& s) {
    std::array<std::size_t, 4> p{1, 1, 1, 1};
    std::copy(s.begin(), s.end(), p.begin() + (4 - s.size()));
    return p;
  };
  const auto pa = pad(a);
  const auto pb = pad(b);
  BroadcastPlan plan;
  for (std::size_t ax = 0; ax < 4; ++ax) {
    if (pa[ax] == pb[ax] || pb[ax] == 1) {
      plan.dims[ax] = pa[ax];
    } else if (pa[ax] == 1) {
      plan.dims[ax] = pb[ax];
    } else {
      throw DimensionError(std::string(op) + ": cannot broadcast " +
                           shape_to_string(a) + " with " + shape_to_string(b));
    }
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t ax = 4; ax-- > 0;) {
    plan.stride_a[ax] = pa[ax] == 1 ? 0 : sa;
    plan.stride_b[ax] = pb[ax] == 1 ? 0 : sb;
    sa *= pa[ax];
    sb *= pb[ax];
  }
  plan.out_shape.assign(plan.dims.begin() + (4 - rank), plan.dims.end());
  return plan;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  std::size_t out = 0;
  for (std::size_t i0 = 0; i0 < p.dims[0]; ++i0) {
    for (std::size_t i1 = 0; i1 < p.dims[1]; ++i1) {
      for (std::size_t i2 = 0; i2 < p.dims[2]; ++i2) {
        std::size_t ia = i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
        std::size_t ib = i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
        for (std::size_t i3 = 0; i3 < p.dims[3]; ++i3) {
          f(out++, ia, ib);
          ia += p.stride_a[3];
          ib += p.stride_b[3];
        }
      }
    }
  }
}

enum class Binary { kAdd, kSub, kMul };

Var binary(Var a, Var b, Binary kind) {
  Tape& tape = common_tape(a, b);
  static constexpr OpKind kinds[] = {OpKind::kAdd, OpKind::kSub, OpKind::kMul};
  const OpKind op = kinds[static_cast<int>(kind)];
  const Tensor& av = a.value();
  const Tensor& bv = b.value();

  if (av.shape() == bv.shape()) {
    Tensor out(av.shape());
    const std::size_t n = av.numel();
    for (std::size_t i = 0; i < n; ++i) {
      switch (kind) {
        case Binary::kAdd: out[i] = av[i] + bv[i]; break;
        case Binary::kSub: out[i] = av[i] - bv[i]; break;
        case Binary::kMul: out[i] = av[i] * bv[i]; break;
      }
    }
    const NodeId ia = a.id(), ib = b.id();
    return tape.record(op, {ia, ib}, std::move(out), [ia, ib, kind](Tape& t, NodeId self) {
      const Tensor& g = t.node(self).grad;
      const std::size_t n = g.numel();
      if (t.requires_grad(ia)) {
        Tensor& ga = t.grad_buffer(ia);
        if (kind == Binary::kMul) {
          const Tensor& bv = t.value(ib);
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
      }
      if (t.requires_grad(ib)) {
        Tensor& gb = t.grad_buffer(ib);
        if (kind == Binary::kMul) {
          const Tensor& av = t.value(ia);
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
        } else if (kind == Binary::kSub) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
      }
    });
  }

  const char* names[] = {"add", "sub", "mul"};
  BroadcastPlan plan = plan_broadcast(av.shape(), bv.shape(), names[static_cast<int>(kind)]);
  Tensor out(plan.out_shape);
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
    switch (kind) {
      case Binary::kAdd: out[o] = av[i] + bv[j]; break;
      case Binary::kSub: out[o] = av[i] - bv[j]; break;
      case Binary::kMul: out[o] = av[i] * bv[j]; break;
    }
  });
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(op, {ia, ib}, std::move(out), [ia, ib, kind, plan](Tape& t, NodeId self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
        ga[i] += kind == Binary::kMul ? g[o] * bv[j] : g[o];
      });
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
        switch (kind) {
          case Binary::kAdd: gb[j] += g[o]; break;
          case Binary::kSub: gb[j] -= g[o]; break;
          case Binary::kMul: gb[j] += g[o] * av[i]; break;
        }
      });
    }
  });
}

// Unary elementwise op; `deriv(x, y)` returns dy/dx given input and output.
template <typename Fwd, typename Deriv>
Var unary(Var a, OpKind op, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  const NodeId ia = a.id();
  return a.tape().record(op, {ia}, std::move(out), [ia, deriv](Tape& t, NodeId self) {
    const Tensor& g = t.node(self).grad;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.node(self).value;
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

struct MatmulDims {
  std::size_t batch, p, q, r;
};

// Validates a*b (or a*b^T when `transpose_b`) and returns batch/p/q/r.
MatmulDims matmul_dims(const Shape& a, const Shape& b, bool transpose_b) {
  const char* name = transpose_b ? "matmul_nt" : "matmul";
  auto fail = [&] {
    return DimensionError(std::string(name) + ": incompatible shapes " +
                          shape_to_string(a) + " and " + shape_to_string(b));
  };
  if (a.size() != b.size() || (a.size() != 2 && a.size() != 3)) throw fail();
  const std::size_t off = a.size() - 2;
  MatmulDims d{off ? a[0] : 1, a[off], a[off + 1], transpose_b ? b[off] : b[off + 1]};
  if (off && b[0] != a[0]) throw fail();
  const std::size_t inner_b = transpose_b ? b[off + 1] : b[off];
  if (inner_b != d.q) throw fail();
  return d;
}

Shape matmul_shape(const MatmulDims& d, std::size_t rank) {
  if (rank == 2) return Shape{d.p, d.r};
  return Shape{d.batch, d.p, d.r};
}

// Largest score among allowed positions; false if none is allowed.
bool row_max_allowed(const double* s, const double* m, std::size_t n, double& out) {
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (m[j] != 0.0 && (!any || s[j] > out)) {
      out = s[j];
      any = true;
    }
  }
  return any;
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, Binary::kAdd); }
Var sub(Var a, Var b) { return binary(a, b, Binary::kSub); }
Var mul(Var a, Var b) { return binary(a, b, Binary::kMul); }

Var scale(Var a, double factor) {
  return unary(
      a, OpKind::kScale, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const MatmulDims d = matmul_dims(a.shape(), b.shape(), false);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(matmul_shape(d, a.value().rank()));
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* A = av.data().data() + bi * d.p * d.q;
    const double* B = bv.data().data() + bi * d.q * d.r;
    double* C = out.data().data() + bi * d.p * d.r;
    for (std::size_t i = 0; i < d.p; ++i) {
      double* crow = C + i * d.r;
      for (std::size_t k = 0; k < d.q; ++k) {
        const double aik = A[i * d.q + k];
        const double* brow = B + k * d.r;
        for (std::size_t j = 0; j < d.r; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::kMatmul, {ia, ib}, std::move(out), [ia, ib, d](Tape& t, NodeId self) {
    const double* G = t.node(self).grad.data().data();
    const double* A = t.value(ia).data().data();
    const double* B = t.value(ib).data().data();
    if (t.requires_grad(ia)) {
      double* GA = t.grad_buffer(ia).data().data();
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* g = G + bi * d.p * d.r;
        const double* bm = B + bi * d.q * d.r;
        double* ga = GA + bi * d.p * d.q;
        for (std::size_t i = 0; i < d.p; ++i) {
          for (std::size_t k = 0; k < d.q; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d.r; ++j) acc += g[i * d.r + j] * bm[k * d.r + j];
            ga[i * d.q + k] += acc;
          }
        }
      }
    }
    if (t.requires_grad(ib)) {
      double* GB = t.grad_buffer(ib).data().data();
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* g = G + bi * d.p * d.r;
        const double* am = A + bi * d.p * d.q;
        double* gb = GB + bi * d.q * d.r;
        for (std::size_t i = 0; i < d.p; ++i) {
          for (std::size_t k = 0; k < d.q; ++k) {
            const double aik = am[i * d.q + k];
            for (std::size_t j = 0; j < d.r; ++j) gb[k * d.r + j] += aik * g[i * d.r + j];
          }
        }
      }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const MatmulDims d = matmul_dims(a.shape(), b.shape(), true);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(matmul_shape(d, a.value().rank()));
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* A = av.data().data() + bi * d.p * d.q;
    const double* B = bv.data().data() + bi * d.r * d.q;
    double* C = out.data().data() + bi * d.p * d.r;
    for (std::size_t i = 0; i < d.p; ++i) {
      for (std::size_t j = 0; j < d.r; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d.q; ++k) acc += A[i * d.q + k] * B[j * d.q + k];
        C[i * d.r + j] = acc;
      }
    }
  }
  const NodeId ia = a.id(), ib = b.id();
  return tape.record(OpKind::kMatmulNT, {ia, ib}, std::move(out), [ia, ib, d](Tape& t, NodeId self) {
    const double* G = t.node(self).grad.data().data();
    const double* A = t.value(ia).data().data();
    const double* B = t.value(ib).data().data();
    if (t.requires_grad(ia)) {
      double* GA = t.grad_buffer(ia).data().data();
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* g = G + bi * d.p * d.r;
        const double* bm = B + bi * d.r * d.q;
        double* ga = GA + bi * d.p * d.q;
        for (std::size_t i = 0; i < d.p; ++i) {
          for (std::size_t j = 0; j < d.r; ++j) {
            const double gij = g[i * d.r + j];
            for (std::size_t k = 0; k < d.q; ++k) ga[i * d.q + k] += gij * bm[j * d.q + k];
          }
        }
      }
    }
    if (t.requires_grad(ib)) {
      double* GB = t.grad_buffer(ib).data().data();
      for (std::size_t bi = 0; bi < d.batch; ++bi) {
        const double* g = G + bi * d.p * d.r;
        const double* am = A + bi * d.p * d.q;
        double* gb = GB + bi * d.r * d.q;
        for (std::size_t i = 0; i < d.p; ++i) {
          for (std::size_t j = 0; j < d.r; ++j) {
            const double gij = g[i * d.r + j];
            for (std::size_t k = 0; k < d.q; ++k) gb[j * d.q + k] += gij * am[i * d.q + k];
          }
        }
      }
    }
  });
}

Var tanh(Var a) {
  return unary(
      a, OpKind::kTanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, OpKind::kRelu, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sin(Var a) {
  return unary(
      a, OpKind::kSin, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Var exp(Var a) {
  return unary(
      a, OpKind::kExp, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var sigmoid(Var a) {
  return unary(
      a, OpKind::kSigmoid,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      a, OpKind::kSoftplus,
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var time2vec_activation(Var a) {
  const Tensor& av = a.value();
  const std::size_t cols = av.shape().back();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    out[i] = (i % cols == 0) ? av[i] : std::sin(av[i]);
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::kTime2VecActivation, {ia}, std::move(out),
                         [ia, cols](Tape& t, NodeId self) {
                           const Tensor& g = t.node(self).grad;
                           const Tensor& x = t.value(ia);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.numel(); ++i) {
                             ga[i] += (i % cols == 0) ? g[i] : g[i] * std::cos(x[i]);
                           }
                         });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const NodeId ia = a.id();
  return a.tape().record(OpKind::kSum, {ia}, Tensor::scalar(total), [ia](Tape& t, NodeId self) {
    const double g = t.node(self).grad[0];
    for (double& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const NodeId ia = a.id();
  return a.tape().record(OpKind::kReshape, {ia}, std::move(out), [ia](Tape& t, NodeId self) {
    const Tensor& g = t.node(self).grad;
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().shape();
  const std::size_t rows = parts.front().value().numel() / first.back();
  std::vector<std::size_t> widths;
  std::vector<NodeId> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) throw ContractError("operands on different tapes");
    const Shape& s = p.shape();
    if (s.size() != first.size() ||
        !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat: leading dimensions differ between " +
                           shape_to_string(first) + " and " + shape_to_string(s));
    }
    widths.push_back(s.back());
    ids.push_back(p.id());
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[k]; ++c) {
        out[r * total + offset + c] = v[r * widths[k] + c];
      }
    }
    offset += widths[k];
  }
  return tape.record(OpKind::kConcat, ids, std::move(out),
                     [ids, widths, rows, total](Tape& t, NodeId self) {
                       const Tensor& g = t.node(self).grad;
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (t.requires_grad(ids[k])) {
                           Tensor& gk = t.grad_buffer(ids[k]);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < widths[k]; ++c) {
                               gk[r * widths[k] + c] += g[r * total + offset + c];
                             }
                           }
                         }
                         offset += widths[k];
                       }
                     });
}

Var masked_softmax(Var scores, const Tensor& mask) {
  const Tensor& sv = scores.value();
  const std::size_t width = sv.shape().back();
  // Expand the mask to the scores' shape once.
  Tensor full_mask(sv.shape());
  if (mask.shape() == sv.shape()) {
    full_mask = mask;
  } else {
    BroadcastPlan plan = plan_broadcast(sv.shape(), mask.shape(), "masked_softmax");
    if (plan.out_shape != sv.shape()) {
      throw DimensionError("masked_softmax: mask " + shape_to_string(mask.shape()) +
                           " does not broadcast to " + shape_to_string(sv.shape()));
    }
    for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) {
      full_mask[o] = mask[j];
    });
  }

  Tensor out(sv.shape());
  const std::size_t rows = sv.numel() / width;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = sv.data().data() + r * width;
    const double* m = full_mask.data().data() + r * width;
    double* y = out.data().data() + r * width;
    double top = 0.0;
    if (!row_max_allowed(s, m, width, top)) continue;  // all masked: zeros
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      // Masked positions stay exactly 0 whatever their score.
      y[j] = m[j] != 0.0 ? std::exp(s[j] - top) : 0.0;
      total += y[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[j] /= total;
  }

  const NodeId is = scores.id();
  return scores.tape().record(OpKind::kMaskedSoftmax, {is}, std::move(out),
                              [is, width](Tape& t, NodeId self) {
                                const Tensor& g = t.node(self).grad;
                                const Tensor& y = t.node(self).value;
                                Tensor& gs = t.grad_buffer(is);
                                const std::size_t rows = g.numel() / width;
                                for (std::size_t r = 0; r < rows; ++r) {
                                  const std::size_t base = r * width;
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < width; ++j) {
                                    dot += y[base + j] * g[base + j];
                                  }
                                  for (std::size_t j = 0; j < width; ++j) {
                                    gs[base + j] += y[base + j] * (g[base + j] - dot);
                                  }
                                }
                              });
}

Var softmax(Var scores) {
  return masked_softmax(scores, Tensor(Shape{scores.shape().back()}, 1.0));
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = common_tape(x, gain);
  const Tensor& xv = x.value();
  const std::size_t width = xv.shape().back();
  if (gain.value().numel() != width || bias.value().numel() != width) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(width) +
                         " entries");
  }
  const std::size_t rows = xv.numel() / width;
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data().data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(width);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      normalized[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  const NodeId ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(
      OpKind::kLayerNorm, {ix, ig, ib}, std::move(out),
      [ix, ig, ib, width, rows, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < width; ++j) {
              gg[j] += g[r * width + j] * normalized[r * width + j];
            }
          }
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < width; ++j) gb[j] += g[r * width + j];
          }
        }
        if (t.requires_grad(ix)) {
          Tensor& gx = t.grad_buffer(ix);
          const double dw = static_cast<double>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0, sum_dh = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
              const double d = g[r * width + j] * gv[j];
              sum_d += d;
              sum_dh += d * normalized[r * width + j];
            }
            for (std::size_t j = 0; j < width; ++j) {
              const double d = g[r * width + j] * gv[j];
              gx[r * width + j] +=
                  inv_std[r] / dw * (dw * d - sum_d - normalized[r * width + j] * sum_dh);
            }
          }
        }
      });
}

Var max_rows(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) {
    throw DimensionError("max_rows needs a matrix, got " + shape_to_string(av.shape()));
  }
  const std::size_t rows = av.dim(0), cols = av.dim(1);
  Tensor out(Shape{cols});
  std::vector<std::size_t> argmax(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    out[c] = av.at(0, c);
    for (std::size_t r = 1; r < rows; ++r) {
      if (av.at(r, c) > out[c]) {
        out[c] = av.at(r, c);
        argmax[c] = r;
      }
    }
  }
  const NodeId ia = a.id();
  return a.tape().record(OpKind::kMaxRows, {ia}, std::move(out),
                         [ia, cols, argmax = std::move(argmax)](Tape& t, NodeId self) {
                           const Tensor& g = t.node(self).grad;
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t c = 0; c < cols; ++c) {
                             ga[argmax[c] * cols + c] += g[c];
                           }
                         });
}

Var cross_entropy(Var logits, std::size_t label, double weight) {
  const Tensor& lv = logits.value();
  const std::size_t classes = lv.numel();
  if (label >= classes) {
    throw ContractError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(classes) + " classes");
  }
  double top = lv[0];
  for (std::size_t c = 1; c < classes; ++c) top = std::max(top, lv[c]);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += std::exp(lv[c] - top);
  const double lse = top + std::log(total);
  const double loss = weight * (lse - lv[label]);
  const NodeId il = logits.id();
  return logits.tape().record(
      OpKind::kCrossEntropy, {il}, Tensor::scalar(loss),
      [il, label, weight, lse, classes](Tape& t, NodeId self) {
        const double g = t.node(self).grad[0] * weight;
        const Tensor& lv = t.value(il);
        Tensor& gl = t.grad_buffer(il);
        for (std::size_t c = 0; c < classes; ++c) {
          const double p = std::exp(lv[c] - lse);
          gl[c] += g * (p - (c == label ? 1.0 : 0.0));
        }
      });
}

Var binary_cross_entropy(Var logits, const Tensor& targets) {
  const Tensor& lv = logits.value();
  if (lv.numel() != targets.numel()) {
    throw DimensionError("binary_cross_entropy: logits " + shape_to_string(lv.shape()) +
                         " vs targets " + shape_to_string(targets.shape()));
  }
  const std::size_t n = lv.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lv[i];
    total += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const NodeId il = logits.id();
  return logits.tape().record(
      OpKind::kBinaryCrossEntropy, {il}, Tensor::scalar(total / static_cast<double>(n)),
      [il, targets, n](Tape& t, NodeId self) {
        const double g = t.node(self).grad[0] / static_cast<double>(n);
        const Tensor& lv = t.value(il);
        Tensor& gl = t.grad_buffer(il);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = lv[i];
          const double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x));
          gl[i] += g * (p - targets[i]);
        }
      });
}

}  // namespace ops
}  // namespace wavegnn
