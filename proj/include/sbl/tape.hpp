#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sbl/errors.hpp"
#include "sbl/param.hpp"
#include "sbl/shape.hpp"

namespace sbl {

enum class Op : uint8_t {
  kLeaf,
  kConst,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kConcat,
  kSlice,
  kSoftmax,
  kMaskedSoftmax,
  kCumsum,
  kSigmoid,
  kTanh,
  kRelu,
  kElu,
  kAbs,
  kSum,
  kMean,
  kLayerNorm,
  kEmbedLookup,
  kScale,
  kNll,
  kReshape,
  kTranspose,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSoftmax: return "softmax";
    case Op::kMaskedSoftmax: return "masked_softmax";
    case Op::kCumsum: return "cumsum";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kElu: return "elu";
    case Op::kAbs: return "abs";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kEmbedLookup: return "embedding_lookup";
    case Op::kScale: return "scale";
    case Op::kNll: return "nll";
    case Op::kReshape: return "reshape";
    case Op::kTranspose: return "transpose";
  }
  return "?";
}

struct Attrs {
  int axis = 0;
  int64_t start = 0;
  int64_t len = 0;
  double alpha = 1.0;
  double beta = 0.0;
  double eps = 0.0;
  bool transpose_b = false;
  std::vector<int64_t> ids;
};

// How the rhs of an elementwise binary maps onto the lhs.
enum class Broadcast : uint8_t { kNone, kScalar, kSuffix };

struct Node {
  Op op;
  std::vector<int32_t> inputs;
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // adjoint of the most recent backward pass
  std::vector<double> aux;   // saved activations (probabilities, norm scales)
  Attrs attrs;
  Param* param = nullptr;  // set for leaves bound to an external Param
  Broadcast bcast = Broadcast::kNone;
  bool requires_grad = false;

  int64_t size_() const { return static_cast<int64_t>(val.size()); }
};

class Tape;

struct Tensor {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  int64_t size() const;
  std::span<const double> val() const;
  double scalar() const;
  std::vector<double> to_vector() const;
};

// Records every primitive application so the loss can be differentiated in
// reverse and the forward pass replayed from the leaves.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  // ---- leaves -------------------------------------------------------------

  Tensor leaf(const Shape& shape, std::vector<double> data, bool requires_grad = false) {
    check_shape_valid(shape, "leaf");
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw DimensionError("leaf: data size " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    Node n;
    n.op = Op::kLeaf;
    n.shape = shape;
    n.val = std::move(data);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Tensor constant(const Shape& shape, std::vector<double> data) {
    Tensor t = leaf(shape, std::move(data), false);
    nodes_[t.id].op = Op::kConst;
    return t;
  }

  Tensor scalar_const(double v) { return constant({1}, {v}); }

  Tensor zeros(const Shape& shape) {
    return constant(shape, std::vector<double>(numel(shape), 0.0));
  }

  Tensor param(Param& p) {
    Node n;
    n.op = Op::kLeaf;
    n.shape = p.shape;
    n.val = p.value;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
  }

  // ---- primitive applications ----------------------------------------------

  Tensor matmul(Tensor a, Tensor b, bool transpose_b = false) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2)
      throw DimensionError(std::string("matmul: operands must be rank 2, got ") +
                           shape_str(na.shape) + " and " + shape_str(nb.shape));
    int64_t m = na.shape[0], k = na.shape[1];
    int64_t bk = transpose_b ? nb.shape[1] : nb.shape[0];
    int64_t n = transpose_b ? nb.shape[0] : nb.shape[1];
    if (k != bk)
      throw DimensionError("matmul: inner extents differ, " + shape_str(na.shape) + " x " +
                           shape_str(nb.shape) + (transpose_b ? " (rhs transposed)" : ""));
    Node out = make(Op::kMatmul, {a.id, b.id}, {m, n});
    out.attrs.transpose_b = transpose_b;
    return push(std::move(out));
  }

  Tensor add(Tensor a, Tensor b) { return binary(Op::kAdd, a, b); }
  Tensor sub(Tensor a, Tensor b) { return binary(Op::kSub, a, b); }
  Tensor mul(Tensor a, Tensor b) { return binary(Op::kMul, a, b); }

  Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& s0 = node(parts[0]).shape;
    int a = resolve_axis(axis, static_cast<int>(s0.size()), "concat");
    Shape out_shape = s0;
    int64_t total = 0;
    for (const Tensor& t : parts) {
      const Shape& s = node(t).shape;
      if (s.size() != s0.size())
        throw DimensionError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
      for (size_t d = 0; d < s.size(); ++d)
        if (static_cast<int>(d) != a && s[d] != s0[d])
          throw DimensionError("concat: extents differ off-axis, " + shape_str(s0) + " vs " +
                               shape_str(s));
      total += s[a];
    }
    out_shape[a] = total;
    std::vector<int32_t> ids;
    for (const Tensor& t : parts) ids.push_back(t.id);
    Node out = make(Op::kConcat, ids, out_shape);
    out.attrs.axis = a;
    return push(std::move(out));
  }

  Tensor slice(Tensor x, int axis, int64_t start, int64_t len) {
    const Shape& s = node(x).shape;
    int a = resolve_axis(axis, static_cast<int>(s.size()), "slice");
    if (start < 0 || len <= 0 || start + len > s[a])
      throw DimensionError("slice: range [" + std::to_string(start) + "," +
                           std::to_string(start + len) + ") out of bounds for " + shape_str(s));
    Shape out_shape = s;
    out_shape[a] = len;
    Node out = make(Op::kSlice, {x.id}, out_shape);
    out.attrs.axis = a;
    out.attrs.start = start;
    out.attrs.len = len;
    return push(std::move(out));
  }

  Tensor softmax(Tensor x, int axis) { return axis_unary(Op::kSoftmax, x, axis); }
  Tensor cumsum(Tensor x, int axis) { return axis_unary(Op::kCumsum, x, axis); }

  // Softmax of `scores` where each exponentiated entry is multiplied by
  // `mask` before normalization (stick-breaking attention). Differentiable in
  // both arguments. Normalizes the innermost axis.
  Tensor masked_softmax(Tensor scores, Tensor mask) {
    const Node& ns = node(scores);
    if (ns.shape != node(mask).shape)
      throw DimensionError("masked_softmax: shapes differ, " + shape_str(ns.shape) + " vs " +
                           shape_str(node(mask).shape));
    Node out = make(Op::kMaskedSoftmax, {scores.id, mask.id}, ns.shape);
    out.attrs.axis = static_cast<int>(ns.shape.size()) - 1;
    return push(std::move(out));
  }

  Tensor sigmoid(Tensor x) { return unary(Op::kSigmoid, x); }
  Tensor tanh(Tensor x) { return unary(Op::kTanh, x); }
  Tensor relu(Tensor x) { return unary(Op::kRelu, x); }
  Tensor elu(Tensor x) { return unary(Op::kElu, x); }
  Tensor abs(Tensor x) { return unary(Op::kAbs, x); }

  // axis >= 0 reduces that axis; axis == -1 reduces everything to a scalar.
  Tensor sum(Tensor x, int axis = -1) { return reduce(Op::kSum, x, axis); }
  Tensor mean(Tensor x, int axis = -1) { return reduce(Op::kMean, x, axis); }

  // Normalizes the innermost axis to zero mean / unit variance (no affine).
  Tensor layer_norm(Tensor x, double eps = 1e-5) {
    const Node& nx = node(x);
    if (nx.shape.empty()) throw DimensionError("layer_norm: rank-0 input");
    Node out = make(Op::kLayerNorm, {x.id}, nx.shape);
    out.attrs.eps = eps;
    return push(std::move(out));
  }

  Tensor embedding_lookup(Tensor table, const std::vector<int64_t>& ids) {
    const Node& nt = node(table);
    if (nt.shape.size() != 2)
      throw DimensionError("embedding_lookup: table must be rank 2, got " + shape_str(nt.shape));
    for (int64_t id : ids)
      if (id < 0 || id >= nt.shape[0])
        throw DimensionError("embedding_lookup: id " + std::to_string(id) +
                             " out of range for table " + shape_str(nt.shape));
    Node out = make(Op::kEmbedLookup, {table.id}, {static_cast<int64_t>(ids.size()), nt.shape[1]});
    out.attrs.ids = ids;
    return push(std::move(out));
  }

  // Elementwise alpha*x + beta.
  Tensor scale(Tensor x, double alpha, double beta = 0.0) {
    Node out = make(Op::kScale, {x.id}, node(x).shape);
    out.attrs.alpha = alpha;
    out.attrs.beta = beta;
    return push(std::move(out));
  }

  // Per-row negative log-likelihood of the target class under a stable
  // softmax of the logits. logits: (n, V); returns (n).
  Tensor nll(Tensor logits, const std::vector<int64_t>& targets) {
    const Node& nl = node(logits);
    if (nl.shape.size() != 2)
      throw DimensionError("nll: logits must be rank 2, got " + shape_str(nl.shape));
    if (static_cast<int64_t>(targets.size()) != nl.shape[0])
      throw DimensionError("nll: " + std::to_string(targets.size()) + " targets for " +
                           shape_str(nl.shape) + " logits");
    for (int64_t t : targets)
      if (t < 0 || t >= nl.shape[1])
        throw DimensionError("nll: target " + std::to_string(t) + " out of range for " +
                             shape_str(nl.shape));
    Node out = make(Op::kNll, {logits.id}, {nl.shape[0]});
    out.attrs.ids = targets;
    return push(std::move(out));
  }

  Tensor reshape(Tensor x, const Shape& shape) {
    check_shape_valid(shape, "reshape");
    if (numel(shape) != node(x).size_())
      throw DimensionError("reshape: cannot view " + shape_str(node(x).shape) + " as " +
                           shape_str(shape));
    Node out = make(Op::kReshape, {x.id}, shape);
    return push(std::move(out));
  }

  Tensor transpose(Tensor x) {
    const Shape& s = node(x).shape;
    if (s.size() != 2) throw DimensionError("transpose: rank 2 required, got " + shape_str(s));
    Node out = make(Op::kTranspose, {x.id}, {s[1], s[0]});
    return push(std::move(out));
  }

  // ---- differentiation ------------------------------------------------------

  // Reverse sweep from a scalar loss. Adjoints land in node.grad; for leaves
  // bound to a Param they are additionally accumulated into Param::grad when
  // `accumulate_params` is set (callers doing batched map-then-sum pass false
  // and flush serially for determinism).
  void backward(Tensor loss, bool accumulate_params = true) {
    if (node(loss).size_() != 1) throw ContractError("backward: loss is not a scalar");
    for (Node& n : nodes_) {
      n.grad.assign(n.val.size(), 0.0);
    }
    nodes_[loss.id].grad[0] = 1.0;
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.op == Op::kLeaf || n.op == Op::kConst) continue;
      bool any = false;
      for (double g : n.grad)
        if (g != 0.0) {
          any = true;
          break;
        }
      if (any) propagate(n);
    }
    if (accumulate_params) flush_param_grads();
  }

  void flush_param_grads() {
    for (Node& n : nodes_) {
      if (n.param == nullptr) continue;
      for (size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
    }
  }

  // Recomputes every non-leaf value from the leaves, in recorded order.
  void replay() {
    for (Node& n : nodes_) {
      if (n.op == Op::kLeaf || n.op == Op::kConst) continue;
      compute(n);
    }
  }

  // ---- access ---------------------------------------------------------------

  const Node& node(Tensor t) const { return nodes_[t.id]; }
  Node& node(Tensor t) { return nodes_[t.id]; }
  size_t size() const { return nodes_.size(); }
  std::span<const double> val(Tensor t) const { return nodes_[t.id].val; }
  std::span<const double> grad(Tensor t) const { return nodes_[t.id].grad; }

 private:
  std::vector<Node> nodes_;

  Tensor push(Node&& n) {
    if (n.op != Op::kLeaf && n.op != Op::kConst) {
      n.val.assign(numel(n.shape), 0.0);
      compute(n);
      check_finite(n);
    }
    nodes_.push_back(std::move(n));
    return Tensor{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  Node make(Op op, std::vector<int32_t> inputs, Shape shape) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.shape = std::move(shape);
    for (int32_t i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    return n;
  }

  Tensor unary(Op op, Tensor x) { return push(make(op, {x.id}, node(x).shape)); }

  Tensor axis_unary(Op op, Tensor x, int axis) {
    const Shape& s = node(x).shape;
    int a = resolve_axis(axis, static_cast<int>(s.size()), op_name(op));
    Node out = make(op, {x.id}, s);
    out.attrs.axis = a;
    return push(std::move(out));
  }

  Tensor reduce(Op op, Tensor x, int axis) {
    const Shape& s = node(x).shape;
    Shape out_shape;
    int a = -1;
    if (axis == -1) {
      out_shape = {1};
    } else {
      a = resolve_axis(axis, static_cast<int>(s.size()), op_name(op));
      for (size_t d = 0; d < s.size(); ++d)
        if (static_cast<int>(d) != a) out_shape.push_back(s[d]);
      if (out_shape.empty()) out_shape = {1};
    }
    Node out = make(op, {x.id}, out_shape);
    out.attrs.axis = a;
    return push(std::move(out));
  }

  Tensor binary(Op op, Tensor a, Tensor b) {
    const Shape& sa = node(a).shape;
    const Shape& sb = node(b).shape;
    Broadcast bc;
    if (sa == sb) {
      bc = Broadcast::kNone;
    } else if (numel(sb) == 1) {
      bc = Broadcast::kScalar;
    } else if (sb.size() <= sa.size() &&
               std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
      bc = Broadcast::kSuffix;
    } else {
      throw DimensionError(std::string(op_name(op)) + ": shapes do not conform, " +
                           shape_str(sa) + " vs " + shape_str(sb));
    }
    Node out = make(op, {a.id, b.id}, sa);
    out.bcast = bc;
    return push(std::move(out));
  }

  void check_finite(const Node& n) {
    for (double v : n.val)
      if (!std::isfinite(v))
        throw NumericError(std::string("numeric instability: op ") + op_name(n.op) + " (node " +
                           std::to_string(nodes_.size()) + ") produced a non-finite value");
  }

  static void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& n, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    n = s[axis];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  }

  // ---- forward kernels -------------------------------------------------------

  void compute(Node& n) {
    const double* A = n.inputs.size() > 0 ? nodes_[n.inputs[0]].val.data() : nullptr;
    const double* B = n.inputs.size() > 1 ? nodes_[n.inputs[1]].val.data() : nullptr;
    double* O = n.val.data();
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        return;
      case Op::kMatmul: {
        const Shape& sa = nodes_[n.inputs[0]].shape;
        int64_t m = sa[0], k = sa[1], nn = n.shape[1];
        std::fill(n.val.begin(), n.val.end(), 0.0);
        if (!n.attrs.transpose_b) {
          for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
              double a = A[i * k + p];
              if (a == 0.0) continue;
              const double* brow = B + p * nn;
              double* orow = O + i * nn;
              for (int64_t j = 0; j < nn; ++j) orow[j] += a * brow[j];
            }
        } else {
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nn; ++j) {
              double acc = 0.0;
              const double* arow = A + i * k;
              const double* brow = B + j * k;
              for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
              O[i * nn + j] = acc;
            }
        }
        return;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        int64_t total = n.size_();
        int64_t bn = nodes_[n.inputs[1]].val.size();
        for (int64_t i = 0; i < total; ++i) {
          double b = n.bcast == Broadcast::kNone     ? B[i]
                     : n.bcast == Broadcast::kScalar ? B[0]
                                                     : B[i % bn];
          O[i] = n.op == Op::kAdd ? A[i] + b : n.op == Op::kSub ? A[i] - b : A[i] * b;
        }
        return;
      }
      case Op::kConcat: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        int64_t off = 0;
        for (int32_t in_id : n.inputs) {
          const Node& src = nodes_[in_id];
          int64_t sn = src.shape[n.attrs.axis];
          for (int64_t o = 0; o < outer; ++o)
            std::copy_n(src.val.data() + o * sn * inner, sn * inner,
                        O + (o * len + off) * inner);
          off += sn;
        }
        return;
      }
      case Op::kSlice: {
        const Node& src = nodes_[n.inputs[0]];
        int64_t outer, len, inner;
        axis_split(src.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          std::copy_n(src.val.data() + (o * len + n.attrs.start) * inner, n.attrs.len * inner,
                      O + o * n.attrs.len * inner);
        return;
      }
      case Op::kSoftmax: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            const double* x = A + o * len * inner + in;
            double* y = O + o * len * inner + in;
            double mx = x[0];
            for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[i * inner]);
            double s = 0.0;
            for (int64_t i = 0; i < len; ++i) {
              double e = std::exp(x[i * inner] - mx);
              y[i * inner] = e;
              s += e;
            }
            for (int64_t i = 0; i < len; ++i) y[i * inner] /= s;
          }
        return;
      }
      case Op::kMaskedSoftmax: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        n.aux.assign(n.val.size(), 0.0);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * len * inner + in;
            double mx = A[base];
            for (int64_t i = 1; i < len; ++i) mx = std::max(mx, A[base + i * inner]);
            double s = 0.0;
            for (int64_t i = 0; i < len; ++i) {
              double e = std::exp(A[base + i * inner] - mx);
              n.aux[base + i * inner] = e;
              s += e * B[base + i * inner];
            }
            if (s <= 0.0)
              throw NumericError("masked_softmax: normalizer is zero (all probability masked)");
            for (int64_t i = 0; i < len; ++i) {
              n.aux[base + i * inner] /= s;
              O[base + i * inner] = n.aux[base + i * inner] * B[base + i * inner];
            }
          }
        return;
      }
      case Op::kCumsum: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * len * inner + in;
            double acc = 0.0;
            for (int64_t i = 0; i < len; ++i) {
              acc += A[base + i * inner];
              O[base + i * inner] = acc;
            }
          }
        return;
      }
      case Op::kSigmoid:
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = 1.0 / (1.0 + std::exp(-A[i]));
        return;
      case Op::kTanh:
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = std::tanh(A[i]);
        return;
      case Op::kRelu:
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = A[i] > 0.0 ? A[i] : 0.0;
        return;
      case Op::kElu:  // alpha = 1
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = A[i] > 0.0 ? A[i] : std::expm1(A[i]);
        return;
      case Op::kAbs:
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = std::fabs(A[i]);
        return;
      case Op::kSum:
      case Op::kMean: {
        const Node& src = nodes_[n.inputs[0]];
        if (n.attrs.axis == -1) {
          double acc = 0.0;
          for (double v : src.val) acc += v;
          O[0] = n.op == Op::kMean ? acc / static_cast<double>(src.val.size()) : acc;
        } else {
          int64_t outer, len, inner;
          axis_split(src.shape, n.attrs.axis, outer, len, inner);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
              double acc = 0.0;
              for (int64_t i = 0; i < len; ++i) acc += src.val[(o * len + i) * inner + in];
              O[o * inner + in] = n.op == Op::kMean ? acc / static_cast<double>(len) : acc;
            }
        }
        return;
      }
      case Op::kLayerNorm: {
        int64_t d = n.shape.back();
        int64_t rows = n.size_() / d;
        n.aux.assign(rows, 0.0);
        for (int64_t r = 0; r < rows; ++r) {
          const double* x = A + r * d;
          double* y = O + r * d;
          double mu = 0.0;
          for (int64_t i = 0; i < d; ++i) mu += x[i];
          mu /= static_cast<double>(d);
          double var = 0.0;
          for (int64_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
          var /= static_cast<double>(d);
          double s = std::sqrt(var + n.attrs.eps);
          n.aux[r] = s;
          for (int64_t i = 0; i < d; ++i) y[i] = (x[i] - mu) / s;
        }
        return;
      }
      case Op::kEmbedLookup: {
        int64_t d = n.shape[1];
        for (size_t r = 0; r < n.attrs.ids.size(); ++r)
          std::copy_n(A + n.attrs.ids[r] * d, d, O + r * d);
        return;
      }
      case Op::kScale:
        for (int64_t i = 0; i < n.size_(); ++i) O[i] = n.attrs.alpha * A[i] + n.attrs.beta;
        return;
      case Op::kNll: {
        const Shape& sl = nodes_[n.inputs[0]].shape;
        int64_t rows = sl[0], v = sl[1];
        n.aux.assign(rows * v, 0.0);
        for (int64_t r = 0; r < rows; ++r) {
          const double* x = A + r * v;
          double mx = x[0];
          for (int64_t i = 1; i < v; ++i) mx = std::max(mx, x[i]);
          double s = 0.0;
          for (int64_t i = 0; i < v; ++i) {
            double e = std::exp(x[i] - mx);
            n.aux[r * v + i] = e;
            s += e;
          }
          for (int64_t i = 0; i < v; ++i) n.aux[r * v + i] /= s;
          O[r] = std::log(s) - (x[n.attrs.ids[r]] - mx);
        }
        return;
      }
      case Op::kReshape:
        std::copy(nodes_[n.inputs[0]].val.begin(), nodes_[n.inputs[0]].val.end(), O);
        return;
      case Op::kTranspose: {
        int64_t r = n.shape[0], c = n.shape[1];
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) O[i * c + j] = A[j * r + i];
        return;
      }
    }
  }

  // ---- backward kernels --------------------------------------------------------

  void propagate(Node& n) {
    const double* G = n.grad.data();
    Node& a = nodes_[n.inputs[0]];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        return;
      case Op::kMatmul: {
        Node& b = nodes_[n.inputs[1]];
        int64_t m = a.shape[0], k = a.shape[1], nn = n.shape[1];
        if (!n.attrs.transpose_b) {
          if (a.requires_grad)  // dA = G * B^T
            for (int64_t i = 0; i < m; ++i)
              for (int64_t p = 0; p < k; ++p) {
                double acc = 0.0;
                const double* grow = G + i * nn;
                const double* brow = b.val.data() + p * nn;
                for (int64_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
                a.grad[i * k + p] += acc;
              }
          if (b.requires_grad)  // dB = A^T * G
            for (int64_t p = 0; p < k; ++p)
              for (int64_t i = 0; i < m; ++i) {
                double av = a.val[i * k + p];
                if (av == 0.0) continue;
                const double* grow = G + i * nn;
                double* brow = b.grad.data() + p * nn;
                for (int64_t j = 0; j < nn; ++j) brow[j] += av * grow[j];
              }
        } else {  // C = A * B^T, B is (n, k)
          if (a.requires_grad)  // dA = G * B
            for (int64_t i = 0; i < m; ++i)
              for (int64_t j = 0; j < nn; ++j) {
                double g = G[i * nn + j];
                if (g == 0.0) continue;
                const double* brow = b.val.data() + j * k;
                double* arow = a.grad.data() + i * k;
                for (int64_t p = 0; p < k; ++p) arow[p] += g * brow[p];
              }
          if (b.requires_grad)  // dB = G^T * A
            for (int64_t j = 0; j < nn; ++j)
              for (int64_t i = 0; i < m; ++i) {
                double g = G[i * nn + j];
                if (g == 0.0) continue;
                const double* arow = a.val.data() + i * k;
                double* brow = b.grad.data() + j * k;
                for (int64_t p = 0; p < k; ++p) brow[p] += g * arow[p];
              }
        }
        return;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul: {
        Node& b = nodes_[n.inputs[1]];
        int64_t total = n.size_();
        int64_t bn = b.val.size();
        for (int64_t i = 0; i < total; ++i) {
          int64_t bi = n.bcast == Broadcast::kNone ? i : n.bcast == Broadcast::kScalar ? 0 : i % bn;
          if (n.op == Op::kMul) {
            if (a.requires_grad) a.grad[i] += G[i] * b.val[bi];
            if (b.requires_grad) b.grad[bi] += G[i] * a.val[i];
          } else {
            if (a.requires_grad) a.grad[i] += G[i];
            if (b.requires_grad) b.grad[bi] += n.op == Op::kAdd ? G[i] : -G[i];
          }
        }
        return;
      }
      case Op::kConcat: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        int64_t off = 0;
        for (int32_t in_id : n.inputs) {
          Node& src = nodes_[in_id];
          int64_t sn = src.shape[n.attrs.axis];
          if (src.requires_grad)
            for (int64_t o = 0; o < outer; ++o) {
              const double* g = G + (o * len + off) * inner;
              double* d = src.grad.data() + o * sn * inner;
              for (int64_t i = 0; i < sn * inner; ++i) d[i] += g[i];
            }
          off += sn;
        }
        return;
      }
      case Op::kSlice: {
        int64_t outer, len, inner;
        axis_split(a.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o) {
          double* d = a.grad.data() + (o * len + n.attrs.start) * inner;
          const double* g = G + o * n.attrs.len * inner;
          for (int64_t i = 0; i < n.attrs.len * inner; ++i) d[i] += g[i];
        }
        return;
      }
      case Op::kSoftmax: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * len * inner + in;
            double dot = 0.0;
            for (int64_t i = 0; i < len; ++i) dot += G[base + i * inner] * n.val[base + i * inner];
            for (int64_t i = 0; i < len; ++i)
              a.grad[base + i * inner] += n.val[base + i * inner] * (G[base + i * inner] - dot);
          }
        return;
      }
      case Op::kMaskedSoftmax: {
        Node& b = nodes_[n.inputs[1]];
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * len * inner + in;
            double dot = 0.0;
            for (int64_t i = 0; i < len; ++i) dot += G[base + i * inner] * n.val[base + i * inner];
            for (int64_t i = 0; i < len; ++i) {
              int64_t ix = base + i * inner;
              if (a.requires_grad) a.grad[ix] += n.val[ix] * (G[ix] - dot);
              if (b.requires_grad) b.grad[ix] += n.aux[ix] * (G[ix] - dot);
            }
          }
        return;
      }
      case Op::kCumsum: {
        int64_t outer, len, inner;
        axis_split(n.shape, n.attrs.axis, outer, len, inner);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * len * inner + in;
            double acc = 0.0;
            for (int64_t i = len - 1; i >= 0; --i) {
              acc += G[base + i * inner];
              a.grad[base + i * inner] += acc;
            }
          }
        return;
      }
      case Op::kSigmoid:
        for (int64_t i = 0; i < n.size_(); ++i)
          a.grad[i] += G[i] * n.val[i] * (1.0 - n.val[i]);
        return;
      case Op::kTanh:
        for (int64_t i = 0; i < n.size_(); ++i) a.grad[i] += G[i] * (1.0 - n.val[i] * n.val[i]);
        return;
      case Op::kRelu:
        for (int64_t i = 0; i < n.size_(); ++i)
          if (a.val[i] > 0.0) a.grad[i] += G[i];
        return;
      case Op::kElu:
        for (int64_t i = 0; i < n.size_(); ++i)
          a.grad[i] += a.val[i] > 0.0 ? G[i] : G[i] * (n.val[i] + 1.0);
        return;
      case Op::kAbs:
        for (int64_t i = 0; i < n.size_(); ++i)
          a.grad[i] += a.val[i] > 0.0 ? G[i] : a.val[i] < 0.0 ? -G[i] : 0.0;
        return;
      case Op::kSum:
      case Op::kMean: {
        if (n.attrs.axis == -1) {
          double g = G[0];
          if (n.op == Op::kMean) g /= static_cast<double>(a.val.size());
          for (size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += g;
        } else {
          int64_t outer, len, inner;
          axis_split(a.shape, n.attrs.axis, outer, len, inner);
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
              double g = G[o * inner + in];
              if (n.op == Op::kMean) g /= static_cast<double>(len);
              for (int64_t i = 0; i < len; ++i) a.grad[(o * len + i) * inner + in] += g;
            }
        }
        return;
      }
      case Op::kLayerNorm: {
        int64_t d = n.shape.back();
        int64_t rows = n.size_() / d;
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = G + r * d;
          const double* y = n.val.data() + r * d;
          double gmean = 0.0, gymean = 0.0;
          for (int64_t i = 0; i < d; ++i) {
            gmean += g[i];
            gymean += g[i] * y[i];
          }
          gmean /= static_cast<double>(d);
          gymean /= static_cast<double>(d);
          double s = n.aux[r];
          for (int64_t i = 0; i < d; ++i) a.grad[r * d + i] += (g[i] - gmean - y[i] * gymean) / s;
        }
        return;
      }
      case Op::kEmbedLookup: {
        int64_t d = n.shape[1];
        for (size_t r = 0; r < n.attrs.ids.size(); ++r) {
          double* dst = a.grad.data() + n.attrs.ids[r] * d;
          const double* g = G + r * d;
          for (int64_t i = 0; i < d; ++i) dst[i] += g[i];
        }
        return;
      }
      case Op::kScale:
        for (int64_t i = 0; i < n.size_(); ++i) a.grad[i] += n.attrs.alpha * G[i];
        return;
      case Op::kNll: {
        int64_t rows = a.shape[0], v = a.shape[1];
        for (int64_t r = 0; r < rows; ++r) {
          double g = G[r];
          if (g == 0.0) continue;
          const double* p = n.aux.data() + r * v;
          double* d = a.grad.data() + r * v;
          for (int64_t i = 0; i < v; ++i) d[i] += g * p[i];
          d[n.attrs.ids[r]] -= g;
        }
        return;
      }
      case Op::kReshape:
        for (int64_t i = 0; i < n.size_(); ++i) a.grad[i] += G[i];
        return;
      case Op::kTranspose: {
        int64_t r = n.shape[0], c = n.shape[1];
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) a.grad[j * r + i] += G[i * c + j];
        return;
      }
    }
  }

  friend struct Tensor;
};

inline const Shape& Tensor::shape() const { return tape->node(*this).shape; }
inline int64_t Tensor::size() const { return numel(shape()); }
inline std::span<const double> Tensor::val() const { return tape->val(*this); }
inline double Tensor::scalar() const { return tape->val(*this)[0]; }
inline std::vector<double> Tensor::to_vector() const {
  auto v = val();
  return std::vector<double>(v.begin(), v.end());
}

// int64_t size helper on Node (val may not be sized yet during construction).
inline int64_t node_numel(const Node& n) { return numel(n.shape); }

}  // namespace sbl
