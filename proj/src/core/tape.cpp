#include "nrf/tape.hpp"

#include <algorithm>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "nrf/error.hpp"
#include "nrf/vmath.hpp"

namespace nrf::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Const: return "const";
    case Op::Affine: return "affine";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Hadamard: return "hadamard";
    case Op::Scale: return "scale";
    case Op::MulRow: return "mul_row";
    case Op::AddRow: return "add_row";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Silu: return "silu";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Square: return "square";
    case Op::SqDist: return "sq_dist";
    case Op::SliceCols: return "slice_cols";
    case Op::Concat: return "concat";
    case Op::GatherRows: return "gather_rows";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
  }
  return "?";
}

namespace {

std::size_t numel(const Matrix& m) { return static_cast<std::size_t>(m.size()); }

}  // namespace

Tape::Tape() {
#ifdef __GLIBC__
  // Node buffers are large and short-lived; keep them on the heap instead of
  // fresh mmap regions that fault on every first touch.
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)tuned;
#endif
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_done_ = false;
  backward_root_ = -1;
}

const Tape::Node& Tape::node(Var v, const char* what) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw UsageError(std::string(what) + ": variable " + std::to_string(v.id) + " is not on this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Matrix& Tape::val(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.ext) return *n.ext;
  if (n.param) return n.param->value;
  return n.val;
}

void Tape::shape_error(Op op, const std::string& detail) const {
  throw ShapeError("shape mismatch at node " + std::to_string(nodes_.size()) + " (" + std::string(op_name(op)) +
                   "): " + detail);
}

Var Tape::push(Node n) {
  if (backward_done_) throw UsageError("tape already differentiated; record a new tape");
  const Matrix& v = n.ext ? *n.ext : (n.param ? n.param->value : n.val);
  if (!all_finite(v))
    throw NumericError("numeric overflow at node " + std::to_string(nodes_.size()) + " (" +
                       std::string(op_name(n.op)) + ")");
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix x, bool requires_grad) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(x);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  Node n;
  n.op = Op::Param;
  n.param = &p;
  n.needs_grad = p.trainable;
  Var v = push(std::move(n));
  param_nodes_[&p] = v.id;
  return v;
}

Var Tape::constant(Matrix x) {
  Node n;
  n.op = Op::Const;
  n.val = std::move(x);
  return push(std::move(n));
}

Var Tape::constant_ref(const Matrix& m) {
  Node n;
  n.op = Op::Const;
  n.ext = &m;
  return push(std::move(n));
}

Var Tape::affine(Var x, Var w, Var b) {
  node(x, "affine");
  node(w, "affine");
  node(b, "affine");
  const Matrix& X = val(x.id);
  const Matrix& W = val(w.id);
  const Matrix& B = val(b.id);
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
    shape_error(Op::Affine, "x " + shape_str(X) + ", W " + shape_str(W) + ", b " + shape_str(B));
  Node n;
  n.op = Op::Affine;
  n.a = x.id;
  n.b = w.id;
  n.c = b.id;
  n.val.noalias() = X * W;
  n.val.rowwise() += B.row(0);
  n.needs_grad = nodes_[x.id].needs_grad || nodes_[w.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  node(a, "matmul");
  node(b, "matmul");
  const Matrix& A = val(a.id);
  const Matrix& B = val(b.id);
  if (A.cols() != B.rows()) shape_error(Op::MatMul, shape_str(A) + " * " + shape_str(B));
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.val.noalias() = A * B;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  return push(std::move(n));
}

#define NRF_BINARY_SAME_SHAPE(OPNAME, OPENUM, EXPR)                                          \
  Var Tape::OPNAME(Var a, Var b) {                                                           \
    node(a, #OPNAME);                                                                        \
    node(b, #OPNAME);                                                                        \
    const Matrix& A = val(a.id);                                                             \
    const Matrix& B = val(b.id);                                                             \
    if (A.rows() != B.rows() || A.cols() != B.cols())                                        \
      shape_error(OPENUM, shape_str(A) + " vs " + shape_str(B));                             \
    Node n;                                                                                  \
    n.op = OPENUM;                                                                           \
    n.a = a.id;                                                                              \
    n.b = b.id;                                                                              \
    n.val = EXPR;                                                                            \
    n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;                       \
    return push(std::move(n));                                                               \
  }

NRF_BINARY_SAME_SHAPE(add, Op::Add, A + B)
NRF_BINARY_SAME_SHAPE(sub, Op::Sub, A - B)
NRF_BINARY_SAME_SHAPE(hadamard, Op::Hadamard, A.cwiseProduct(B))

#undef NRF_BINARY_SAME_SHAPE

Var Tape::scale(Var a, double s) {
  node(a, "scale");
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.alpha = s;
  n.val = val(a.id) * s;
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::mul_row(Var a, Var row) {
  node(a, "mul_row");
  node(row, "mul_row");
  const Matrix& A = val(a.id);
  const Matrix& R = val(row.id);
  if (R.rows() != 1 || R.cols() != A.cols()) shape_error(Op::MulRow, shape_str(A) + " with row " + shape_str(R));
  Node n;
  n.op = Op::MulRow;
  n.a = a.id;
  n.b = row.id;
  n.val = A.array().rowwise() * R.row(0).array();
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[row.id].needs_grad;
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var row) {
  node(a, "add_row");
  node(row, "add_row");
  const Matrix& A = val(a.id);
  const Matrix& R = val(row.id);
  if (R.rows() != 1 || R.cols() != A.cols()) shape_error(Op::AddRow, shape_str(A) + " with row " + shape_str(R));
  Node n;
  n.op = Op::AddRow;
  n.a = a.id;
  n.b = row.id;
  n.val = A;
  n.val.rowwise() += R.row(0);
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[row.id].needs_grad;
  return push(std::move(n));
}

Var Tape::unary(Op op, Var a) {
  node(a, std::string(op_name(op)).c_str());
  const Matrix& A = val(a.id);
  Node n;
  n.op = op;
  n.a = a.id;
  n.val.resize(A.rows(), A.cols());
  const std::size_t len = numel(A);
  switch (op) {
    case Op::Sin:
      n.aux.resize(A.rows(), A.cols());
      vmath::sincos(A.data(), n.val.data(), n.aux.data(), len);
      break;
    case Op::Cos:
      n.aux.resize(A.rows(), A.cols());
      vmath::sincos(A.data(), n.aux.data(), n.val.data(), len);
      break;
    case Op::Tanh:
      vmath::tanh(A.data(), n.val.data(), len);
      break;
    case Op::Silu:
      n.aux.resize(A.rows(), A.cols());
      vmath::sigmoid(A.data(), n.aux.data(), len);
      n.val = A.cwiseProduct(n.aux);
      break;
    case Op::Relu:
      n.val = A.cwiseMax(0.0);
      break;
    case Op::Exp:
      vmath::exp(A.data(), n.val.data(), len);
      break;
    case Op::Square:
      n.val = A.cwiseProduct(A);
      break;
    default:
      throw UsageError("not a unary op");
  }
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sin(Var a) { return unary(Op::Sin, a); }
Var Tape::cos(Var a) { return unary(Op::Cos, a); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a); }
Var Tape::silu(Var a) { return unary(Op::Silu, a); }
Var Tape::relu(Var a) { return unary(Op::Relu, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::square(Var a) { return unary(Op::Square, a); }

Var Tape::sq_dist(Var x, Var centers) {
  node(x, "sq_dist");
  node(centers, "sq_dist");
  const Matrix& X = val(x.id);
  const Matrix& C = val(centers.id);
  if (X.cols() != C.cols()) shape_error(Op::SqDist, "x " + shape_str(X) + ", centers " + shape_str(C));
  Node n;
  n.op = Op::SqDist;
  n.a = x.id;
  n.b = centers.id;
  n.val.setZero(X.rows(), C.rows());
  for (Index d = 0; d < X.cols(); ++d) {
    for (Index r = 0; r < X.rows(); ++r) {
      const double xv = X(r, d);
      for (Index j = 0; j < C.rows(); ++j) {
        const double diff = xv - C(j, d);
        n.val(r, j) += diff * diff;
      }
    }
  }
  n.needs_grad = nodes_[x.id].needs_grad || nodes_[centers.id].needs_grad;
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, Index start, Index count) {
  node(a, "slice_cols");
  const Matrix& A = val(a.id);
  if (start < 0 || count < 0 || start + count > A.cols())
    shape_error(Op::SliceCols, "columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                                   ") of " + shape_str(A));
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.start = start;
  n.count = count;
  n.val = A.middleCols(start, count);
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) shape_error(Op::Concat, "no operands");
  Index rows = -1, cols = 0;
  Node n;
  n.op = Op::Concat;
  for (Var p : parts) {
    node(p, "concat");
    const Matrix& P = val(p.id);
    if (rows < 0) rows = P.rows();
    if (P.rows() != rows) shape_error(Op::Concat, "row counts " + std::to_string(rows) + " vs " + shape_str(P));
    cols += P.cols();
    n.parts.push_back(p.id);
    n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
  }
  n.val.resize(rows, cols);
  Index off = 0;
  for (int id : n.parts) {
    const Matrix& P = val(id);
    n.val.middleCols(off, P.cols()) = P;
    off += P.cols();
  }
  return push(std::move(n));
}

Var Tape::gather_rows(Var table, std::vector<std::int64_t> idx, Matrix weights) {
  node(table, "gather_rows");
  const Matrix& T = val(table.id);
  if (static_cast<Index>(idx.size()) != weights.size())
    shape_error(Op::GatherRows, "index count " + std::to_string(idx.size()) + " vs weights " + shape_str(weights));
  for (std::int64_t i : idx)
    if (i < 0 || i >= T.rows())
      shape_error(Op::GatherRows, "row index " + std::to_string(i) + " outside table " + shape_str(T));
  Node n;
  n.op = Op::GatherRows;
  n.a = table.id;
  const Index B = weights.rows(), K = weights.cols(), D = T.cols();
  n.val.setZero(B, D);
  for (Index b = 0; b < B; ++b) {
    for (Index k = 0; k < K; ++k) {
      const double w = weights(b, k);
      const double* src = T.row(idx[static_cast<std::size_t>(b * K + k)]).data();
      double* dst = n.val.row(b).data();
      for (Index d = 0; d < D; ++d) dst[d] += w * src[d];
    }
  }
  n.index = std::move(idx);
  n.aux = std::move(weights);
  n.needs_grad = nodes_[table.id].needs_grad;
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  node(a, "sum");
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.val = Matrix::Constant(1, 1, val(a.id).sum());
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  node(a, "mean");
  const Matrix& A = val(a.id);
  if (A.size() == 0) shape_error(Op::Mean, "empty operand");
  Node n;
  n.op = Op::Mean;
  n.a = a.id;
  n.val = Matrix::Constant(1, 1, A.sum() / static_cast<double>(A.size()));
  n.needs_grad = nodes_[a.id].needs_grad;
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
  node(v, "value");
  return val(v.id);
}

bool Tape::requires_grad(Var v) const { return node(v, "requires_grad").needs_grad; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v, "grad");
  if (!backward_done_) throw UsageError("grad requested before backward");
  if (!n.needs_grad) throw UsageError("node " + std::to_string(v.id) + " does not require gradients");
  if (n.op != Op::Input && n.op != Op::Param && v.id != backward_root_)
    throw UsageError("gradients are kept only for inputs, parameters and the seeded output");
  if (!n.has_grad) {
    // Reached no path from the seed: gradient is zero.
    auto& mut = const_cast<Node&>(n);
    const Matrix& V = val(v.id);
    mut.grad.setZero(V.rows(), V.cols());
    mut.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

template <class Expr>
void Tape::accumulate_expr(int id, const Expr& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(Var out) {
  const Node& n = node(out, "backward");
  const Matrix& V = val(out.id);
  if (V.size() != 1) throw UsageError("backward without seed needs a scalar output, got " + shape_str(V));
  (void)n;
  backward(out, Matrix::Ones(1, 1));
}

void Tape::backward(Var out, const Matrix& seed) {
  if (nodes_.empty() || out.id < 0 || static_cast<std::size_t>(out.id) >= nodes_.size())
    throw UsageError("backward called before forward (no recorded output " + std::to_string(out.id) + ")");
  if (backward_done_) throw UsageError("backward already executed on this tape");
  const Matrix& V = val(out.id);
  if (seed.rows() != V.rows() || seed.cols() != V.cols())
    throw ShapeError("backward seed " + shape_str(seed) + " does not match output " + shape_str(V));
  backward_done_ = true;
  backward_root_ = out.id;
  if (!nodes_[out.id].needs_grad) return;
  accumulate(out.id, seed);

  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    const Matrix& G = n.grad;
    auto need = [&](int p) { return p >= 0 && nodes_[static_cast<std::size_t>(p)].needs_grad; };
    switch (n.op) {
      case Op::Input:
      case Op::Const:
        break;
      case Op::Param:
        if (n.param->trainable) n.param->grad += G;
        break;
      case Op::Affine: {
        const Matrix& X = val(n.a);
        const Matrix& W = val(n.b);
        if (need(n.a)) accumulate_expr(n.a, G * W.transpose());
        if (need(n.b)) accumulate_expr(n.b, X.transpose() * G);
        if (need(n.c)) accumulate_expr(n.c, G.colwise().sum());
        break;
      }
      case Op::MatMul: {
        const Matrix& A = val(n.a);
        const Matrix& B = val(n.b);
        if (need(n.a)) accumulate_expr(n.a, G * B.transpose());
        if (need(n.b)) accumulate_expr(n.b, A.transpose() * G);
        break;
      }
      case Op::Add:
        if (need(n.a)) accumulate(n.a, G);
        if (need(n.b)) accumulate(n.b, G);
        break;
      case Op::Sub:
        if (need(n.a)) accumulate(n.a, G);
        if (need(n.b)) accumulate_expr(n.b, -G);
        break;
      case Op::Hadamard:
        if (need(n.a)) accumulate_expr(n.a, G.cwiseProduct(val(n.b)));
        if (need(n.b)) accumulate_expr(n.b, G.cwiseProduct(val(n.a)));
        break;
      case Op::Scale:
        if (need(n.a)) accumulate_expr(n.a, G * n.alpha);
        break;
      case Op::MulRow: {
        const Matrix& A = val(n.a);
        const Matrix& R = val(n.b);
        if (need(n.a)) accumulate_expr(n.a, Matrix(G.array().rowwise() * R.row(0).array()));
        if (need(n.b)) accumulate_expr(n.b, G.cwiseProduct(A).colwise().sum());
        break;
      }
      case Op::AddRow:
        if (need(n.a)) accumulate(n.a, G);
        if (need(n.b)) accumulate_expr(n.b, G.colwise().sum());
        break;
      case Op::Sin:
        if (need(n.a)) accumulate_expr(n.a, G.cwiseProduct(n.aux));
        break;
      case Op::Cos:
        if (need(n.a)) accumulate_expr(n.a, -G.cwiseProduct(n.aux));
        break;
      case Op::Tanh:
        if (need(n.a)) accumulate_expr(n.a, Matrix(G.array() * (1.0 - n.val.array().square())));
        break;
      case Op::Silu:
        if (need(n.a)) {
          const Matrix& X = val(n.a);
          accumulate_expr(n.a, Matrix(G.array() * n.aux.array() * (1.0 + X.array() * (1.0 - n.aux.array()))));
        }
        break;
      case Op::Relu:
        if (need(n.a)) accumulate_expr(n.a, Matrix((val(n.a).array() > 0.0).select(G.array(), 0.0)));
        break;
      case Op::Exp:
        if (need(n.a)) accumulate_expr(n.a, G.cwiseProduct(n.val));
        break;
      case Op::Square:
        if (need(n.a)) accumulate_expr(n.a, 2.0 * G.cwiseProduct(val(n.a)));
        break;
      case Op::SqDist: {
        const Matrix& X = val(n.a);
        const Matrix& C = val(n.b);
        if (need(n.a)) {
          Matrix gx = X.array().colwise() * G.rowwise().sum().array();
          gx.noalias() -= G * C;
          accumulate_expr(n.a, 2.0 * gx);
        }
        if (need(n.b)) {
          Matrix gc = C.array().colwise() * G.colwise().sum().transpose().array();
          gc.noalias() -= G.transpose() * X;
          accumulate_expr(n.b, 2.0 * gc);
        }
        break;
      }
      case Op::SliceCols:
        if (need(n.a)) {
          const Matrix& A = val(n.a);
          Matrix g = Matrix::Zero(A.rows(), A.cols());
          g.middleCols(n.start, n.count) = G;
          accumulate(n.a, g);
        }
        break;
      case Op::Concat: {
        Index off = 0;
        for (int p : n.parts) {
          const Index w = val(p).cols();
          if (need(p)) accumulate_expr(p, Matrix(G.middleCols(off, w)));
          off += w;
        }
        break;
      }
      case Op::GatherRows:
        if (need(n.a)) {
          const Matrix& T = val(n.a);
          Matrix gt = Matrix::Zero(T.rows(), T.cols());
          const Index B = n.aux.rows(), K = n.aux.cols(), D = T.cols();
          for (Index b = 0; b < B; ++b) {
            const double* src = G.row(b).data();
            for (Index k = 0; k < K; ++k) {
              const double w = n.aux(b, k);
              double* dst = gt.row(n.index[static_cast<std::size_t>(b * K + k)]).data();
              for (Index d = 0; d < D; ++d) dst[d] += w * src[d];
            }
          }
          accumulate(n.a, gt);
        }
        break;
      case Op::Sum:
        if (need(n.a)) {
          const Matrix& A = val(n.a);
          accumulate_expr(n.a, Matrix::Constant(A.rows(), A.cols(), G(0, 0)));
        }
        break;
      case Op::Mean:
        if (need(n.a)) {
          const Matrix& A = val(n.a);
          accumulate_expr(n.a, Matrix::Constant(A.rows(), A.cols(), G(0, 0) / static_cast<double>(A.size())));
        }
        break;
    }
    // Interior gradients are not kept once propagated.
    if (n.op != Op::Input && n.op != Op::Param && id != out.id) {
      n.grad.resize(0, 0);
      n.has_grad = false;
    }
  }
}

}  // namespace nrf::ad
