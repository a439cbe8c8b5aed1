#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nrf/tensor.hpp"

namespace nrf::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), trainable(train) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  Input,
  Param,
  Const,
  Affine,
  MatMul,
  Add,
  Sub,
  Hadamard,
  Scale,
  MulRow,
  AddRow,
  Sin,
  Cos,
  Tanh,
  Silu,
  Relu,
  Exp,
  Square,
  SqDist,
  SliceCols,
  Concat,
  GatherRows,
  Sum,
  Mean,
};

std::string_view op_name(Op op);

// Define-by-run reverse-mode tape. Every op evaluates eagerly, checks its
// result for non-finite values and records what the backward pass needs.
class Tape {
 public:
  Tape();

  Var input(Matrix x, bool requires_grad = false);
  // Trainable leaf. Gradients are accumulated into p.grad by backward().
  Var param(Parameter& p);
  Var constant(Matrix x);
  // Borrowed constant: m must outlive the tape.
  Var constant_ref(const Matrix& m);

  // x·W + b, W is (in x out), b is (1 x out).
  Var affine(Var x, Var w, Var b);
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  // a with each row multiplied / offset by the single-row operand.
  Var mul_row(Var a, Var row);
  Var add_row(Var a, Var row);
  Var sin(Var a);
  Var cos(Var a);
  Var tanh(Var a);
  Var silu(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var square(Var a);
  // out(b, j) = sum_d (x(b, d) - c(j, d))^2 for x (B x D), c (J x D).
  Var sq_dist(Var x, Var centers);
  Var slice_cols(Var a, Index start, Index count);
  Var concat(std::span<const Var> parts);
  // out(b, :) = sum_k w(b, k) * table(idx(b, k), :). idx and w are (B x K).
  Var gather_rows(Var table, std::vector<std::int64_t> idx, Matrix weights);
  Var sum(Var a);
  Var mean(Var a);

  const Matrix& value(Var v) const;
  // Gradient of the last backward seed w.r.t. v. Only defined for nodes that
  // require gradients.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Seeds d(out) with `seed` (same shape as out) and propagates.
  void backward(Var out, const Matrix& seed);
  // Scalar outputs only; seeds with 1.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> parts;
    double alpha = 0.0;
    Index start = 0, count = 0;
    Parameter* param = nullptr;
    const Matrix* ext = nullptr;
    Matrix val;
    Matrix aux;
    std::vector<std::int64_t> index;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
  };

  const Node& node(Var v, const char* what) const;
  const Matrix& val(int id) const;
  Var push(Node n);
  void accumulate(int id, const Matrix& g);
  template <class Expr>
  void accumulate_expr(int id, const Expr& g);
  Var unary(Op op, Var a);
  void shape_error(Op op, const std::string& detail) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  bool backward_done_ = false;
  int backward_root_ = -1;
};

}  // namespace nrf::ad
