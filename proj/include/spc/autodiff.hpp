#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.  A Tape
// records every operation of one forward pass; backward() runs once.
//
// Nearest-neighbour style selections are made on values during the forward
// pass and are constants for differentiation.  They are routed through
// Tape::select so that a later tape can replay exactly the same choices,
// which is what finite-difference checks of the gradient contract need.

#include <functional>
#include <span>
#include <vector>

#include "spc/tensor.hpp"

namespace spc::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  size_t rows() const { return value().rows; }
  size_t cols() const { return value().cols; }
};

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf.
  Var input(Mat value);
  // Leaf without gradient.
  Var constant(Mat value);

  const Mat& value(Var v) const { return nodes_[size_t(v.id)].value; }
  bool requires_grad(Var v) const { return nodes_[size_t(v.id)].requires_grad; }

  // d(out)/d(leaf) for every differentiable leaf; out must be 1 x 1.
  void backward(Var out);

  // Gradient of a leaf after backward(); zeros when out does not depend on it.
  Mat grad(Var v) const;

  // Records (or replays) an integer selection computed from forward values.
  std::vector<int> select(const std::function<std::vector<int>()>& compute);

  // Makes subsequent select() calls return the selections recorded by
  // `other`, in order, before computing fresh ones.
  void replay_selections_from(const Tape& other);

  size_t size() const { return nodes_.size(); }

  // Internal: used by the operation implementations.
  using Backward = std::function<void(Tape&, int self)>;
  Var push(Mat value, std::vector<int> parents, Backward bw);
  const Mat& grad_of(int id) const { return nodes_[size_t(id)].grad; }
  void accumulate(int id, const Mat& g);
  void accumulate_scaled(int id, const Mat& g, double scale);
  Mat& grad_slot(int id);

private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Backward backward;
  };

  void check_open() const;

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> selections_;
  size_t replay_cursor_ = 0;
  bool done_ = false;
};

//============================================================================
// Operations.  Shapes must match exactly unless stated.

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);   // elementwise
Var operator/(Var a, Var b);   // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a * x + b * y with scalar coefficients.
Var affine(double a, Var x, double b, Var y);

Var sqrt(Var a);
Var abs(Var a);     // d|x|/dx = 0 at x = 0
Var tanh(Var a);
Var relu(Var a);

Var sum(Var a);     // 1 x 1
Var mean(Var a);    // 1 x 1
Var row_sum(Var a);   // M x N -> M x 1
// Euclidean norm of each row, M x N -> M x 1; gradient 0 for zero rows.
Var row_norm(Var a);

Var matmul(Var a, Var b);
Var add_row(Var a, Var row);     // M x N + 1 x N
Var mul_col(Var a, Var col);     // M x N * M x 1
Var div_col(Var a, Var col);     // M x N / M x 1

Var gather_rows(Var src, std::span<const int> idx);

// out[s] = sum_j w(s, j) * src(idx[s * k + j]), for w of shape S x k.
Var weighted_rows(Var w, std::span<const int> idx, Var src);

// [sin(t f_0), cos(t f_0), sin(t f_1), ...], f_i = 10000^(-i / (dim / 2));
// t is 1 x 1, output 1 x dim.
Var sinusoidal_embedding(Var t, size_t dim);

}  // namespace spc::ad
