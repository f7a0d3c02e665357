#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "gate/error.hpp"
#include "gate/syntax.hpp"

namespace gate {

// Dense row-major matrix of 64-bit reals. Vectors are 1 x d rows and scalars
// are 1 x 1; every exposed operation checks its result for NaN/Inf.
struct Array {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Array() = default;
  Array(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Array scalar(double v);
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Array& o) const {
    return rows == o.rows && cols == o.cols;
  }
  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }
  std::string shape_string() const;
};

bool all_finite(const Array& a);

// Handle to a node on a Tape.
struct Var {
  size_t id = static_cast<size_t>(-1);

  bool valid() const { return id != static_cast<size_t>(-1); }
};

// Record of primitive operations from leaves to a scalar loss; reverse-mode
// differentiation runs over the recorded order.
class Tape {
 public:
  Var leaf(Array value);

  const Array& value(Var v) const { return nodes_.at(v.id).value; }
  // Valid after backward(); zero for leaves the loss does not depend on.
  const Array& grad(Var v) const;

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var transpose(Var a);
  Var concat(const std::vector<Var>& parts, int axis);
  Var add_rowvec(Var m, Var row);
  Var gather_rows(Var table, std::vector<size_t> indices);
  Var slice_rows(Var a, size_t begin, size_t end);
  Var relu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var dropout(Var x, double rate, std::mt19937_64& rng, bool train);
  // Rows are renormalized over ALLOW entries only; FORBID entries are exactly
  // zero in the output rather than saturated with a large negative constant.
  Var masked_softmax(Var scores, const AttentionMask& mask);
  // F(P)_ij = (P_ij / D_ij) / Z_i with Z_i summing P_ij / D_ij over the
  // row's ALLOW entries; FORBID entries stay exactly zero.
  Var distance_renorm(Var p, const DistanceMatrix& dist,
                      const AttentionMask& mask);
  Var max_pool_rows(Var x);
  Var cross_entropy(Var logits, size_t target);
  Var weighted_sum(Var x, Array weights);  // sum of w .* x, yields 1 x 1

  void backward(Var loss);
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var push(Array value, std::function<void(Tape&)> back, const char* op);

  std::vector<Node> nodes_;
  std::vector<Array> grads_;
  bool ran_backward_ = false;
};

// Value-level stabilized softmax over all entries of a 1 x c row.
Array softmax_row(const Array& logits);

// Central-difference comparison of analytic gradients: perturbs every element
// of every parameter by +-eps, re-evaluates the loss, and returns the largest
// relative error |a - n| / max(1e-8, |a| + |n|).
double finite_diff_check(const std::function<double()>& loss,
                         const std::vector<Array*>& params,
                         const std::vector<Array>& analytic,
                         double eps = 1e-5);

}  // namespace gate
