#pragma once

// Tape-based reverse-mode differentiation over dense float-64 matrices.
//
// Every tensor is a 2-D matrix; batches are stored one point per column, so a
// batch of n points in R^d is a d x n matrix and a scalar is 1 x 1. The tape
// is rebuilt for each forward pass. Second derivatives are obtained by
// writing the analytic input-gradient of a network with the primitives below
// (see transport.hpp) and differentiating that graph once more; backward
// itself is never recorded.

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace brenier::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

std::string shape_string(const Matrix& m);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A named trainable array (W_k or B_k of some layer).
struct Parameter {
  std::string name;
  Matrix value;
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Result of a backward pass.
class Gradients {
 public:
  /// d root / d p. Zero when p was bound on the tape but not reached.
  const Matrix& wrt(const Parameter& p) const;
  /// d root / d v for a leaf created with Tape::variable.
  const Matrix& wrt(const Var& v) const;
  bool has(const Parameter& p) const { return by_param_.count(&p) != 0; }

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Matrix> by_param_;
  std::unordered_map<int, Matrix> by_leaf_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Detached value; receives no gradient.
  Var constant(Matrix value);
  /// Differentiable leaf not tied to a Parameter (inputs under test).
  Var variable(Matrix value);
  /// Differentiable leaf whose gradient is reported against `p`.
  Var parameter(const Parameter& p);

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.value;
  }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 root.
  Gradients backward(const Var& root);

  // Used by the primitive implementations.
  using BackwardFn =
      std::function<void(const Matrix& grad_out, std::vector<Matrix>& grads)>;
  Var record(Matrix value, std::vector<int> inputs, BackwardFn backward);

 private:
  struct Node {
    Matrix value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const Parameter* param = nullptr;
    bool is_variable = false;
  };
  std::vector<Node> nodes_;
};

// Accumulates `delta` into the gradient slot of node `id`, allocating it on
// first use. Only for primitive implementations.
void accumulate(std::vector<Matrix>& grads, int id, const Matrix& delta);

// ---- primitives ----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var subtract(const Var& a, const Var& b);
/// a (r x c) + b (r x 1) added to every column.
Var add_bias(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var multiply(const Var& a, const Var& b);
/// Sum of all entries, 1x1.
Var sum(const Var& a);
/// Mean of all entries, 1x1.
Var mean(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Squared euclidean norm of every column, 1 x cols.
Var norm_sq(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var relu(const Var& a);
Var recu(const Var& a);
Var requ(const Var& a);
constexpr double kLeakySlope = 0.01;
Var leaky_relu(const Var& a);
Var sigmoid(const Var& a);
/// 3 max(0,x)^2, the derivative of recu, itself differentiable.
Var recu_prime(const Var& a);
/// 2 max(0,x), the derivative of requ.
Var requ_prime(const Var& a);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);

/// Worst componentwise relative error between the backward gradient of
/// `f` at `point` and central differences with step h. Relative error is
/// |g - fd| / max(1, |g|, |fd|).
double grad_check(const std::function<Var(Tape&, const Var&)>& f,
                  const Matrix& point, double h = 1e-5);

}  // namespace brenier::ad
