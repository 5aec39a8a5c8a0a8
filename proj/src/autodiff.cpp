#include "brenier/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace brenier::ad {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.value()) + " vs " +
                     shape_string(b.value()));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) {
    throw std::logic_error("operands recorded on different tapes");
  }
  return tape_of(a);
}

// Elementwise unary op with derivative f'(x) evaluated from the input.
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Matrix x = a.value();
  Matrix y = x.unaryExpr(f);
  const int ia = a.id();
  return tape_of(a).record(
      std::move(y), {ia},
      [x = std::move(x), ia, df](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, g.cwiseProduct(x.unaryExpr(df)));
      });
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ShapeError("scalar(): tensor has shape " + shape_string(v));
  }
  return v(0, 0);
}

const Matrix& Gradients::wrt(const Parameter& p) const {
  auto it = by_param_.find(&p);
  if (it == by_param_.end()) {
    throw std::out_of_range("no gradient recorded for parameter " + p.name);
  }
  return it->second;
}

const Matrix& Gradients::wrt(const Var& v) const {
  auto it = by_leaf_.find(v.id());
  if (it == by_leaf_.end()) {
    throw std::out_of_range("no gradient recorded for variable");
  }
  return it->second;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_variable = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(const Parameter& p) {
  // Parameter values are read in place; `p` must outlive the tape and stay
  // unchanged until backward returns.
  Node n;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](int i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void accumulate(std::vector<Matrix>& grads, int id, const Matrix& delta) {
  Matrix& slot = grads[id];
  if (slot.size() == 0) {
    slot = delta;
  } else {
    slot += delta;
  }
}

Gradients Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::logic_error("root not on this tape");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got " +
                     shape_string(root.value()));
  }
  std::vector<Matrix> grads(nodes_.size());
  grads[root.id()] = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || grads[i].size() == 0 || !n.backward) continue;
    n.backward(grads[i], grads);
  }
  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.param == nullptr && !n.is_variable) continue;
    const Matrix& v = value(static_cast<int>(i));
    Matrix g = grads[i].size() ? grads[i] : Matrix::Zero(v.rows(), v.cols());
    if (n.param != nullptr) {
      auto [it, inserted] = out.by_param_.try_emplace(n.param, g);
      if (!inserted) it->second += g;
    } else {
      out.by_leaf_[static_cast<int>(i)] = std::move(g);
    }
  }
  return out;
}

// ---- primitives ----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(a.value()) +
                     " vs " + shape_string(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  Matrix y = a.value() * b.value();
  return t.record(std::move(y), {ia, ib},
                  [&t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                    if (t.requires_grad(ia)) {
                      accumulate(grads, ia, g * t.value(ib).transpose());
                    }
                    if (t.requires_grad(ib)) {
                      accumulate(grads, ib, t.value(ia).transpose() * g);
                    }
                  });
}

Var transpose(const Var& a) {
  const int ia = a.id();
  return tape_of(a).record(
      a.value().transpose(), {ia},
      [ia](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, g.transpose());
      });
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {ia, ib},
                  [&t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                    if (t.requires_grad(ia)) accumulate(grads, ia, g);
                    if (t.requires_grad(ib)) accumulate(grads, ib, g);
                  });
}

Var subtract(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("subtract", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {ia, ib},
                  [&t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                    if (t.requires_grad(ia)) accumulate(grads, ia, g);
                    if (t.requires_grad(ib)) accumulate(grads, ib, -g);
                  });
}

Var add_bias(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (b.cols() != 1 || b.rows() != a.rows()) {
    throw ShapeError("add_bias: shape mismatch " + shape_string(a.value()) +
                     " vs " + shape_string(b.value()));
  }
  const int ia = a.id(), ib = b.id();
  Matrix y = a.value().colwise() + b.value().col(0);
  return t.record(std::move(y), {ia, ib},
                  [&t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                    if (t.requires_grad(ia)) accumulate(grads, ia, g);
                    if (t.requires_grad(ib)) {
                      accumulate(grads, ib, g.rowwise().sum());
                    }
                  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return tape_of(a).record(a.value() * s, {ia},
                           [ia, s](const Matrix& g, std::vector<Matrix>& grads) {
                             accumulate(grads, ia, g * s);
                           });
}

Var add_scalar(const Var& a, double s) {
  const int ia = a.id();
  return tape_of(a).record(
      (a.value().array() + s).matrix(), {ia},
      [ia](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, g);
      });
}

Var multiply(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape("multiply", a, b);
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {ia, ib},
                  [&t, ia, ib](const Matrix& g, std::vector<Matrix>& grads) {
                    if (t.requires_grad(ia)) {
                      accumulate(grads, ia, g.cwiseProduct(t.value(ib)));
                    }
                    if (t.requires_grad(ib)) {
                      accumulate(grads, ib, g.cwiseProduct(t.value(ia)));
                    }
                  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  const auto r = a.rows(), c = a.cols();
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return tape_of(a).record(
      std::move(y), {ia},
      [ia, r, c](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, Matrix::Constant(r, c, g(0, 0)));
      });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var norm_sq(const Var& a) {
  const int ia = a.id();
  Matrix x = a.value();
  Matrix y = x.colwise().squaredNorm();
  return tape_of(a).record(
      std::move(y), {ia},
      [x = std::move(x), ia](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, 2.0 * (x.array().rowwise() * g.row(0).array()).matrix());
      });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var recu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x * x * x : 0.0; },
      [](double x) { return x > 0 ? 3.0 * x * x : 0.0; });
}

Var requ(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x * x : 0.0; },
      [](double x) { return x > 0 ? 2.0 * x : 0.0; });
}

Var leaky_relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : kLeakySlope * x; },
      [](double x) { return x > 0 ? 1.0 : kLeakySlope; });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  Matrix y = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Matrix dy = y.unaryExpr([](double s) { return s * (1.0 - s); });
  return tape_of(a).record(
      std::move(y), {ia},
      [dy = std::move(dy), ia](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, ia, g.cwiseProduct(dy));
      });
}

Var recu_prime(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? 3.0 * x * x : 0.0; },
      [](double x) { return x > 0 ? 6.0 * x : 0.0; });
}

Var requ_prime(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? 2.0 * x : 0.0; },
      [](double x) { return x > 0 ? 2.0 : 0.0; });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return subtract(a, b); }
Var operator*(double s, const Var& a) { return scale(a, s); }

double grad_check(const std::function<Var(Tape&, const Var&)>& f,
                  const Matrix& point, double h) {
  if (!(h > 0)) throw std::invalid_argument("grad_check: step must be > 0");
  Matrix analytic;
  {
    Tape t;
    Var x = t.variable(point);
    Var y = f(t, x);
    analytic = t.backward(y).wrt(x);
  }
  auto eval = [&](const Matrix& p) {
    Tape t;
    Var x = t.constant(p);
    return f(t, x).scalar();
  };
  double worst = 0.0;
  Matrix probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + h;
    const double fp = eval(probe);
    probe(i) = orig - h;
    const double fm = eval(probe);
    probe(i) = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double g = analytic(i);
    const double denom = std::max({1.0, std::abs(g), std::abs(fd)});
    worst = std::max(worst, std::abs(g - fd) / denom);
  }
  return worst;
}

}  // namespace brenier::ad
