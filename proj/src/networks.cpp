#include "brenier/networks.hpp"

#include "brenier/rng.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace brenier {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::recu: return "recu";
    case Activation::requ: return "requ";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  if (s == "recu") return Activation::recu;
  if (s == "requ") return Activation::requ;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::glorot: return "glorot";
    case InitScheme::fan_in: return "fan_in";
    case InitScheme::convex_fan_in: return "convex_fan_in";
  }
  return "glorot";
}

InitScheme init_scheme_from_string(std::string_view s) {
  if (s == "glorot") return InitScheme::glorot;
  if (s == "fan_in") return InitScheme::fan_in;
  if (s == "convex_fan_in") return InitScheme::convex_fan_in;
  throw std::invalid_argument("unknown init scheme '" + std::string(s) + "'");
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("MlpSpec: need at least one layer");
  }
  for (int w : layer_widths) {
    if (w < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
  }
}

std::vector<ad::Parameter> init_params(const MlpSpec& spec,
                                       std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng(seed, {0x1417});
  std::vector<ad::Parameter> params;
  for (int k = 1; k <= spec.num_layers(); ++k) {
    const int fan_in = spec.layer_widths[k - 1];
    const int fan_out = spec.layer_widths[k];
    const double a = spec.init == InitScheme::glorot
                         ? std::sqrt(6.0 / (fan_in + fan_out))
                         : 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    if (spec.init == InitScheme::convex_fan_in && k > 1) w = w.cwiseAbs();
    Matrix b = Matrix::Zero(fan_out, 1);
    if (spec.init != InitScheme::glorot) {
      for (Eigen::Index i = 0; i < b.rows(); ++i) b(i) = dist(rng);
    }
    params.push_back({"W" + std::to_string(k), std::move(w)});
    params.push_back({"B" + std::to_string(k), std::move(b)});
  }
  return params;
}

Mlp::Mlp(MlpSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), params_(init_params(spec_, seed)) {}

Mlp::Mlp(MlpSpec spec, std::vector<ad::Parameter> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  if (params_.size() != 2 * static_cast<std::size_t>(spec_.num_layers())) {
    throw std::invalid_argument("Mlp: parameter count does not match spec");
  }
  for (int k = 1; k <= spec_.num_layers(); ++k) {
    const auto& w = weight(k);
    const auto& b = bias(k);
    if (w.rows() != spec_.layer_widths[k] ||
        w.cols() != spec_.layer_widths[k - 1] || b.rows() != w.rows() ||
        b.cols() != 1) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(k) +
                                  " has shapes " + ad::shape_string(w) + ", " +
                                  ad::shape_string(b));
    }
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (rows != spec_.input_dim()) {
    throw ad::ShapeError("network input has dimension " + std::to_string(rows) +
                         ", expected " + std::to_string(spec_.input_dim()));
  }
}

BoundParams Mlp::bind(ad::Tape& tape, bool trainable) const {
  BoundParams b;
  for (int k = 1; k <= spec_.num_layers(); ++k) {
    const auto& w = params_[2 * (k - 1)];
    const auto& bias_p = params_[2 * (k - 1) + 1];
    b.weights.push_back(trainable ? tape.parameter(w) : tape.constant(w.value));
    b.biases.push_back(trainable ? tape.parameter(bias_p)
                                 : tape.constant(bias_p.value));
  }
  return b;
}

namespace {

ad::Var activate(Activation act, const ad::Var& a) {
  switch (act) {
    case Activation::recu: return ad::recu(a);
    case Activation::requ: return ad::requ(a);
    case Activation::relu: return ad::relu(a);
    case Activation::leaky_relu: return ad::leaky_relu(a);
  }
  throw std::logic_error("unreachable");
}

double activate_scalar(Activation act, double x) {
  switch (act) {
    case Activation::recu: return x > 0 ? x * x * x : 0.0;
    case Activation::requ: return x > 0 ? x * x : 0.0;
    case Activation::relu: return x > 0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0 ? x : ad::kLeakySlope * x;
  }
  return 0.0;
}

double activate_prime_scalar(Activation act, double x) {
  switch (act) {
    case Activation::recu: return x > 0 ? 3.0 * x * x : 0.0;
    case Activation::requ: return x > 0 ? 2.0 * x : 0.0;
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0 ? 1.0 : ad::kLeakySlope;
  }
  return 0.0;
}

}  // namespace

ad::Var Mlp::forward(const BoundParams& bound, const ad::Var& x) const {
  check_input(x.rows());
  ad::Var h = x;
  const int L = spec_.num_layers();
  for (int k = 0; k < L; ++k) {
    ad::Var a = ad::add_bias(ad::matmul(bound.weights[k], h), bound.biases[k]);
    h = (k + 1 < L) ? activate(spec_.activation, a) : a;
  }
  if (spec_.output_transform == OutputTransform::sigmoid) h = ad::sigmoid(h);
  return h;
}

Matrix Mlp::evaluate(const Matrix& x) const {
  check_input(x.rows());
  Matrix h = x;
  const int L = spec_.num_layers();
  for (int k = 1; k <= L; ++k) {
    Matrix a = weight(k) * h;
    a.colwise() += bias(k).col(0);
    if (k < L) {
      const Activation act = spec_.activation;
      h = a.unaryExpr([act](double v) { return activate_scalar(act, v); });
    } else {
      h = std::move(a);
    }
  }
  if (spec_.output_transform == OutputTransform::sigmoid) {
    h = h.unaryExpr([](double v) {
      if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
      const double e = std::exp(v);
      return e / (1.0 + e);
    });
  }
  return h;
}

PotentialNet::PotentialNet(MlpSpec spec, std::uint64_t seed)
    : Mlp(std::move(spec), seed) {
  if (spec_.output_dim() != 1 ||
      spec_.output_transform != OutputTransform::none) {
    throw std::invalid_argument("PotentialNet: output must be a bare scalar");
  }
}

PotentialNet::PotentialNet(MlpSpec spec, std::vector<ad::Parameter> params)
    : Mlp(std::move(spec), std::move(params)) {
  if (spec_.output_dim() != 1 ||
      spec_.output_transform != OutputTransform::none) {
    throw std::invalid_argument("PotentialNet: output must be a bare scalar");
  }
}

Matrix PotentialNet::gradient(const Matrix& x) const {
  check_input(x.rows());
  const int L = spec_.num_layers();
  std::vector<Matrix> pre;
  pre.reserve(L);
  Matrix h = x;
  for (int k = 1; k < L; ++k) {
    Matrix a = weight(k) * h;
    a.colwise() += bias(k).col(0);
    const Activation act = spec_.activation;
    h = a.unaryExpr([act](double v) { return activate_scalar(act, v); });
    pre.push_back(std::move(a));
  }
  // Row vector W_L^T broadcast over the batch, then back through the layers.
  Matrix g = weight(L).transpose().replicate(1, x.cols());
  for (int k = L - 1; k >= 1; --k) {
    const Activation act = spec_.activation;
    g.array() *= pre[k - 1]
                     .unaryExpr([act](double v) {
                       return activate_prime_scalar(act, v);
                     })
                     .array();
    g = weight(k).transpose() * g;
  }
  return g;
}

DiscriminatorNet::DiscriminatorNet(MlpSpec spec, std::uint64_t seed)
    : Mlp(std::move(spec), seed) {
  if (spec_.output_dim() != 1 ||
      spec_.output_transform != OutputTransform::sigmoid) {
    throw std::invalid_argument(
        "DiscriminatorNet: output must be a sigmoid scalar");
  }
}

DiscriminatorNet::DiscriminatorNet(MlpSpec spec,
                                   std::vector<ad::Parameter> params)
    : Mlp(std::move(spec), std::move(params)) {
  if (spec_.output_dim() != 1 ||
      spec_.output_transform != OutputTransform::sigmoid) {
    throw std::invalid_argument(
        "DiscriminatorNet: output must be a sigmoid scalar");
  }
}

ad::Var forward_potential(const PotentialNet& net, const BoundParams& bound,
                          const ad::Var& x) {
  return net.forward(bound, x);
}

ad::Var forward_discriminator(const DiscriminatorNet& net,
                              const BoundParams& bound, const ad::Var& y) {
  return net.forward(bound, y);
}

double recu_scalar(double x) { return x > 0 ? x * x * x : 0.0; }

double recu_multiplication_gadget(double x, double y) {
  const auto s = recu_scalar;
  const double p = x + y;
  const double m = x - y;
  const double total = s(p + 1) - s(-(p + 1)) + s(-p + 1) - s(p - 1) -
                       s(m + 1) + s(-m - 1) - s(-m + 1) + s(m - 1);
  return total / 24.0;
}

double recu_identity_gadget(double x) {
  const auto s = recu_scalar;
  const double c = 1.0 / std::sqrt(6.0);
  return s(x + c) - s(-x - c) + s(x - c) - s(c - x) - 2.0 * s(x) +
         2.0 * s(-x);
}

}  // namespace brenier
