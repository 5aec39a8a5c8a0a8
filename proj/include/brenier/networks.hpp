#pragma once

#include "brenier/autodiff.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace brenier {

using ad::Matrix;
using ad::Vector;

enum class Activation { recu, requ, relu, leaky_relu };
enum class OutputTransform { none, sigmoid };

/// glorot: W ~ U(+-sqrt(6 / (fan_in + fan_out))), B = 0.
/// fan_in: W, B ~ U(+-1 / sqrt(fan_in)).
/// convex_fan_in: as fan_in with |W| past the first layer, so a net with a
/// convex nondecreasing activation starts out convex.
enum class InitScheme { glorot, fan_in, convex_fan_in };

std::string_view to_string(InitScheme s);
InitScheme init_scheme_from_string(std::string_view s);

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Architecture (l_0, ..., l_L) with the hidden-layer activation. The last
/// layer is affine, followed by the output transform.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::recu;
  OutputTransform output_transform = OutputTransform::none;
  InitScheme init = InitScheme::glorot;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
  void validate() const;
};

/// Initial parameters following `spec.init`. Names are "W1", "B1", "W2", ...
std::vector<ad::Parameter> init_params(const MlpSpec& spec, std::uint64_t seed);

/// Parameters of one network bound to a tape.
struct BoundParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::uint64_t seed);
  Mlp(MlpSpec spec, std::vector<ad::Parameter> params);

  const MlpSpec& spec() const { return spec_; }
  std::vector<ad::Parameter>& params() { return params_; }
  const std::vector<ad::Parameter>& params() const { return params_; }
  std::size_t parameter_count() const;

  /// Layer index k is 1-based.
  const Matrix& weight(int k) const { return params_[2 * (k - 1)].value; }
  const Matrix& bias(int k) const { return params_[2 * (k - 1) + 1].value; }
  Matrix& weight(int k) { return params_[2 * (k - 1)].value; }
  Matrix& bias(int k) { return params_[2 * (k - 1) + 1].value; }

  /// Registers the parameters on `tape`. Frozen parameters are recorded as
  /// constants and receive no gradient.
  BoundParams bind(ad::Tape& tape, bool trainable) const;

  /// Graph forward pass over a d x n batch; returns output_dim x n.
  ad::Var forward(const BoundParams& bound, const ad::Var& x) const;

  /// Plain evaluation without a tape.
  Matrix evaluate(const Matrix& x) const;

 protected:
  void check_input(Eigen::Index rows) const;

  MlpSpec spec_;
  std::vector<ad::Parameter> params_;
};

/// Scalar potential phi. Hidden activation recu or requ for a usable
/// generator; relu is accepted here but rejected by the generator.
class PotentialNet : public Mlp {
 public:
  PotentialNet() = default;
  PotentialNet(MlpSpec spec, std::uint64_t seed);
  PotentialNet(MlpSpec spec, std::vector<ad::Parameter> params);

  int dim() const { return spec_.input_dim(); }

  /// Analytic input gradient, d x n, evaluated without a tape.
  Matrix gradient(const Matrix& x) const;
};

/// D: leaky_relu hidden layers and a sigmoid output, values in (0,1).
class DiscriminatorNet : public Mlp {
 public:
  DiscriminatorNet() = default;
  DiscriminatorNet(MlpSpec spec, std::uint64_t seed);
  DiscriminatorNet(MlpSpec spec, std::vector<ad::Parameter> params);
};

/// phi(x) per column of x, 1 x n.
ad::Var forward_potential(const PotentialNet& net, const BoundParams& bound,
                          const ad::Var& x);
ad::Var forward_discriminator(const DiscriminatorNet& net,
                              const BoundParams& bound, const ad::Var& y);

// Exact ReCU representations of multiplication and of the identity.
double recu_scalar(double x);
double recu_multiplication_gadget(double x, double y);
double recu_identity_gadget(double x);

}  // namespace brenier
