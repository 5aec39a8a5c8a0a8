#pragma once

#include "brenier/data.hpp"
#include "brenier/networks.hpp"

#include <memory>
#include <optional>

namespace brenier {

/// Scalar potential on R^d with an analytic gradient, evaluated in batches
/// (points are columns).
class Potential {
 public:
  virtual ~Potential() = default;
  virtual int dim() const = 0;
  virtual Matrix value(const Matrix& z) const = 0;     // 1 x n
  virtual Matrix gradient(const Matrix& z) const = 0;  // d x n
};

class NetPotential final : public Potential {
 public:
  explicit NetPotential(const PotentialNet& net) : net_(&net) {}
  int dim() const override { return net_->dim(); }
  Matrix value(const Matrix& z) const override { return net_->evaluate(z); }
  Matrix gradient(const Matrix& z) const override { return net_->gradient(z); }
  const PotentialNet& net() const { return *net_; }

 private:
  const PotentialNet* net_;
};

/// phi(z) = 1/2 z^T A z + b^T z with A symmetric.
class QuadraticPotential final : public Potential {
 public:
  explicit QuadraticPotential(Matrix a, Vector b = {});
  /// scale * 1/2 |z|^2 in dimension d.
  static QuadraticPotential isotropic(int d, double scale);

  int dim() const override { return static_cast<int>(a_.rows()); }
  Matrix value(const Matrix& z) const override;
  Matrix gradient(const Matrix& z) const override;
  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
  Vector b_;
};

/// G = grad phi with phi living on `domain`.
struct GeneratorHandle {
  const Potential* potential = nullptr;
  SourceDomain domain = SourceDomain::unit_box;

  int dim() const { return potential->dim(); }
  Matrix apply(const Matrix& z) const { return potential->gradient(z); }
};

/// grad_z phi(z) for every column of z, written with tape primitives as
/// W_1^T diag(s'(a_1)) ... W_L^T so the result can be differentiated again
/// with respect to the potential's parameters.
ad::Var generator_apply(const PotentialNet& net, const BoundParams& bound,
                        const ad::Var& z);
/// Numeric G(z), d x n.
Matrix generator_apply(const GeneratorHandle& g, const Matrix& z);

constexpr double kHessianStep = 1e-5;

/// Jacobian of the analytic gradient by central differences, symmetrized.
/// `asymmetry`, when given, receives |H - H^T|_F before symmetrization.
Matrix hessian_apply(const GeneratorHandle& g, const Vector& z,
                     double h = kHessianStep, double* asymmetry = nullptr);
/// One Hessian per column of z, evaluated in a single gradient batch.
std::vector<Matrix> hessian_apply_batch(const GeneratorHandle& g,
                                        const Matrix& z,
                                        double h = kHessianStep);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& h);
double max_eigenvalue(const Matrix& h);

struct ConvexityReport {
  double min_eigenvalue_estimate = 0.0;
  double max_eigenvalue_estimate = 0.0;
  Vector worst_point;
  Eigen::Index samples_scanned = 0;
  std::optional<double> kappa_certified;
};

/// Minimum Hessian eigenvalue over n_points uniform draws from the domain.
ConvexityReport strong_convexity_scan(const GeneratorHandle& g,
                                      Eigen::Index n_points,
                                      std::uint64_t seed);

class InverseMapError : public std::runtime_error {
 public:
  InverseMapError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

struct InverseResult {
  Vector z;
  double residual = 0.0;  // |grad phi(z) - x|
  bool projection_active = false;
  long iterations = 0;
};

constexpr long kInverseMaxIterations = 100000;

/// argmin over the domain box of phi(z) - <x, z>, by projected gradient
/// descent with step 1 / (2 kappa_upper).
InverseResult inverse_map(const GeneratorHandle& g, const Vector& x,
                          double kappa_lower, double kappa_upper);

/// Density of (grad phi)_# uniform at x: 1 / |det Hess phi(z*)|, or 0 when x
/// is outside the image.
double pushforward_density(const GeneratorHandle& g, const Vector& x,
                           double kappa_lower, double kappa_upper);

}  // namespace brenier
