#include "brenier/transport.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace brenier {

QuadraticPotential::QuadraticPotential(Matrix a, Vector b)
    : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols()) {
    throw std::invalid_argument("QuadraticPotential: matrix must be square");
  }
  if (b_.size() == 0) b_ = Vector::Zero(a_.rows());
  if (b_.size() != a_.rows()) {
    throw std::invalid_argument("QuadraticPotential: offset has wrong size");
  }
}

QuadraticPotential QuadraticPotential::isotropic(int d, double scale) {
  return QuadraticPotential(scale * Matrix::Identity(d, d));
}

Matrix QuadraticPotential::value(const Matrix& z) const {
  Matrix az = a_ * z;
  Matrix out = 0.5 * z.cwiseProduct(az).colwise().sum();
  out += b_.transpose() * z;
  return out;
}

Matrix QuadraticPotential::gradient(const Matrix& z) const {
  return (a_ * z).colwise() + b_;
}

ad::Var generator_apply(const PotentialNet& net, const BoundParams& bound,
                        const ad::Var& z) {
  const MlpSpec& spec = net.spec();
  if (spec.activation != Activation::recu &&
      spec.activation != Activation::requ) {
    throw std::invalid_argument(
        "generator requires a differentiable activation (recu or requ), got " +
        std::string(to_string(spec.activation)));
  }
  if (z.rows() != spec.input_dim()) {
    throw ad::ShapeError("generator input has dimension " +
                         std::to_string(z.rows()) + ", expected " +
                         std::to_string(spec.input_dim()));
  }
  ad::Tape& tape = *z.tape();
  const int L = spec.num_layers();
  std::vector<ad::Var> pre;
  ad::Var h = z;
  for (int k = 0; k + 1 < L; ++k) {
    ad::Var a = ad::add_bias(ad::matmul(bound.weights[k], h), bound.biases[k]);
    h = spec.activation == Activation::recu ? ad::recu(a) : ad::requ(a);
    pre.push_back(a);
  }
  ad::Var ones = tape.constant(Matrix::Ones(1, z.cols()));
  ad::Var g = ad::matmul(ad::transpose(bound.weights[L - 1]), ones);
  for (int k = L - 2; k >= 0; --k) {
    ad::Var slope = spec.activation == Activation::recu
                        ? ad::recu_prime(pre[k])
                        : ad::requ_prime(pre[k]);
    g = ad::matmul(ad::transpose(bound.weights[k]), ad::multiply(slope, g));
  }
  return g;
}

Matrix generator_apply(const GeneratorHandle& g, const Matrix& z) {
  return g.apply(z);
}

std::vector<Matrix> hessian_apply_batch(const GeneratorHandle& g,
                                        const Matrix& z, double h) {
  const Eigen::Index d = z.rows();
  const Eigen::Index n = z.cols();
  // Column block j holds z_j + h e_1, ..., z_j + h e_d, z_j - h e_1, ...
  Matrix probes(d, 2 * d * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      Vector plus = z.col(j);
      Vector minus = z.col(j);
      plus(i) += h;
      minus(i) -= h;
      probes.col(2 * d * j + i) = plus;
      probes.col(2 * d * j + d + i) = minus;
    }
  }
  const Matrix grads = g.apply(probes);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Matrix hess(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      hess.col(i) = (grads.col(2 * d * j + i) - grads.col(2 * d * j + d + i)) /
                    (2.0 * h);
    }
    out.push_back(std::move(hess));
  }
  return out;
}

Matrix hessian_apply(const GeneratorHandle& g, const Vector& z, double h,
                     double* asymmetry) {
  Matrix raw = std::move(hessian_apply_batch(g, z, h).front());
  if (asymmetry != nullptr) *asymmetry = (raw - raw.transpose()).norm();
  return 0.5 * (raw + raw.transpose());
}

namespace {

void require_symmetric(const Matrix& h) {
  if (h.rows() != h.cols()) {
    throw std::invalid_argument("min_eigenvalue: matrix is not square " +
                                ad::shape_string(h));
  }
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6) {
    throw std::invalid_argument("min_eigenvalue: matrix is not symmetric (max |H - H^T| = " +
                                std::to_string(asym) + ")");
  }
}

// Eigenvalues of a symmetric 2x2 in closed form, ascending.
std::pair<double, double> eig2(const Matrix& h) {
  const double mid = 0.5 * (h(0, 0) + h(1, 1));
  const double half_gap = 0.5 * (h(0, 0) - h(1, 1));
  const double r = std::hypot(half_gap, 0.5 * (h(0, 1) + h(1, 0)));
  return {mid - r, mid + r};
}

}  // namespace

double min_eigenvalue(const Matrix& h) {
  require_symmetric(h);
  if (h.rows() == 1) return h(0, 0);
  if (h.rows() == 2) return eig2(h).first;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

double max_eigenvalue(const Matrix& h) {
  require_symmetric(h);
  if (h.rows() == 1) return h(0, 0);
  if (h.rows() == 2) return eig2(h).second;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(h.rows() - 1);
}

ConvexityReport strong_convexity_scan(const GeneratorHandle& g,
                                      Eigen::Index n_points,
                                      std::uint64_t seed) {
  if (n_points < 1) {
    throw std::invalid_argument("strong_convexity_scan: n_points must be >= 1");
  }
  const SampleSet pts = uniform_source(n_points, g.dim(), g.domain, seed);
  ConvexityReport report;
  report.min_eigenvalue_estimate = std::numeric_limits<double>::infinity();
  report.max_eigenvalue_estimate = -std::numeric_limits<double>::infinity();
  // Chunked so the probe batch stays bounded in high dimension.
  const Eigen::Index chunk =
      std::max<Eigen::Index>(1, 4096 / (2 * static_cast<Eigen::Index>(g.dim())));
  for (Eigen::Index start = 0; start < n_points; start += chunk) {
    const Eigen::Index len = std::min(chunk, n_points - start);
    const auto hessians =
        hessian_apply_batch(g, pts.points.middleCols(start, len));
    for (Eigen::Index j = 0; j < len; ++j) {
      const Matrix sym = 0.5 * (hessians[j] + hessians[j].transpose());
      const double lo = min_eigenvalue(sym);
      const double hi = max_eigenvalue(sym);
      if (lo < report.min_eigenvalue_estimate) {
        report.min_eigenvalue_estimate = lo;
        report.worst_point = pts.points.col(start + j);
      }
      report.max_eigenvalue_estimate = std::max(report.max_eigenvalue_estimate, hi);
    }
  }
  report.samples_scanned = n_points;
  if (report.min_eigenvalue_estimate > 0) {
    report.kappa_certified = report.min_eigenvalue_estimate;
  }
  return report;
}

InverseResult inverse_map(const GeneratorHandle& g, const Vector& x,
                          double kappa_lower, double kappa_upper) {
  if (!(kappa_lower > 0)) {
    throw std::invalid_argument("inverse_map: kappa_lower must be > 0");
  }
  if (!(kappa_upper >= kappa_lower)) {
    throw std::invalid_argument("inverse_map: kappa_upper must be >= kappa_lower");
  }
  if (x.size() != g.dim()) {
    throw ad::ShapeError("inverse_map: point has dimension " +
                         std::to_string(x.size()) + ", expected " +
                         std::to_string(g.dim()));
  }
  const double lo = domain_low(g.domain);
  const double hi = domain_high(g.domain);
  const double step = 1.0 / (2.0 * kappa_upper);
  Vector z = Vector::Constant(x.size(), 0.5 * (lo + hi));
  double residual = std::numeric_limits<double>::infinity();
  for (long it = 0; it < kInverseMaxIterations; ++it) {
    const Vector r = g.apply(z) - x;
    residual = r.norm();
    if (residual < 1e-8) return {z, residual, false, it};
    Vector next = z - step * r;
    bool clipped = false;
    for (Eigen::Index i = 0; i < next.size(); ++i) {
      if (next(i) < lo || next(i) > hi) {
        next(i) = std::clamp(next(i), lo, hi);
        clipped = true;
      }
    }
    // Stationary under projection: the constrained minimum is on the boundary.
    if (clipped && (next - z).norm() < 1e-14) {
      return {next, (g.apply(next) - x).norm(), true, it + 1};
    }
    z = std::move(next);
  }
  throw InverseMapError("inverse_map: no convergence after " +
                            std::to_string(kInverseMaxIterations) +
                            " iterations, residual " + std::to_string(residual),
                        residual);
}

double pushforward_density(const GeneratorHandle& g, const Vector& x,
                           double kappa_lower, double kappa_upper) {
  const InverseResult inv = inverse_map(g, x, kappa_lower, kappa_upper);
  if (inv.projection_active && inv.residual > 1e-6) return 0.0;
  const Matrix h = hessian_apply(g, inv.z);
  return 1.0 / std::abs(h.determinant());
}

}  // namespace brenier
