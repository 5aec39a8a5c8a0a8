#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "brenier/rng.hpp"
#include "brenier/transport.hpp"

#include <cmath>
#include <random>

using namespace brenier;

namespace {

const Matrix kA = (Matrix(2, 2) << 2, 1, 1, 3).finished();

PotentialNet random_net(std::uint64_t seed, std::vector<int> widths = {2, 6, 5, 1}) {
  return PotentialNet({std::move(widths), Activation::recu, OutputTransform::none,
                       InitScheme::fan_in},
                      seed);
}

Vector point(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST_CASE("identity transport") {
  const auto q = QuadraticPotential::isotropic(2, 1.0);
  const GeneratorHandle g{&q};
  const Matrix z = uniform_source(10, 2, SourceDomain::unit_box, 1).points;
  CHECK(generator_apply(g, z).isApprox(z, 1e-15));
  CHECK(hessian_apply(g, point(0.3, 0.6)).isApprox(Matrix::Identity(2, 2), 1e-8));
}

TEST_CASE("generator matches finite differences of the potential") {
  const PotentialNet net = random_net(3);
  const Matrix z = uniform_source(20, 2, SourceDomain::unit_box, 2).points;
  ad::Tape t;
  const Matrix g = generator_apply(net, net.bind(t, false), t.constant(z)).value();
  NetPotential pot(net);
  CHECK(generator_apply(GeneratorHandle{&pot}, z).isApprox(g, 1e-12));
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (int i = 0; i < 2; ++i) {
      Matrix zp = z.col(j), zm = z.col(j);
      zp(i) += h;
      zm(i) -= h;
      const double fd = (net.evaluate(zp)(0, 0) - net.evaluate(zm)(0, 0)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(i, j)) /
                                  std::max({1.0, std::abs(fd), std::abs(g(i, j))}));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("generator is differentiable in the parameters") {
  for (Activation act : {Activation::recu, Activation::requ}) {
    PotentialNet net({{2, 4, 4, 1}, act, OutputTransform::none, InitScheme::fan_in}, 5);
    const Matrix z = uniform_source(6, 2, SourceDomain::unit_box, 3).points;
    auto loss = [&](ad::Tape& t) {
      return ad::sum(ad::norm_sq(generator_apply(net, net.bind(t, true), t.constant(z))));
    };
    ad::Tape t;
    const ad::Gradients grads = t.backward(loss(t));
    const double h = 1e-6;
    double worst = 0.0;
    for (auto& p : net.params()) {
      const Matrix analytic = grads.wrt(p);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double keep = p.value.data()[i];
        p.value.data()[i] = keep + h;
        ad::Tape tp;
        const double up = loss(tp).scalar();
        p.value.data()[i] = keep - h;
        ad::Tape tm;
        const double down = loss(tm).scalar();
        p.value.data()[i] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - analytic(i)) /
                                    std::max({1.0, std::abs(fd), std::abs(analytic(i))}));
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("relu potential cannot be a generator") {
  const PotentialNet net({{2, 4, 1}, Activation::relu, OutputTransform::none}, 0);
  ad::Tape t;
  try {
    generator_apply(net, net.bind(t, true), t.constant(Matrix::Ones(2, 1)));
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("generator requires a differentiable activation") !=
          std::string::npos);
  }
}

TEST_CASE("hessian of a quadratic") {
  const QuadraticPotential q(kA);
  const GeneratorHandle g{&q};
  double asym = 1.0;
  const Matrix h = hessian_apply(g, point(0.4, 0.2), kHessianStep, &asym);
  CHECK((h - kA).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(asym < 1e-6);
}

TEST_CASE("hessian of random recu nets is nearly symmetric") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const PotentialNet net = random_net(s, {2, 8, 8, 1});
    NetPotential pot(net);
    const GeneratorHandle g{&pot};
    const Matrix z = uniform_source(5, 2, SourceDomain::unit_box, s).points;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      double asym = 1.0;
      const Matrix h = hessian_apply(g, z.col(j), kHessianStep, &asym);
      CHECK(asym < 1e-5);
      CHECK(h.isApprox(h.transpose(), 0.0));
    }
    const auto batch = hessian_apply_batch(g, z);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const Matrix& b = batch[static_cast<std::size_t>(j)];
      CHECK(Matrix(0.5 * (b + b.transpose())).isApprox(hessian_apply(g, z.col(j)), 1e-8));
    }
  }
}

TEST_CASE("eigenvalues") {
  CHECK(min_eigenvalue(Matrix::Identity(2, 2)) == doctest::Approx(1.0));
  CHECK(min_eigenvalue(kA) == doctest::Approx((5 - std::sqrt(5.0)) / 2).epsilon(1e-12));
  CHECK(max_eigenvalue(kA) == doctest::Approx((5 + std::sqrt(5.0)) / 2).epsilon(1e-12));
  CHECK(min_eigenvalue((Matrix(2, 2) << 0.1, 0, 0, 5).finished()) == doctest::Approx(0.1));
  CHECK(min_eigenvalue(Matrix::Constant(1, 1, -3.0)) == -3.0);
  const Vector diag = (Vector(4) << 4, 0.5, 2, 3).finished();
  CHECK(min_eigenvalue(Matrix(diag.asDiagonal())) == doctest::Approx(0.5));
  CHECK_THROWS(min_eigenvalue((Matrix(2, 2) << 1, 0.1, 0, 1).finished()));
}

TEST_CASE("convexity scan of reference potentials") {
  const auto up = QuadraticPotential::isotropic(2, 1.0);
  const auto down = QuadraticPotential::isotropic(2, -1.0);
  const ConvexityReport a = strong_convexity_scan(GeneratorHandle{&up}, 200, 1);
  CHECK(a.min_eigenvalue_estimate == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a.samples_scanned == 200);
  REQUIRE(a.kappa_certified.has_value());
  CHECK(*a.kappa_certified <= a.min_eigenvalue_estimate);
  const ConvexityReport b = strong_convexity_scan(GeneratorHandle{&down}, 200, 1);
  CHECK(b.min_eigenvalue_estimate == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK_FALSE(b.kappa_certified.has_value());
  CHECK(b.worst_point.size() == 2);
}

TEST_CASE("inverse map") {
  const auto id = QuadraticPotential::isotropic(2, 1.0);
  const InverseResult r = inverse_map(GeneratorHandle{&id}, point(0.3, 0.7), 1.0, 1.0);
  CHECK((r.z - point(0.3, 0.7)).norm() < 1e-8);
  CHECK_FALSE(r.projection_active);

  const QuadraticPotential q(kA);
  const GeneratorHandle g{&q};
  const double lo = min_eigenvalue(kA), hi = max_eigenvalue(kA);
  const InverseResult s = inverse_map(g, kA * point(0.2, 0.4), lo, hi);
  CHECK((s.z - point(0.2, 0.4)).cwiseAbs().maxCoeff() < 1e-7);

  const InverseResult far = inverse_map(g, point(50, -50), lo, hi);
  CHECK(far.projection_active);
  CHECK(far.residual > 1e-6);
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(far.z(i) >= 0.0);
    CHECK(far.z(i) <= 1.0);
  }
}

TEST_CASE("inverse map round trip and monotonicity on a convex net") {
  // A convex potential from nonnegative output weights on convex units.
  PotentialNet net({{2, 6, 1}, Activation::recu, OutputTransform::none, InitScheme::fan_in}, 2);
  net.weight(2) = net.weight(2).cwiseAbs();
  net.bias(1).setConstant(1.0);
  NetPotential pot(net);
  const GeneratorHandle g{&pot};
  const ConvexityReport rep = strong_convexity_scan(g, 2000, 4);
  REQUIRE(rep.min_eigenvalue_estimate > 0);
  const double lo = rep.min_eigenvalue_estimate;
  const double hi = rep.max_eigenvalue_estimate * 1.5;

  const Matrix z = uniform_source(100, 2, SourceDomain::unit_box, 5).points;
  const Matrix inner = 0.1 + 0.8 * z.array();
  const Matrix x = generator_apply(g, inner);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const InverseResult r = inverse_map(g, x.col(j), lo, hi);
    CHECK((generator_apply(g, r.z) - x.col(j)).norm() < 1e-6);
  }

  const Matrix z1 = uniform_source(1000, 2, SourceDomain::unit_box, 6).points;
  const Matrix z2 = uniform_source(1000, 2, SourceDomain::unit_box, 7).points;
  const Matrix g1 = generator_apply(g, z1), g2 = generator_apply(g, z2);
  const double scan_slack = 0.9;  // the scan lower bound is itself sampled
  for (Eigen::Index j = 0; j < z1.cols(); ++j) {
    const Vector dz = z1.col(j) - z2.col(j);
    CHECK(dz.dot(g1.col(j) - g2.col(j)) >= scan_slack * lo * dz.squaredNorm());
  }
}

TEST_CASE("pushforward density of quadratics") {
  const auto two = QuadraticPotential::isotropic(2, 2.0);
  CHECK(std::abs(pushforward_density(GeneratorHandle{&two}, point(0.5, 0.5), 2.0, 2.0) -
                 0.25) < 1e-8);
  const auto id = QuadraticPotential::isotropic(2, 1.0);
  const GeneratorHandle g{&id};
  CHECK(std::abs(pushforward_density(g, point(0.3, 0.8), 1, 1) - 1.0) < 1e-8);
  CHECK(pushforward_density(g, point(1.5, 0.5), 1, 1) == 0.0);
  CHECK(pushforward_density(g, point(-0.2, -0.2), 1, 1) == 0.0);

  const QuadraticPotential q(kA);
  const double lo = min_eigenvalue(kA), hi = max_eigenvalue(kA);
  const double p = pushforward_density(GeneratorHandle{&q}, kA * point(0.5, 0.5), lo, hi);
  CHECK(std::abs(p - 1.0 / kA.determinant()) < 1e-8);
  CHECK(p >= std::pow(hi, -2) - 1e-12);
  CHECK(p <= std::pow(lo, -2) + 1e-12);
}

TEST_CASE("pushforward histogram conserves mass") {
  const QuadraticPotential q(kA);
  const GeneratorHandle g{&q};
  const Matrix x = generator_apply(g, uniform_source(100000, 2, SourceDomain::unit_box, 8).points);
  const int bins = 40;
  const double lo = -0.1, hi = 4.1, h = (hi - lo) / bins;
  Matrix counts = Matrix::Zero(bins, bins);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const int a = static_cast<int>(std::floor((x(0, j) - lo) / h));
    const int b = static_cast<int>(std::floor((x(1, j) - lo) / h));
    if (a >= 0 && a < bins && b >= 0 && b < bins) counts(a, b) += 1;
  }
  const Matrix density = counts / (static_cast<double>(x.cols()) * h * h);
  CHECK(std::abs(density.sum() * h * h - 1.0) < 0.02);
}
