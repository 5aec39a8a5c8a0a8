#include "brenier/losses.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace brenier {

ad::Var gan_loss_empirical(const ad::Var& d_real, const ad::Var& d_fake) {
  if (d_real.value().size() == 0 || d_fake.value().size() == 0) {
    throw std::invalid_argument("gan_loss_empirical: empty batch");
  }
  ad::Var real_term =
      ad::mean(ad::log(ad::clamp(d_real, kLogClamp, 1.0 - kLogClamp)));
  ad::Var fake_term = ad::mean(ad::log(ad::add_scalar(
      ad::scale(ad::clamp(d_fake, kLogClamp, 1.0 - kLogClamp), -1.0), 1.0)));
  return ad::scale(ad::add(real_term, fake_term), 0.5);
}

std::string_view to_string(GeneratorObjective o) {
  return o == GeneratorObjective::saturating ? "saturating" : "non_saturating";
}

GeneratorObjective generator_objective_from_string(std::string_view s) {
  if (s == "saturating") return GeneratorObjective::saturating;
  if (s == "non_saturating") return GeneratorObjective::non_saturating;
  throw std::invalid_argument("unknown generator objective '" + std::string(s) + "'");
}

double gan_loss_empirical(const Vector& d_real, const Vector& d_fake) {
  if (d_real.size() == 0 || d_fake.size() == 0) {
    throw std::invalid_argument("gan_loss_empirical: empty batch");
  }
  auto clip = [](double v) { return std::clamp(v, kLogClamp, 1.0 - kLogClamp); };
  double real = 0.0;
  for (double v : d_real) real += std::log(clip(v));
  double fake = 0.0;
  for (double v : d_fake) fake += std::log(1.0 - clip(v));
  return 0.5 * real / static_cast<double>(d_real.size()) +
         0.5 * fake / static_cast<double>(d_fake.size());
}

namespace {

void check_pairs(double kappa, const Matrix& u, const Matrix& u_prime) {
  if (u.cols() < 1 || u.cols() != u_prime.cols() ||
      u.rows() != u_prime.rows()) {
    throw ad::ShapeError("convexity penalty: pair shapes " +
                         ad::shape_string(u) + " vs " +
                         ad::shape_string(u_prime));
  }
  if (!(kappa >= 0) || !std::isfinite(kappa)) {
    throw std::invalid_argument("convexity penalty: kappa must be >= 0");
  }
}

}  // namespace

ad::Var convexity_penalty_empirical(ad::Tape& tape, const ScalarField& phi,
                                    double kappa, const Matrix& u,
                                    const Matrix& u_prime) {
  check_pairs(kappa, u, u_prime);
  const Matrix gap = (kappa / 8.0) * (u - u_prime).colwise().squaredNorm();
  ad::Var f_mid = phi(tape.constant(0.5 * (u + u_prime)));
  ad::Var f_u = phi(tape.constant(u));
  ad::Var f_v = phi(tape.constant(u_prime));
  ad::Var violation =
      ad::add(ad::subtract(f_mid, ad::scale(ad::add(f_u, f_v), 0.5)),
              tape.constant(gap));
  return ad::mean(ad::relu(violation));
}

PenaltyPairs draw_penalty_pairs(Eigen::Index d, Eigen::Index m,
                                SourceDomain domain, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("penalty: m must be >= 1");
  // Both halves come from one draw of 2m points.
  const SampleSet both = uniform_source(2 * m, d, domain, seed);
  return {both.points.leftCols(m), both.points.rightCols(m)};
}

namespace {

PenaltyEstimate summarize(const Matrix& terms) {
  const auto m = static_cast<double>(terms.size());
  const Eigen::ArrayXd t = terms.reshaped().array().max(0.0);
  PenaltyEstimate e;
  e.value = t.mean();
  if (terms.size() > 1) {
    const double var = (t - e.value).square().sum() / (m - 1.0);
    e.std_error = std::sqrt(var / m);
  }
  return e;
}

}  // namespace

PenaltyEstimate convexity_penalty_empirical(const ScalarField& phi, int d,
                                            double kappa, Eigen::Index m,
                                            std::uint64_t seed,
                                            SourceDomain domain) {
  const PenaltyPairs pairs = draw_penalty_pairs(d, m, domain, seed);
  check_pairs(kappa, pairs.u, pairs.u_prime);
  ad::Tape tape;
  const Matrix mid = phi(tape.constant(0.5 * (pairs.u + pairs.u_prime))).value();
  const Matrix fu = phi(tape.constant(pairs.u)).value();
  const Matrix fv = phi(tape.constant(pairs.u_prime)).value();
  const Matrix gap =
      (kappa / 8.0) * (pairs.u - pairs.u_prime).colwise().squaredNorm();
  return summarize(mid - 0.5 * (fu + fv) + gap);
}

PenaltyEstimate convexity_penalty_empirical(const PotentialNet& phi,
                                            double kappa, Eigen::Index m,
                                            std::uint64_t seed,
                                            SourceDomain domain) {
  const PenaltyPairs pairs = draw_penalty_pairs(phi.dim(), m, domain, seed);
  check_pairs(kappa, pairs.u, pairs.u_prime);
  const Matrix mid = phi.evaluate(0.5 * (pairs.u + pairs.u_prime));
  const Matrix fu = phi.evaluate(pairs.u);
  const Matrix fv = phi.evaluate(pairs.u_prime);
  const Matrix gap =
      (kappa / 8.0) * (pairs.u - pairs.u_prime).colwise().squaredNorm();
  return summarize(mid - 0.5 * (fu + fv) + gap);
}

double convexity_penalty_quadrature(
    const std::function<double(const Vector&)>& phi, double kappa, int grid,
    int d, SourceDomain domain) {
  if (d < 1 || d > 2) {
    throw std::invalid_argument("convexity_penalty_quadrature: d must be 1 or 2");
  }
  if (grid < 1) throw std::invalid_argument("quadrature grid must be >= 1");
  const double lo = domain_low(domain);
  const double h = (domain_high(domain) - lo) / grid;
  // Node i sits at lo + (i + 1/2) h; the midpoint of nodes i and j sits on
  // the half grid at index i + j.
  auto node = [&](int i) { return lo + (i + 0.5) * h; };
  auto half = [&](int s) { return lo + (0.5 * s + 0.5) * h; };
  const int nh = 2 * grid - 1;
  Vector x(d);
  if (d == 1) {
    std::vector<double> f(grid), fm(nh);
    for (int i = 0; i < grid; ++i) f[i] = phi(Vector::Constant(1, node(i)));
    for (int s = 0; s < nh; ++s) fm[s] = phi(Vector::Constant(1, half(s)));
    double total = 0.0;
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        const double du = (i - j) * h;
        const double v = fm[i + j] - 0.5 * (f[i] + f[j]) + kappa / 8.0 * du * du;
        if (v > 0) total += v;
      }
    }
    return total / (static_cast<double>(grid) * grid);
  }
  std::vector<double> f(static_cast<std::size_t>(grid) * grid);
  std::vector<double> fm(static_cast<std::size_t>(nh) * nh);
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      x << node(i), node(j);
      f[i * grid + j] = phi(x);
    }
  }
  for (int s = 0; s < nh; ++s) {
    for (int t = 0; t < nh; ++t) {
      x << half(s), half(t);
      fm[s * nh + t] = phi(x);
    }
  }
  double total = 0.0;
  for (int i1 = 0; i1 < grid; ++i1) {
    for (int j1 = 0; j1 < grid; ++j1) {
      const double fa = f[i1 * grid + j1];
      for (int i2 = 0; i2 < grid; ++i2) {
        const double d1 = (i1 - i2) * h;
        for (int j2 = 0; j2 < grid; ++j2) {
          const double d2 = (j1 - j2) * h;
          const double v = fm[(i1 + i2) * nh + (j1 + j2)] -
                           0.5 * (fa + f[i2 * grid + j2]) +
                           kappa / 8.0 * (d1 * d1 + d2 * d2);
          if (v > 0) total += v;
        }
      }
    }
  }
  const double cells = static_cast<double>(grid) * grid;
  return total / (cells * cells);
}

BrenierLossGraph brenier_loss(ad::Tape& tape, const PotentialNet& phi,
                              const BoundParams& phi_params,
                              const DiscriminatorNet& disc,
                              const BoundParams& disc_params,
                              const Matrix& real_batch,
                              const Matrix& source_batch,
                              const PenaltyPairs& pairs,
                              const BrenierLossConfig& config) {
  if (real_batch.cols() == 0 || source_batch.cols() == 0) {
    throw std::invalid_argument("brenier_loss: empty batch");
  }
  BrenierLossGraph out;
  ad::Var fake = generator_apply(phi, phi_params, tape.constant(source_batch));
  ad::Var d_fake = forward_discriminator(disc, disc_params, fake);
  ad::Var d_real = forward_discriminator(disc, disc_params, tape.constant(real_batch));
  out.gan = gan_loss_empirical(d_real, d_fake);
  ScalarField field = [&](const ad::Var& x) {
    return forward_potential(phi, phi_params, x);
  };
  out.penalty = convexity_penalty_empirical(tape, field, config.kappa, pairs.u,
                                            pairs.u_prime);
  ad::Var objective = out.gan;
  if (config.objective == GeneratorObjective::non_saturating) {
    objective = ad::scale(
        ad::mean(ad::log(ad::clamp(d_fake, kLogClamp, 1.0 - kLogClamp))), -0.5);
  }
  out.total = config.gamma == 0.0
                  ? objective
                  : ad::add(objective, ad::scale(out.penalty, config.gamma));
  out.breakdown.gan_term = out.gan.scalar();
  out.breakdown.penalty_term = out.penalty.scalar();
  out.breakdown.total = out.breakdown.gan_term + config.gamma * out.breakdown.penalty_term;
  out.breakdown.gamma = config.gamma;
  out.breakdown.kappa = config.kappa;
  return out;
}

// ---- analytic oracles ------------------------------------------------------

DiscriminatorFn optimal_discriminator(DensityFn p_star, DensityFn p) {
  return [p_star = std::move(p_star), p = std::move(p)](const Vector& x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x(i) < 0.0 || x(i) > 1.0) return 0.0;
    }
    const double a = p_star(x);
    const double b = p(x);
    return a + b > 0 ? a / (a + b) : 0.0;
  };
}

namespace {

// Midpoint rule over [lo, hi]^d, d <= 2; f receives the node and cell volume.
template <class F>
void for_each_cell(int grid, int d, Box box, F&& f) {
  if (d < 1 || d > 2) throw std::invalid_argument("quadrature: d must be 1 or 2");
  if (grid < 1) throw std::invalid_argument("quadrature grid must be >= 1");
  const double h = (box.hi - box.lo) / grid;
  const double vol = d == 1 ? h : h * h;
  Vector x(d);
  if (d == 1) {
    for (int i = 0; i < grid; ++i) {
      x(0) = box.lo + (i + 0.5) * h;
      f(x, vol);
    }
    return;
  }
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      x << box.lo + (i + 0.5) * h, box.lo + (j + 0.5) * h;
      f(x, vol);
    }
  }
}

double checked(double v) {
  if (v < 0) throw std::domain_error("negative density sample " + std::to_string(v));
  return v;
}

// a log(a / b) with the 0 log 0 = 0 convention.
double xlogy_ratio(double a, double b) {
  if (a == 0.0) return 0.0;
  if (b == 0.0) return std::numeric_limits<double>::infinity();
  return a * std::log(a / b);
}

}  // namespace

double kl_divergence_quadrature(const DensityFn& p, const DensityFn& q,
                                int grid, int d, Box support) {
  double total = 0.0;
  for_each_cell(grid, d, support, [&](const Vector& x, double vol) {
    total += xlogy_ratio(checked(p(x)), checked(q(x))) * vol;
  });
  return total;
}

double js_divergence_quadrature(const DensityFn& p, const DensityFn& q,
                                int grid, int d, Box support) {
  double total = 0.0;
  for_each_cell(grid, d, support, [&](const Vector& x, double vol) {
    const double a = checked(p(x));
    const double b = checked(q(x));
    const double m = 0.5 * (a + b);
    total += 0.5 * (xlogy_ratio(a, m) + xlogy_ratio(b, m)) * vol;
  });
  return total;
}

double population_gan_loss(const DiscriminatorFn& disc, const DensityFn& p_star,
                           const DensityFn& p, int grid, int d, Box support) {
  double total = 0.0;
  for_each_cell(grid, d, support, [&](const Vector& x, double vol) {
    const double a = checked(p_star(x));
    const double b = checked(p(x));
    if (a == 0.0 && b == 0.0) return;
    const double dx = disc(x);
    double v = 0.0;
    if (a > 0) v += a * std::log(dx);
    if (b > 0) v += b * std::log(1.0 - dx);
    total += 0.5 * v * vol;
  });
  return total;
}

Lemma31Result lemma31_check(const GeneratorHandle& g, double kappa_lower,
                            double kappa_upper, const DensityFn& p_star,
                            int grid, Box support) {
  Lemma31Result r;
  r.pushforward = [g, kappa_lower, kappa_upper](const Vector& x) {
    return pushforward_density(g, x, kappa_lower, kappa_upper);
  };
  const DiscriminatorFn d_opt = optimal_discriminator(p_star, r.pushforward);
  r.lhs = population_gan_loss(d_opt, p_star, r.pushforward, grid, g.dim(), support);
  r.rhs = js_divergence_quadrature(p_star, r.pushforward, grid, g.dim(), support) -
          std::numbers::ln2;
  return r;
}

}  // namespace brenier
