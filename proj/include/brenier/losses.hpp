#pragma once

#include "brenier/data.hpp"
#include "brenier/networks.hpp"
#include "brenier/transport.hpp"

#include <functional>

namespace brenier {

/// Clamp applied to discriminator outputs before taking logs.
constexpr double kLogClamp = 1e-7;

struct LossBreakdown {
  double gan_term = 0.0;
  double penalty_term = 0.0;
  double total = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
};

/// (1/2n) sum log D(y_i) + (1/2n) sum log(1 - D(G(z_i))) on 1 x n rows.
ad::Var gan_loss_empirical(const ad::Var& d_real, const ad::Var& d_fake);
double gan_loss_empirical(const Vector& d_real, const Vector& d_fake);

/// Graph builder for a scalar field: maps a d x n batch to 1 x n on the
/// batch's tape.
using ScalarField = std::function<ad::Var(const ad::Var&)>;

/// Midpoint-inequality penalty over the given pairs (columns of u, u_prime):
/// mean of relu(phi((u+u')/2) - (phi(u)+phi(u'))/2 + kappa/8 |u-u'|^2).
ad::Var convexity_penalty_empirical(ad::Tape& tape, const ScalarField& phi,
                                    double kappa, const Matrix& u,
                                    const Matrix& u_prime);

struct PenaltyPairs {
  Matrix u;
  Matrix u_prime;
};
PenaltyPairs draw_penalty_pairs(Eigen::Index d, Eigen::Index m,
                                SourceDomain domain, std::uint64_t seed);

struct PenaltyEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo penalty with m fresh pairs, evaluated off-graph.
PenaltyEstimate convexity_penalty_empirical(const ScalarField& phi, int d,
                                            double kappa, Eigen::Index m,
                                            std::uint64_t seed,
                                            SourceDomain domain);
PenaltyEstimate convexity_penalty_empirical(const PotentialNet& phi,
                                            double kappa, Eigen::Index m,
                                            std::uint64_t seed,
                                            SourceDomain domain);

/// Tensor-product midpoint rule for the penalty as an expectation over
/// uniform pairs on the domain box; d <= 2.
double convexity_penalty_quadrature(
    const std::function<double(const Vector&)>& phi, double kappa, int grid,
    int d, SourceDomain domain = SourceDomain::unit_box);

/// saturating: the generator minimizes L_hat itself.
/// non_saturating: the generator minimizes -(1/2n) sum log D(G(z)) instead;
/// the reported gan_term is still L_hat.
enum class GeneratorObjective { saturating, non_saturating };

std::string_view to_string(GeneratorObjective o);
GeneratorObjective generator_objective_from_string(std::string_view s);

struct BrenierLossConfig {
  double kappa = 0.1;
  double gamma = 0.0;
  SourceDomain domain = SourceDomain::unit_box;
  GeneratorObjective objective = GeneratorObjective::saturating;
};

struct BrenierLossGraph {
  ad::Var total;
  ad::Var gan;
  ad::Var penalty;
  LossBreakdown breakdown;
};

/// L(grad phi, D) + gamma * P(phi) on one tape. Penalty pairs are passed in
/// so callers control the sampling stream.
BrenierLossGraph brenier_loss(ad::Tape& tape, const PotentialNet& phi,
                              const BoundParams& phi_params,
                              const DiscriminatorNet& disc,
                              const BoundParams& disc_params,
                              const Matrix& real_batch,
                              const Matrix& source_batch,
                              const PenaltyPairs& pairs,
                              const BrenierLossConfig& config);

// ---- analytic oracles ------------------------------------------------------

using DensityFn = std::function<double(const Vector&)>;
using DiscriminatorFn = std::function<double(const Vector&)>;

/// D_G(x) = p*(x) / (p*(x) + p(x)) on [0,1]^d, 0 elsewhere.
DiscriminatorFn optimal_discriminator(DensityFn p_star, DensityFn p);

/// Axis-aligned box [lo, hi]^d used as quadrature support.
struct Box {
  double lo = 0.0;
  double hi = 1.0;
};

double kl_divergence_quadrature(const DensityFn& p, const DensityFn& q,
                                int grid, int d, Box support = {});
double js_divergence_quadrature(const DensityFn& p, const DensityFn& q,
                                int grid, int d, Box support = {});

/// Population loss 1/2 int p* log D + 1/2 int p log(1 - D) by midpoint rule.
double population_gan_loss(const DiscriminatorFn& disc, const DensityFn& p_star,
                           const DensityFn& p, int grid, int d,
                           Box support = {});

struct Lemma31Result {
  double lhs = 0.0;  // L(G, D_G)
  double rhs = 0.0;  // d_JS(mu*, G#lambda) - log 2
  DensityFn pushforward;
};

/// Compares the optimal-discriminator loss with the JS identity for
/// G = grad phi of an analytic strongly convex potential.
Lemma31Result lemma31_check(const GeneratorHandle& g, double kappa_lower,
                            double kappa_upper, const DensityFn& p_star,
                            int grid, Box support = {});

}  // namespace brenier
