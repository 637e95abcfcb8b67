#ifndef TRPOLAB_THEORY_BOUNDS_HPP_
#define TRPOLAB_THEORY_BOUNDS_HPP_

#include <vector>

#include <Eigen/Core>

#include "trpolab/tabular_mdp.hpp"

namespace trpolab::bounds {

using tabular::TabularMdp;
using tabular::TabularPolicy;

/// Per-state divergences between two policies. KL uses the 0*log0 = 0
/// convention; pi(a|s) > 0 with pi_tilde(a|s) = 0 makes the KL +infinity,
/// which is reported as such rather than treated as an error.
struct DivergenceReport {
  double tv_max = 0.0;  // max_s total variation
  double kl_max = 0.0;  // max_s KL(pi(.|s) || pi_tilde(.|s))
  double kl_mean = 0.0; // KL averaged under the supplied state weighting
};

/// One numerically certified improvement bound:
///   eta_new >= surrogate - penalty_coeff * alpha^2 = lower_bound,
/// with slack = eta_new - lower_bound recorded for inspection.
struct BoundCertificate {
  double eta_new = 0.0;
  double surrogate = 0.0;      // L_pi(pi_tilde)
  double alpha = 0.0;          // divergence measure entering the bound
  double epsilon = 0.0;
  double penalty_coeff = 0.0;  // C = 2 eps gamma / (1-gamma)^2
  double lower_bound = 0.0;
  double slack = 0.0;
};

/// Local first-order model of the return:
///   L_pi(pi_tilde) = eta(pi) + sum_s rho_pi(s) sum_a pi_tilde(a|s) A_pi(s,a).
double surrogate_L(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde);

/// KL of a single pair of rows, KL(p || q).
double kl_rows(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

DivergenceReport divergences(const TabularPolicy& pi, const TabularPolicy& pi_tilde,
                             const Eigen::VectorXd& state_weights);

/// Improvement bound for general policy pairs with the max-total-variation
/// distance and epsilon' = max_{s,a} |A_pi(s,a)|.
BoundCertificate certify_theorem1(const TabularMdp& mdp, const TabularPolicy& pi,
                                  const TabularPolicy& pi_tilde);

/// Strengthened bound with the per-state advantage-to-variation ratio
/// epsilon. States where the two policies agree exactly are excluded from
/// the ratio; if the policies coincide everywhere the certificate is the
/// degenerate one (alpha = 0, slack 0).
BoundCertificate certify_theorem1a(const TabularMdp& mdp, const TabularPolicy& pi,
                                   const TabularPolicy& pi_tilde);

/// Conservative-policy-iteration bound for the mixture
/// (1-alpha) pi_old + alpha pi_prime, with the mixture-specific
/// epsilon = max_s |E_{a~pi_prime} A_{pi_old}(s,a)|.
BoundCertificate certify_cpi(const TabularMdp& mdp, const TabularPolicy& pi_old,
                             const TabularPolicy& pi_prime, double alpha);

TabularPolicy cpi_mixture(const TabularPolicy& pi_old, const TabularPolicy& pi_prime, double alpha);

/// One iterate of the penalized minorize-maximize policy iteration.
struct MmIterate {
  TabularPolicy policy;
  double eta = 0.0;        // exact return of this iterate
  double surrogate = 0.0;  // achieved minorant value M_i(pi_{i+1})
};

/// KL-penalized minorize-maximize iteration: each step maximizes
///   M_i(pi) = L_{pi_i}(pi) - C * max_s KL(pi_i(.|s) || pi(.|s)),
/// C = 2 eps' gamma / (1-gamma)^2, eps' = max_{s,a} |A_{pi_i}(s,a)|.
/// The inner problem is solved exactly per state for a shared KL budget,
/// with a concave 1-d search over the budget. Element [0] of the result is
/// the initial policy; the eta sequence is non-decreasing within 1e-9.
std::vector<MmIterate> mm_policy_iteration(const TabularMdp& mdp, const TabularPolicy& pi0,
                                           int iters);

/// Row-softmax policy from a logit matrix theta (S x A).
TabularPolicy tabular_softmax(const Eigen::MatrixXd& theta);

/// Exact gradient of both eta(theta) and L_theta(theta') at theta' = theta
/// for the row-softmax parameterization (the two gradients coincide):
///   d/d theta[s,a] = rho(s) * pi(a|s) * A(s,a).
Eigen::MatrixXd softmax_policy_gradient(const TabularMdp& mdp, const Eigen::MatrixXd& theta);

}  // namespace trpolab::bounds

#endif  // TRPOLAB_THEORY_BOUNDS_HPP_
