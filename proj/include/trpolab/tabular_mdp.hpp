#ifndef TRPOLAB_TABULAR_MDP_HPP_
#define TRPOLAB_TABULAR_MDP_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace trpolab::tabular {

/// Finite MDP with a state-only reward: (S, A, P, r, rho0, gamma).
/// transitions[a] is an S x S row-stochastic matrix; row s of transitions[a]
/// is the distribution over next states after taking action a in state s.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Eigen::MatrixXd> transitions;  // indexed by action
  Eigen::VectorXd rewards;                   // r[s]
  Eigen::VectorXd initial_dist;              // rho0
  double discount = 0.0;                     // gamma in (0,1)

  /// Throws std::invalid_argument when a simplex/row-sum/range invariant is
  /// violated (tolerance 1e-12 on row sums).
  void validate() const;
};

/// Stochastic policy as an S x A row-stochastic matrix.
struct TabularPolicy {
  Eigen::MatrixXd probs;

  void validate() const;
  int num_states() const { return static_cast<int>(probs.rows()); }
  int num_actions() const { return static_cast<int>(probs.cols()); }
};

/// Exact quantities for a (mdp, policy) pair.
struct ExactEvaluation {
  Eigen::VectorXd v;           // V_pi
  Eigen::MatrixXd q;           // Q_pi[s][a]
  Eigen::MatrixXd adv;         // A_pi = Q - V
  Eigen::VectorXd visitation;  // rho_pi, unnormalized: sums to 1/(1-gamma)
  double eta = 0.0;            // expected discounted return rho0 . V
};

/// State-transition matrix of the Markov chain induced by the policy.
Eigen::MatrixXd policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy);

/// Direct (dense LU) solve of the evaluation equations:
///   V = r + gamma P_pi V,  Q[s][a] = r[s] + gamma P[a].row(s) V,
///   rho = rho0 + gamma P_pi^T rho,  eta = rho0 . V.
ExactEvaluation evaluate_exact(const TabularMdp& mdp, const TabularPolicy& policy);

/// Both sides of the state-sum return-difference identity:
///   lhs = eta(pi_tilde) - eta(pi)
///   rhs = sum_s rho_{pi_tilde}(s) sum_a pi_tilde(a|s) A_pi(s,a)
struct EtaDifference {
  double lhs = 0.0;
  double rhs = 0.0;
};
EtaDifference eta_difference_identity(const TabularMdp& mdp, const TabularPolicy& pi,
                                      const TabularPolicy& pi_tilde);

/// Textual MDP format. Whitespace-delimited, '#' starts a comment:
///   mdp S A gamma
///   rho0 p_0 ... p_{S-1}
///   r    r_0 ... r_{S-1}
///   P s a p_0 ... p_{S-1}     (one line per (s,a))
TabularMdp load_mdp(std::istream& in);
TabularMdp load_mdp_file(const std::string& path);
void save_mdp(const TabularMdp& mdp, std::ostream& out);
void save_mdp_file(const TabularMdp& mdp, const std::string& path);

}  // namespace trpolab::tabular

#endif  // TRPOLAB_TABULAR_MDP_HPP_
