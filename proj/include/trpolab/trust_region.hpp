#ifndef TRPOLAB_TRUST_REGION_HPP_
#define TRPOLAB_TRUST_REGION_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trpolab/sampling.hpp"

namespace trpolab::solver {

enum class FimMode { kAnalytic, kEmpirical };

const char* fim_mode_name(FimMode mode);
FimMode fim_mode_from_name(const std::string& name);

struct TrustRegionConfig {
  double delta = 0.01;          // mean-KL bound
  int cg_iters = 10;
  double cg_damping = 1e-3;     // not in the underlying method; keeps sampled FIMs invertible
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
  double fvp_subsample = 0.1;   // fraction of states entering the Fisher product
  FimMode fim_mode = FimMode::kAnalytic;

  void validate() const;
};

/// Matrix-free averaged Fisher information operator at theta_old.
/// Analytic mode averages J^T M J over states, where J is the Jacobian of
/// the head coordinates and M the head-space Fisher; empirical mode averages
/// (g . v) g over (state, action) samples with g = grad log pi. Both add
/// damping * v.
class FisherOperator {
 public:
  FisherOperator(const policy::PolicyModel& model_old, std::vector<Eigen::VectorXd> states,
                 std::vector<policy::Action> actions, FimMode mode, double damping);

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd operator()(const Eigen::VectorXd& v) const { return apply(v); }
  std::size_t state_count() const { return states_.size(); }

 private:
  policy::PolicyModel model_;
  std::vector<Eigen::VectorXd> states_;
  std::vector<policy::PolicyModel::Trace> traces_;     // analytic mode
  std::vector<Eigen::VectorXd> score_grads_;           // empirical mode
  FimMode mode_;
  double damping_;
};

/// One-call convenience form of the operator above.
Eigen::VectorXd fisher_vector_product(const policy::PolicyModel& model_old,
                                      const std::vector<Eigen::VectorXd>& states,
                                      const std::vector<policy::Action>& actions,
                                      const Eigen::VectorXd& v, FimMode mode, double damping);

struct CgResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  double x_ax = 0.0;  // x . A x, recovered from CG internals without an extra product
  int iters_used = 0;
};

/// Plain conjugate gradient from a zero start for A x = g, stopping after
/// `iters` iterations or when the residual drops below 1e-10 * ||g||.
/// A non-finite iterate aborts with the iteration index in the message.
CgResult conjugate_gradient(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_a,
                            const Eigen::VectorXd& g, int iters);

struct StepReport {
  Eigen::VectorXd search_dir;          // s = A^-1 g (approximate)
  double initial_beta = 0.0;           // sqrt(2 delta / s.As)
  double accepted_beta = 0.0;          // 0 when the step was rejected
  int backtracks_used = 0;
  double surrogate_improvement = 0.0;  // on the same batch as the gradient
  double kl_after = 0.0;
  double cg_residual = 0.0;
  double s_as = 0.0;
  bool accepted = false;
  std::string reject_reason;
  Eigen::VectorXd theta_new;           // theta_old when rejected
};

/// Search direction by CG, maximal step length, then exponential
/// backtracking until the sampled surrogate improves and the sampled mean KL
/// is within delta. All evaluations reuse the frozen batch inside
/// `estimate`.
StepReport compute_step(const sampling::SurrogateEstimate& estimate,
                        const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_fim,
                        const Eigen::VectorXd& theta_old, const TrustRegionConfig& cfg);

struct SamplingConfig {
  sampling::BehaviorKind kind = sampling::BehaviorKind::kSinglePath;
  int num_paths = 50;
  int horizon = 1000;
  // vine
  int trunk_paths = 8;
  int rollout_set_size = 100;   // N
  int actions_per_state = 4;    // K
  int rollout_len = 50;
  sampling::VineActionDist vine_action_dist = sampling::VineActionDist::kPiOld;
  sampling::VineEstimator vine_estimator = sampling::VineEstimator::kSelfNormalized;

  void validate() const;
};

struct IterationStats {
  std::int64_t env_steps = 0;        // steps consumed this iteration
  double mean_episode_return = 0.0;
  double mean_episode_length = 0.0;
  double eta_estimate = 0.0;         // mean discounted return from the starts
  double surrogate_value = 0.0;
  double surrogate_improvement = 0.0;
  double kl_after = 0.0;
  double beta = 0.0;
  int backtracks = 0;
  double cg_residual = 0.0;
  bool accepted = false;
};

struct IterationResult {
  Eigen::VectorXd theta_new;
  IterationStats stats;
};

/// One full update: collect (single-path or vine), estimate, solve the
/// trust-region subproblem on an fvp_subsample fraction of the states.
IterationResult trpo_iteration(envs::Env& env, const policy::PolicyModel& model_old,
                               const SamplingConfig& scfg, const TrustRegionConfig& tcfg,
                               double gamma, const Rng& rng);

}  // namespace trpolab::solver

#endif  // TRPOLAB_TRUST_REGION_HPP_
