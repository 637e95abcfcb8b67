#ifndef TRPOLAB_SAMPLING_HPP_
#define TRPOLAB_SAMPLING_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "trpolab/environments.hpp"
#include "trpolab/policy_model.hpp"
#include "trpolab/rng.hpp"

namespace trpolab::sampling {

enum class BehaviorKind { kSinglePath, kVine };

struct Trajectory {
  std::vector<Eigen::VectorXd> states;  // states where actions were taken, plus final state
  std::vector<policy::Action> actions;
  std::vector<double> rewards;
  std::vector<double> behavior_log_probs;
  std::vector<double> q_hats;  // discounted reward-to-go, truncated at episode end / horizon
  int length() const { return static_cast<int>(actions.size()); }
};

struct TrajectoryBatch {
  std::vector<Trajectory> trajectories;
  int horizon = 0;
  double gamma = 0.0;
  BehaviorKind behavior_kind = BehaviorKind::kSinglePath;

  std::int64_t total_steps() const;
  double mean_episode_return() const;      // undiscounted
  double mean_discounted_return() const;   // estimate of eta
  double mean_episode_length() const;
};

/// Whole-trajectory rollouts under the sampling policy. Per-path action and
/// environment-noise streams are derived from `rng`, so the batch is a pure
/// function of (env construction, model, arguments, rng seed).
TrajectoryBatch rollout_single_path(envs::Env& env, const policy::PolicyModel& model_old,
                                    int num_paths, int horizon, double gamma, const Rng& rng);

/// First-action distribution for vine branches.
enum class VineActionDist {
  kPiOld,       // sample from the current policy
  kUniform,     // uniform over a single discrete factor
  kExhaustive,  // every action of a single discrete factor exactly once
};

struct RolloutSet {
  std::vector<Eigen::VectorXd> anchor_obs;
  int actions_per_state = 0;
  std::vector<std::vector<policy::Action>> action_samples;  // [anchor][k]
  std::vector<std::vector<double>> behavior_log_probs;      // [anchor][k], log q(a|s)
  std::vector<std::vector<double>> q_hats;                  // [anchor][k]
  std::vector<std::uint64_t> crn_seeds;                     // per anchor
  double gamma = 0.0;
  VineActionDist action_dist = VineActionDist::kPiOld;

  // bookkeeping from the trunk phase, for logging and budget accounting
  std::int64_t env_steps = 0;  // trunk plus branch steps
  double trunk_mean_episode_return = 0.0;
  double trunk_mean_discounted_return = 0.0;
  double trunk_mean_episode_length = 0.0;
};

/// Trunk trajectories, anchor subsampling, and branch rollouts with common
/// random numbers: all K branches of one anchor replay the same
/// environment-noise stream (and the same post-first-step action stream), so
/// branch Q differences see identical noise. Requires full state
/// save/restore from the environment.
RolloutSet build_vine(envs::Env& env, const policy::PolicyModel& model_old, int trunk_paths,
                      int trunk_horizon, int rollout_set_size, int actions_per_state,
                      int rollout_len, VineActionDist action_dist, double gamma, const Rng& rng);

/// Sampled objective, its gradient at theta_old, and the sampled mean-KL
/// constraint, all over one fixed batch. value_fn/mean_kl_fn re-evaluate the
/// same frozen samples at other parameter vectors (the line search uses
/// this). At theta_old every importance weight is exp(0) = 1 and the mean KL
/// is exactly zero.
struct SurrogateEstimate {
  double value = 0.0;
  Eigen::VectorXd grad;
  std::function<double(const Eigen::VectorXd&)> value_fn;
  std::function<double(const Eigen::VectorXd&)> mean_kl_fn;
  std::int64_t sample_count = 0;
  std::int64_t excluded_samples = 0;
};

/// Importance-sampled estimator over all state-action samples:
/// mean of (pi_theta/pi_theta_old) * Qhat; gradient at theta_old is the
/// mean of Qhat * grad log pi. Samples with underflowed behavior
/// probabilities (log prob < -700) are excluded and counted.
SurrogateEstimate surrogate_from_single_path(const TrajectoryBatch& batch,
                                             const policy::PolicyModel& model_old);

enum class VineEstimator {
  kExhaustive,      // L_n = sum_k pi_theta(a_k|s_n) Qhat(s_n, a_k); needs one rollout per action
  kSelfNormalized,  // importance weights normalized to sum 1 per anchor; needs K >= 2
};

SurrogateEstimate surrogate_from_vine(const RolloutSet& rollouts,
                                      const policy::PolicyModel& model_old, VineEstimator mode);

/// All states at which actions were taken, in batch order (used for the
/// Fisher-product subsample and the KL average).
std::vector<Eigen::VectorXd> batch_states(const TrajectoryBatch& batch);
std::vector<policy::Action> batch_actions(const TrajectoryBatch& batch);

/// Columnar text dump, one record per state-action sample:
///   traj t reward behavior_log_prob q_hat state... action...
void dump_batch(const TrajectoryBatch& batch, std::ostream& out);

}  // namespace trpolab::sampling

#endif  // TRPOLAB_SAMPLING_HPP_
