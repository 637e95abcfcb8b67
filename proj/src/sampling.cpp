#include "trpolab/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <memory>
#include <stdexcept>

namespace trpolab::sampling {

namespace {

constexpr double kLogFloor = -700.0;  // exp() underflows to 0 a little below this

void reward_to_go(Trajectory* traj, double gamma) {
  const int len = traj->length();
  traj->q_hats.assign(len, 0.0);
  double acc = 0.0;
  for (int t = len - 1; t >= 0; --t) {
    acc = traj->rewards[t] + gamma * acc;
    traj->q_hats[t] = acc;
  }
}

}  // namespace

std::int64_t TrajectoryBatch::total_steps() const {
  std::int64_t steps = 0;
  for (const auto& t : trajectories) steps += t.length();
  return steps;
}

double TrajectoryBatch::mean_episode_return() const {
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : trajectories) {
    double ep = 0.0;
    for (double r : t.rewards) ep += r;
    total += ep;
  }
  return total / static_cast<double>(trajectories.size());
}

double TrajectoryBatch::mean_discounted_return() const {
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : trajectories) total += t.q_hats.empty() ? 0.0 : t.q_hats[0];
  return total / static_cast<double>(trajectories.size());
}

double TrajectoryBatch::mean_episode_length() const {
  if (trajectories.empty()) return 0.0;
  double total = 0.0;
  for (const auto& t : trajectories) total += t.length();
  return total / static_cast<double>(trajectories.size());
}

TrajectoryBatch rollout_single_path(envs::Env& env, const policy::PolicyModel& model_old,
                                    int num_paths, int horizon, double gamma, const Rng& rng) {
  if (num_paths < 1 || horizon < 1) {
    throw std::invalid_argument("need at least one path and one step");
  }
  TrajectoryBatch batch;
  batch.horizon = horizon;
  batch.gamma = gamma;
  batch.behavior_kind = BehaviorKind::kSinglePath;
  batch.trajectories.reserve(num_paths);

  for (int p = 0; p < num_paths; ++p) {
    Rng action_rng = rng.child(2 * static_cast<std::uint64_t>(p));
    env.reseed_noise(rng.child(2 * static_cast<std::uint64_t>(p) + 1).next_u64());

    Trajectory traj;
    Eigen::VectorXd obs = env.reset();
    for (int t = 0; t < horizon; ++t) {
      const policy::DistParams dist = model_old.dist(obs);
      const policy::Action action = policy::sample(dist, action_rng);
      const double logp = policy::log_prob(dist, action);

      envs::Env::StepResult result;
      try {
        result = env.step(action);
      } catch (const std::exception& e) {
        throw std::runtime_error("environment step failed in trajectory " + std::to_string(p) +
                                 ": " + e.what());
      }
      traj.states.push_back(obs);
      traj.actions.push_back(action);
      traj.rewards.push_back(result.reward);
      traj.behavior_log_probs.push_back(logp);
      obs = result.obs;
      if (result.done) break;
    }
    traj.states.push_back(obs);  // final state
    reward_to_go(&traj, gamma);
    batch.trajectories.push_back(std::move(traj));
  }
  return batch;
}

RolloutSet build_vine(envs::Env& env, const policy::PolicyModel& model_old, int trunk_paths,
                      int trunk_horizon, int rollout_set_size, int actions_per_state,
                      int rollout_len, VineActionDist action_dist, double gamma, const Rng& rng) {
  if (!env.capabilities().state_save_restore) {
    throw std::runtime_error(
        "vine sampling requires an environment with full state save/restore");
  }
  if (trunk_paths < 1 || trunk_horizon < 1 || rollout_len < 1) {
    throw std::invalid_argument("vine needs positive trunk/rollout sizes");
  }
  const envs::ActionSpace space = env.action_space();
  if (action_dist != VineActionDist::kPiOld && !space.discrete) {
    throw std::invalid_argument("uniform/exhaustive first actions need a discrete action space");
  }
  if (action_dist == VineActionDist::kExhaustive) {
    if (space.factor_sizes.size() != 1) {
      throw std::invalid_argument("exhaustive vine supports a single discrete factor");
    }
    actions_per_state = space.factor_sizes[0];
  }
  if (actions_per_state < 2) {
    throw std::invalid_argument("vine needs at least two actions per rollout state");
  }

  // trunk rollouts: record (observation, saved simulator state) at every
  // step where an action was taken
  std::vector<Eigen::VectorXd> trunk_obs;
  std::vector<std::vector<double>> trunk_state;
  double trunk_return = 0.0, trunk_disc_return = 0.0, trunk_len = 0.0;
  const Rng trunk_rng = rng.child(0x7a57);
  for (int p = 0; p < trunk_paths; ++p) {
    Rng action_rng = trunk_rng.child(2 * static_cast<std::uint64_t>(p));
    env.reseed_noise(trunk_rng.child(2 * static_cast<std::uint64_t>(p) + 1).next_u64());
    Eigen::VectorXd obs = env.reset();
    double discount = 1.0;
    for (int t = 0; t < trunk_horizon; ++t) {
      trunk_obs.push_back(obs);
      trunk_state.push_back(env.save_state());
      const policy::Action action = policy::sample(model_old.dist(obs), action_rng);
      const envs::Env::StepResult result = env.step(action);
      trunk_return += result.reward;
      trunk_disc_return += discount * result.reward;
      discount *= gamma;
      trunk_len += 1.0;
      obs = result.obs;
      if (result.done) break;
    }
  }
  const int available = static_cast<int>(trunk_obs.size());
  if (rollout_set_size > available) {
    throw std::invalid_argument("rollout set size " + std::to_string(rollout_set_size) +
                                " exceeds the " + std::to_string(available) + " trunk states");
  }

  // uniform subsample without replacement (partial Fisher-Yates)
  Rng pick_rng = rng.child(0xa7c4);
  std::vector<int> indices(available);
  for (int i = 0; i < available; ++i) indices[i] = i;
  for (int i = 0; i < rollout_set_size; ++i) {
    const int j = i + pick_rng.uniform_int(available - i);
    std::swap(indices[i], indices[j]);
  }

  RolloutSet rs;
  rs.actions_per_state = actions_per_state;
  rs.gamma = gamma;
  rs.action_dist = action_dist;
  rs.env_steps = available;
  rs.trunk_mean_episode_return = trunk_return / trunk_paths;
  rs.trunk_mean_discounted_return = trunk_disc_return / trunk_paths;
  rs.trunk_mean_episode_length = trunk_len / trunk_paths;
  Rng seed_rng = rng.child(0xc12f);

  for (int n = 0; n < rollout_set_size; ++n) {
    const int idx = indices[n];
    const Eigen::VectorXd& anchor = trunk_obs[idx];
    const policy::DistParams dist_old = model_old.dist(anchor);
    const std::uint64_t crn_seed = seed_rng.next_u64();

    // first actions, drawn before any branch runs
    std::vector<policy::Action> actions;
    std::vector<double> logq;
    Rng first_rng = seed_rng.child(0xf1 + static_cast<std::uint64_t>(n));
    for (int k = 0; k < actions_per_state; ++k) {
      policy::Action action;
      double lq = 0.0;
      switch (action_dist) {
        case VineActionDist::kPiOld:
          action = policy::sample(dist_old, first_rng);
          lq = policy::log_prob(dist_old, action);
          break;
        case VineActionDist::kUniform: {
          action.disc.clear();
          double log_u = 0.0;
          for (int size : space.factor_sizes) {
            action.disc.push_back(first_rng.uniform_int(size));
            log_u -= std::log(static_cast<double>(size));
          }
          lq = log_u;
          break;
        }
        case VineActionDist::kExhaustive:
          action.disc = {k};
          lq = policy::log_prob(dist_old, action);
          break;
      }
      actions.push_back(std::move(action));
      logq.push_back(lq);
    }

    // branch rollouts: identical noise stream and identical follow-up action
    // stream across the K branches of this anchor
    std::vector<double> q_hats;
    for (int k = 0; k < actions_per_state; ++k) {
      env.restore_state(trunk_state[idx]);
      env.reseed_noise(crn_seed);
      Rng follow_rng(crn_seed ^ 0x5eedf0110d15ull);

      double q_acc = 0.0;
      double discount = 1.0;
      Eigen::VectorXd obs = anchor;
      for (int t = 0; t < rollout_len; ++t) {
        policy::Action action;
        if (t == 0) {
          action = actions[k];
        } else {
          action = policy::sample(model_old.dist(obs), follow_rng);
        }
        const envs::Env::StepResult result = env.step(action);
        q_acc += discount * result.reward;
        discount *= gamma;
        obs = result.obs;
        if (result.done) break;
      }
      if (!std::isfinite(q_acc)) {
        throw std::runtime_error("non-finite branch return at rollout state " + std::to_string(n));
      }
      q_hats.push_back(q_acc);
    }

    rs.anchor_obs.push_back(anchor);
    rs.action_samples.push_back(std::move(actions));
    rs.behavior_log_probs.push_back(std::move(logq));
    rs.q_hats.push_back(std::move(q_hats));
    rs.crn_seeds.push_back(crn_seed);
  }
  return rs;
}

namespace {

/// Frozen per-sample data shared by the single-path estimator closures.
struct SinglePathData {
  policy::NetworkSpec spec;
  std::vector<Eigen::VectorXd> states;
  std::vector<policy::Action> actions;
  std::vector<double> q_hats;
  std::vector<double> behavior_log_probs;
  std::vector<policy::DistParams> old_dists;
};

}  // namespace

SurrogateEstimate surrogate_from_single_path(const TrajectoryBatch& batch,
                                             const policy::PolicyModel& model_old) {
  auto data = std::make_shared<SinglePathData>();
  data->spec = model_old.spec();

  std::int64_t excluded = 0;
  std::int64_t total = 0;
  for (const auto& traj : batch.trajectories) {
    for (int t = 0; t < traj.length(); ++t) {
      ++total;
      const double logq = traj.behavior_log_probs[t];
      if (!std::isfinite(logq) || logq < kLogFloor || !std::isfinite(traj.q_hats[t])) {
        ++excluded;
        continue;
      }
      data->states.push_back(traj.states[t]);
      data->actions.push_back(traj.actions[t]);
      data->q_hats.push_back(traj.q_hats[t]);
      data->behavior_log_probs.push_back(logq);
    }
  }
  if (data->states.empty()) throw std::invalid_argument("batch has no usable samples");
  if (excluded > 0 && 1000 * excluded > total) {
    std::cerr << "warning: excluded " << excluded << " of " << total
              << " samples with underflowed behavior probabilities\n";
  }

  const std::size_t n = data->states.size();
  data->old_dists.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    data->old_dists.push_back(model_old.dist(data->states[i]));
  }

  SurrogateEstimate est;
  est.sample_count = static_cast<std::int64_t>(n);
  est.excluded_samples = excluded;

  est.value_fn = [data](const Eigen::VectorXd& theta) {
    const policy::PolicyModel model(data->spec, theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < data->states.size(); ++i) {
      const double logp = policy::log_prob(model.dist(data->states[i]), data->actions[i]);
      acc += std::exp(logp - data->behavior_log_probs[i]) * data->q_hats[i];
    }
    return acc / static_cast<double>(data->states.size());
  };
  est.mean_kl_fn = [data](const Eigen::VectorXd& theta) {
    const policy::PolicyModel model(data->spec, theta);
    double acc = 0.0;
    for (std::size_t i = 0; i < data->states.size(); ++i) {
      acc += policy::kl_divergence(data->old_dists[i], model.dist(data->states[i]));
    }
    return acc / static_cast<double>(data->states.size());
  };

  // gradient at theta_old: mean of Qhat * grad log pi
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model_old.theta().size());
  for (std::size_t i = 0; i < n; ++i) {
    grad += data->q_hats[i] * model_old.grad_log_prob(data->states[i], data->actions[i]);
  }
  est.grad = grad / static_cast<double>(n);
  est.value = est.value_fn(model_old.theta());
  return est;
}

namespace {

struct VineData {
  policy::NetworkSpec spec;
  RolloutSet rollouts;  // frozen copy
  VineEstimator mode;
};

}  // namespace

SurrogateEstimate surrogate_from_vine(const RolloutSet& rollouts,
                                      const policy::PolicyModel& model_old, VineEstimator mode) {
  if (rollouts.anchor_obs.empty()) throw std::invalid_argument("empty rollout set");
  if (mode == VineEstimator::kExhaustive && rollouts.action_dist != VineActionDist::kExhaustive) {
    throw std::invalid_argument("exhaustive estimator needs an exhaustive rollout set");
  }
  if (mode == VineEstimator::kSelfNormalized && rollouts.actions_per_state < 2) {
    throw std::invalid_argument("self-normalized estimator needs K >= 2");
  }

  auto data = std::make_shared<VineData>();
  data->spec = model_old.spec();
  data->rollouts = rollouts;
  data->mode = mode;

  const std::size_t num_anchors = rollouts.anchor_obs.size();
  const int k_count = rollouts.actions_per_state;

  SurrogateEstimate est;
  est.sample_count = static_cast<std::int64_t>(num_anchors) * k_count;
  est.excluded_samples = 0;

  est.value_fn = [data](const Eigen::VectorXd& theta) {
    const policy::PolicyModel model(data->spec, theta);
    const RolloutSet& rs = data->rollouts;
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t n = 0; n < rs.anchor_obs.size(); ++n) {
      const policy::DistParams dist = model.dist(rs.anchor_obs[n]);
      if (data->mode == VineEstimator::kExhaustive) {
        double l_n = 0.0;
        for (int k = 0; k < rs.actions_per_state; ++k) {
          l_n += std::exp(policy::log_prob(dist, rs.action_samples[n][k])) * rs.q_hats[n][k];
        }
        total += l_n;
        ++used;
      } else {
        double w_sum = 0.0, wq_sum = 0.0;
        for (int k = 0; k < rs.actions_per_state; ++k) {
          const double w = std::exp(policy::log_prob(dist, rs.action_samples[n][k]) -
                                    rs.behavior_log_probs[n][k]);
          w_sum += w;
          wq_sum += w * rs.q_hats[n][k];
        }
        if (w_sum <= 0.0) continue;  // anchor dropped
        total += wq_sum / w_sum;
        ++used;
      }
    }
    if (used == 0) throw std::runtime_error("all rollout states had zero weight");
    return total / static_cast<double>(used);
  };

  est.mean_kl_fn = [data, model_old_theta = model_old.theta()](const Eigen::VectorXd& theta) {
    const policy::PolicyModel model_new(data->spec, theta);
    const policy::PolicyModel model_ref(data->spec, model_old_theta);
    const RolloutSet& rs = data->rollouts;
    double acc = 0.0;
    for (std::size_t n = 0; n < rs.anchor_obs.size(); ++n) {
      acc += policy::kl_divergence(model_ref.dist(rs.anchor_obs[n]),
                                   model_new.dist(rs.anchor_obs[n]));
    }
    return acc / static_cast<double>(rs.anchor_obs.size());
  };

  // analytic gradient at theta_old
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(model_old.theta().size());
  std::size_t used = 0;
  for (std::size_t n = 0; n < num_anchors; ++n) {
    const policy::DistParams dist_old = model_old.dist(rollouts.anchor_obs[n]);
    if (mode == VineEstimator::kExhaustive) {
      for (int k = 0; k < k_count; ++k) {
        const double p = std::exp(policy::log_prob(dist_old, rollouts.action_samples[n][k]));
        grad += p * rollouts.q_hats[n][k] *
                model_old.grad_log_prob(rollouts.anchor_obs[n], rollouts.action_samples[n][k]);
      }
      ++used;
    } else {
      double w_sum = 0.0, wq_sum = 0.0;
      std::vector<double> w(k_count);
      for (int k = 0; k < k_count; ++k) {
        w[k] = std::exp(policy::log_prob(dist_old, rollouts.action_samples[n][k]) -
                        rollouts.behavior_log_probs[n][k]);
        w_sum += w[k];
        wq_sum += w[k] * rollouts.q_hats[n][k];
      }
      if (w_sum <= 0.0) {
        ++est.excluded_samples;
        continue;
      }
      const double l_n = wq_sum / w_sum;
      for (int k = 0; k < k_count; ++k) {
        if (w[k] == 0.0) continue;
        grad += (w[k] * (rollouts.q_hats[n][k] - l_n) / w_sum) *
                model_old.grad_log_prob(rollouts.anchor_obs[n], rollouts.action_samples[n][k]);
      }
      ++used;
    }
  }
  if (used == 0) throw std::runtime_error("all rollout states had zero weight");
  est.grad = grad / static_cast<double>(used);
  est.value = est.value_fn(model_old.theta());
  return est;
}

std::vector<Eigen::VectorXd> batch_states(const TrajectoryBatch& batch) {
  std::vector<Eigen::VectorXd> states;
  for (const auto& traj : batch.trajectories) {
    for (int t = 0; t < traj.length(); ++t) states.push_back(traj.states[t]);
  }
  return states;
}

std::vector<policy::Action> batch_actions(const TrajectoryBatch& batch) {
  std::vector<policy::Action> actions;
  for (const auto& traj : batch.trajectories) {
    for (int t = 0; t < traj.length(); ++t) actions.push_back(traj.actions[t]);
  }
  return actions;
}

void dump_batch(const TrajectoryBatch& batch, std::ostream& out) {
  out << "# traj t reward behavior_log_prob q_hat state... action...\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ' ' << buf;
  };
  for (std::size_t p = 0; p < batch.trajectories.size(); ++p) {
    const Trajectory& traj = batch.trajectories[p];
    for (int t = 0; t < traj.length(); ++t) {
      out << p << ' ' << t;
      put(traj.rewards[t]);
      put(traj.behavior_log_probs[t]);
      put(traj.q_hats[t]);
      for (int i = 0; i < traj.states[t].size(); ++i) put(traj.states[t][i]);
      const policy::Action& a = traj.actions[t];
      if (a.cont.size() > 0) {
        for (int i = 0; i < a.cont.size(); ++i) put(a.cont[i]);
      } else {
        for (int idx : a.disc) out << ' ' << idx;
      }
      out << '\n';
    }
  }
}

}  // namespace trpolab::sampling
