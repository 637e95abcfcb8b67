#include "trpolab/environments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trpolab::envs {

namespace {

constexpr double kPi = 3.14159265358979323846;

int discrete_action(const policy::Action& action) {
  if (action.disc.size() != 1) {
    throw std::invalid_argument("environment expects a single discrete action factor");
  }
  return action.disc[0];
}

}  // namespace

TabularEnv::TabularEnv(tabular::TabularMdp mdp, std::uint64_t noise_seed)
    : mdp_(std::move(mdp)), noise_(noise_seed) {
  mdp_.validate();
}

ActionSpace TabularEnv::action_space() const {
  ActionSpace space;
  space.discrete = true;
  space.factor_sizes = {mdp_.num_actions};
  return space;
}

Eigen::VectorXd TabularEnv::one_hot(int s) const {
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(mdp_.num_states);
  obs[s] = 1.0;
  return obs;
}

Eigen::VectorXd TabularEnv::reset() {
  state_ = noise_.categorical(mdp_.initial_dist);
  return one_hot(state_);
}

Env::StepResult TabularEnv::step(const policy::Action& action) {
  const int a = discrete_action(action);
  if (a < 0 || a >= mdp_.num_actions) throw std::invalid_argument("action index out of range");
  StepResult result;
  result.reward = mdp_.rewards[state_];
  state_ = noise_.categorical(mdp_.transitions[a].row(state_).transpose());
  result.obs = one_hot(state_);
  result.done = false;  // infinite-horizon task; callers truncate
  return result;
}

void TabularEnv::restore_state(const std::vector<double>& state) {
  if (state.size() != 1) throw std::invalid_argument("bad tabular env state");
  const int s = static_cast<int>(state[0]);
  if (s < 0 || s >= mdp_.num_states) throw std::invalid_argument("bad tabular env state index");
  state_ = s;
}

CartPoleEnv::CartPoleEnv(std::uint64_t noise_seed, bool continuous_force)
    : continuous_force_(continuous_force), noise_(noise_seed) {
  state_.setZero();
}

ActionSpace CartPoleEnv::action_space() const {
  ActionSpace space;
  if (continuous_force_) {
    space.discrete = false;
    space.cont_dim = 1;
    space.low = Eigen::VectorXd::Constant(1, -kForceMag);
    space.high = Eigen::VectorXd::Constant(1, kForceMag);
  } else {
    space.discrete = true;
    space.factor_sizes = {2};
  }
  return space;
}

void CartPoleEnv::dynamics(const Eigen::Vector4d& state, double force, double* x_ddot,
                           double* angle_ddot) {
  constexpr double kGravity = 9.8;
  constexpr double kMassCart = 1.0;
  constexpr double kMassPole = 0.1;
  constexpr double kTotalMass = kMassCart + kMassPole;
  constexpr double kHalfLength = 0.5;
  constexpr double kPoleMassLength = kMassPole * kHalfLength;

  const double angle = state[2];
  const double angle_dot = state[3];
  const double cos_a = std::cos(angle);
  const double sin_a = std::sin(angle);

  const double temp = (force + kPoleMassLength * angle_dot * angle_dot * sin_a) / kTotalMass;
  *angle_ddot = (kGravity * sin_a - cos_a * temp) /
                (kHalfLength * (4.0 / 3.0 - kMassPole * cos_a * cos_a / kTotalMass));
  *x_ddot = temp - kPoleMassLength * (*angle_ddot) * cos_a / kTotalMass;
}

Eigen::VectorXd CartPoleEnv::reset() {
  for (int i = 0; i < 4; ++i) state_[i] = noise_.uniform(-0.05, 0.05);
  steps_ = 0;
  done_ = false;
  return state_;
}

Env::StepResult CartPoleEnv::step(const policy::Action& action) {
  if (done_) throw std::logic_error("step() on a finished cart-pole episode; call reset()");
  double force = 0.0;
  if (continuous_force_) {
    if (action.cont.size() != 1) throw std::invalid_argument("cart-pole expects 1-d force");
    force = std::clamp(action.cont[0], -kForceMag, kForceMag);
  } else {
    const int a = discrete_action(action);
    if (a != 0 && a != 1) throw std::invalid_argument("cart-pole discrete action must be 0 or 1");
    force = (a == 1) ? kForceMag : -kForceMag;
  }

  double x_ddot = 0.0, angle_ddot = 0.0;
  dynamics(state_, force, &x_ddot, &angle_ddot);
  state_[0] += kDt * state_[1];
  state_[1] += kDt * x_ddot;
  state_[2] += kDt * state_[3];
  state_[3] += kDt * angle_ddot;
  ++steps_;

  constexpr double kXLimit = 2.4;
  const double angle_limit = 12.0 * kPi / 180.0;
  const bool failed = std::abs(state_[0]) > kXLimit || std::abs(state_[2]) > angle_limit;
  done_ = failed || steps_ >= kMaxSteps;

  StepResult result;
  result.obs = state_;
  result.reward = failed ? 0.0 : 1.0;
  result.done = done_;
  return result;
}

std::vector<double> CartPoleEnv::save_state() const {
  return {state_[0], state_[1], state_[2], state_[3], static_cast<double>(steps_),
          done_ ? 1.0 : 0.0};
}

void CartPoleEnv::restore_state(const std::vector<double>& state) {
  if (state.size() != 6) throw std::invalid_argument("bad cart-pole state");
  for (int i = 0; i < 4; ++i) state_[i] = state[i];
  steps_ = static_cast<int>(state[4]);
  done_ = state[5] != 0.0;
}

PointMassEnv::PointMassEnv(std::uint64_t noise_seed, double noise_std, double dt)
    : noise_std_(noise_std), dt_(dt), noise_(noise_seed) {
  state_.setZero();
}

ActionSpace PointMassEnv::action_space() const {
  ActionSpace space;
  space.discrete = false;
  space.cont_dim = 2;
  space.low = Eigen::VectorXd::Constant(2, -1.0);
  space.high = Eigen::VectorXd::Constant(2, 1.0);
  return space;
}

Eigen::VectorXd PointMassEnv::reset() {
  state_.setZero();
  return state_;
}

Env::StepResult PointMassEnv::step(const policy::Action& action) {
  if (action.cont.size() != 2) throw std::invalid_argument("point-mass expects a 2-d force");
  Eigen::Vector2d u;
  u[0] = std::clamp(action.cont[0], -1.0, 1.0);
  u[1] = std::clamp(action.cont[1], -1.0, 1.0);

  Eigen::Vector2d accel = u;
  if (noise_std_ > 0.0) {
    accel[0] += noise_std_ * noise_.normal();
    accel[1] += noise_std_ * noise_.normal();
  }
  state_[0] += dt_ * state_[2];
  state_[1] += dt_ * state_[3];
  state_[2] += dt_ * accel[0];
  state_[3] += dt_ * accel[1];

  StepResult result;
  result.obs = state_;
  result.reward = state_[2] - 1e-5 * u.squaredNorm();
  result.done = false;
  return result;
}

std::vector<double> PointMassEnv::save_state() const {
  return {state_[0], state_[1], state_[2], state_[3]};
}

void PointMassEnv::restore_state(const std::vector<double>& state) {
  if (state.size() != 4) throw std::invalid_argument("bad point-mass state");
  for (int i = 0; i < 4; ++i) state_[i] = state[i];
}

tabular::TabularMdp chain_mdp(int n_states, double slip_prob, double gamma) {
  if (n_states < 1) throw std::invalid_argument("chain needs at least one state");
  if (slip_prob < 0.0 || slip_prob > 1.0) throw std::invalid_argument("slip_prob out of [0,1]");
  tabular::TabularMdp mdp;
  mdp.num_states = n_states;
  mdp.num_actions = 2;
  mdp.discount = gamma;
  mdp.transitions.assign(2, Eigen::MatrixXd::Zero(n_states, n_states));
  for (int s = 0; s < n_states; ++s) {
    const int left = std::max(0, s - 1);
    const int right = std::min(n_states - 1, s + 1);
    mdp.transitions[0](s, left) += 1.0 - slip_prob;
    mdp.transitions[0](s, right) += slip_prob;
    mdp.transitions[1](s, right) += 1.0 - slip_prob;
    mdp.transitions[1](s, left) += slip_prob;
  }
  mdp.rewards = Eigen::VectorXd::Zero(n_states);
  mdp.rewards[n_states - 1] = 1.0;
  mdp.initial_dist = Eigen::VectorXd::Zero(n_states);
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return mdp;
}

tabular::TabularMdp gridworld(int width, int height, double slip_prob, double gamma) {
  if (width < 1 || height < 1) throw std::invalid_argument("gridworld needs positive dimensions");
  if (slip_prob < 0.0 || slip_prob > 1.0) throw std::invalid_argument("slip_prob out of [0,1]");
  const int n = width * height;
  const int goal = n - 1;  // top-right corner, absorbing
  auto index = [&](int x, int y) { return y * width + x; };

  tabular::TabularMdp mdp;
  mdp.num_states = n;
  mdp.num_actions = 4;
  mdp.discount = gamma;
  mdp.transitions.assign(4, Eigen::MatrixXd::Zero(n, n));
  const int dx[4] = {1, -1, 0, 0};
  const int dy[4] = {0, 0, 1, -1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int s = index(x, y);
      if (s == goal) {
        for (int a = 0; a < 4; ++a) mdp.transitions[a](s, s) = 1.0;
        continue;
      }
      for (int a = 0; a < 4; ++a) {
        // intended move with prob 1-slip, otherwise uniform over all moves
        for (int m = 0; m < 4; ++m) {
          const double p = (m == a ? 1.0 - slip_prob : 0.0) + slip_prob / 4.0;
          const int nx = std::clamp(x + dx[m], 0, width - 1);
          const int ny = std::clamp(y + dy[m], 0, height - 1);
          mdp.transitions[a](s, index(nx, ny)) += p;
        }
      }
    }
  }
  mdp.rewards = Eigen::VectorXd::Zero(n);
  mdp.rewards[goal] = 1.0;
  mdp.initial_dist = Eigen::VectorXd::Zero(n);
  mdp.initial_dist[0] = 1.0;
  mdp.validate();
  return mdp;
}

tabular::TabularMdp random_mdp(int num_states, int num_actions, double gamma, std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1) throw std::invalid_argument("sizes must be positive");
  Rng rng(seed);
  tabular::TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.discount = gamma;
  mdp.transitions.assign(num_actions, Eigen::MatrixXd::Zero(num_states, num_states));
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      mdp.transitions[a].row(s) = rng.dirichlet(num_states).transpose();
    }
  }
  mdp.rewards.resize(num_states);
  for (int s = 0; s < num_states; ++s) mdp.rewards[s] = rng.uniform();
  mdp.initial_dist = rng.dirichlet(num_states);
  mdp.validate();
  return mdp;
}

namespace {

// "name:rest" split helpers for selector parsing
bool consume_prefix(const std::string& selector, const std::string& prefix, std::string* rest) {
  if (selector.rfind(prefix, 0) != 0) return false;
  *rest = selector.substr(prefix.size());
  return true;
}

int parse_positive_int(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size() || v <= 0) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("bad ") + what + " in env selector: '" + text + "'");
  }
}

}  // namespace

BuiltEnv make_env(const std::string& selector, double gamma, std::uint64_t noise_seed) {
  BuiltEnv built;
  std::string rest;
  if (selector == "cartpole") {
    built.env = std::make_unique<CartPoleEnv>(noise_seed, false);
  } else if (selector == "cartpole-cont") {
    built.env = std::make_unique<CartPoleEnv>(noise_seed, true);
  } else if (selector == "pointmass") {
    built.env = std::make_unique<PointMassEnv>(noise_seed);
  } else if (consume_prefix(selector, "pointmass:", &rest)) {
    built.env = std::make_unique<PointMassEnv>(noise_seed, std::stod(rest));
  } else if (consume_prefix(selector, "chain:", &rest)) {
    built.mdp = chain_mdp(parse_positive_int(rest, "chain length"), 0.1, gamma);
    built.env = std::make_unique<TabularEnv>(*built.mdp, noise_seed);
  } else if (consume_prefix(selector, "gridworld:", &rest)) {
    const auto x = rest.find('x');
    if (x == std::string::npos) throw std::invalid_argument("gridworld selector needs <w>x<h>");
    built.mdp = gridworld(parse_positive_int(rest.substr(0, x), "width"),
                          parse_positive_int(rest.substr(x + 1), "height"), 0.1, gamma);
    built.env = std::make_unique<TabularEnv>(*built.mdp, noise_seed);
  } else if (consume_prefix(selector, "random:", &rest)) {
    const auto x = rest.find('x');
    const auto colon = rest.find(':', x == std::string::npos ? 0 : x);
    if (x == std::string::npos || colon == std::string::npos) {
      throw std::invalid_argument("random selector needs <S>x<A>:<seed>");
    }
    const int s = parse_positive_int(rest.substr(0, x), "state count");
    const int a = parse_positive_int(rest.substr(x + 1, colon - x - 1), "action count");
    const std::uint64_t seed = std::stoull(rest.substr(colon + 1));
    built.mdp = random_mdp(s, a, gamma, seed);
    built.env = std::make_unique<TabularEnv>(*built.mdp, noise_seed);
  } else if (consume_prefix(selector, "file:", &rest)) {
    built.mdp = tabular::load_mdp_file(rest);
    built.env = std::make_unique<TabularEnv>(*built.mdp, noise_seed);
  } else {
    throw std::invalid_argument("unknown environment selector '" + selector + "'");
  }
  return built;
}

}  // namespace trpolab::envs
