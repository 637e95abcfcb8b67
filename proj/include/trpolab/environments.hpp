#ifndef TRPOLAB_ENVIRONMENTS_HPP_
#define TRPOLAB_ENVIRONMENTS_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trpolab/policy_model.hpp"
#include "trpolab/rng.hpp"
#include "trpolab/tabular_mdp.hpp"

namespace trpolab::envs {

struct ActionSpace {
  bool discrete = true;
  std::vector<int> factor_sizes;  // discrete
  int cont_dim = 0;               // continuous box
  Eigen::VectorXd low, high;
};

struct Capabilities {
  bool state_save_restore = false;
  bool noise_reseed = false;
};

/// Episodic simulation interface. Environments own their noise stream;
/// reseed_noise() repositions it, which is what common-random-number branch
/// rollouts rely on.
class Env {
 public:
  virtual ~Env() = default;

  virtual int observation_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual Capabilities capabilities() const = 0;

  virtual void reseed_noise(std::uint64_t seed) = 0;
  virtual Eigen::VectorXd reset() = 0;

  struct StepResult {
    Eigen::VectorXd obs;
    double reward = 0.0;
    bool done = false;
  };
  virtual StepResult step(const policy::Action& action) = 0;

  /// Full simulator state, excluding the noise stream. Throws for
  /// environments whose capabilities report no save/restore support.
  virtual std::vector<double> save_state() const = 0;
  virtual void restore_state(const std::vector<double>& state) = 0;
};

/// Exact tabular MDP exposed through the Env interface. Observations are
/// one-hot state indicators; the reward is the state reward r(s) of the
/// state the step departs from.
class TabularEnv : public Env {
 public:
  TabularEnv(tabular::TabularMdp mdp, std::uint64_t noise_seed);

  int observation_dim() const override { return mdp_.num_states; }
  ActionSpace action_space() const override;
  Capabilities capabilities() const override { return {true, true}; }
  void reseed_noise(std::uint64_t seed) override { noise_ = Rng(seed); }
  Eigen::VectorXd reset() override;
  StepResult step(const policy::Action& action) override;
  std::vector<double> save_state() const override { return {static_cast<double>(state_)}; }
  void restore_state(const std::vector<double>& state) override;

  const tabular::TabularMdp& mdp() const { return mdp_; }
  int current_state() const { return state_; }

 private:
  Eigen::VectorXd one_hot(int s) const;

  tabular::TabularMdp mdp_;
  Rng noise_;
  int state_ = 0;
};

/// Cart-pole balancing task, Euler-integrated at dt = 0.02 s with the
/// classic constants (cart 1.0 kg, pole 0.1 kg, half-length 0.5 m,
/// g = 9.8 m/s^2). Discrete actions push with -10 or +10 N; the
/// continuous-force variant accepts a scalar force clipped to [-10, 10].
/// Episodes end when |x| > 2.4 m, |angle| > 12 degrees, or after 1000 steps.
class CartPoleEnv : public Env {
 public:
  explicit CartPoleEnv(std::uint64_t noise_seed, bool continuous_force = false);

  int observation_dim() const override { return 4; }
  ActionSpace action_space() const override;
  Capabilities capabilities() const override { return {true, true}; }
  void reseed_noise(std::uint64_t seed) override { noise_ = Rng(seed); }
  Eigen::VectorXd reset() override;
  StepResult step(const policy::Action& action) override;
  std::vector<double> save_state() const override;
  void restore_state(const std::vector<double>& state) override;

  static constexpr double kDt = 0.02;
  static constexpr double kForceMag = 10.0;
  static constexpr int kMaxSteps = 1000;

  /// Accelerations (x_ddot, angle_ddot) for a given state and force.
  static void dynamics(const Eigen::Vector4d& state, double force, double* x_ddot,
                       double* angle_ddot);

 private:
  Eigen::Vector4d state_;  // x, x_dot, angle, angle_dot
  int steps_ = 0;
  bool done_ = true;
  bool continuous_force_;
  Rng noise_;
};

/// Frictionless 2-d double integrator with force actions clipped to
/// [-1, 1]^2 and reward v_x - 1e-5 ||u||^2. Optional gaussian acceleration
/// noise makes the CRN machinery observable.
class PointMassEnv : public Env {
 public:
  PointMassEnv(std::uint64_t noise_seed, double noise_std = 0.0, double dt = 0.05);

  int observation_dim() const override { return 4; }
  ActionSpace action_space() const override;
  Capabilities capabilities() const override { return {true, true}; }
  void reseed_noise(std::uint64_t seed) override { noise_ = Rng(seed); }
  Eigen::VectorXd reset() override;
  StepResult step(const policy::Action& action) override;
  std::vector<double> save_state() const override;
  void restore_state(const std::vector<double>& state) override;

 private:
  Eigen::Vector4d state_;  // px, py, vx, vy
  double noise_std_;
  double dt_;
  Rng noise_;
};

/// Chain of n states: action 1 moves right, action 0 moves left (saturating
/// at the ends); with probability slip_prob the move is inverted. Reward 1
/// in the last state, 0 elsewhere; episodes start in state 0.
tabular::TabularMdp chain_mdp(int n_states, double slip_prob, double gamma);

/// w x h gridworld with 4 deterministic moves (with slip probability of a
/// uniformly random move instead), reward 1 in the absorbing goal corner.
tabular::TabularMdp gridworld(int width, int height, double slip_prob, double gamma);

/// Dirichlet(1) transition rows, uniform [0,1) state rewards, Dirichlet(1)
/// initial distribution; bit-reproducible from the seed.
tabular::TabularMdp random_mdp(int num_states, int num_actions, double gamma, std::uint64_t seed);

/// Environment selector strings:
///   cartpole | cartpole-cont | pointmass | pointmass:<noise_std>
///   chain:<n> | gridworld:<w>x<h> | random:<S>x<A>:<seed> | file:<path>
struct BuiltEnv {
  std::unique_ptr<Env> env;
  std::optional<tabular::TabularMdp> mdp;  // set for tabular selectors
};
BuiltEnv make_env(const std::string& selector, double gamma, std::uint64_t noise_seed);

}  // namespace trpolab::envs

#endif  // TRPOLAB_ENVIRONMENTS_HPP_
