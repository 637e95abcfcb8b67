#ifndef TRPOLAB_POLICY_MODEL_HPP_
#define TRPOLAB_POLICY_MODEL_HPP_

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trpolab/rng.hpp"

namespace trpolab::policy {

enum class HeadKind {
  kGaussianDiag,        // dense net -> mean; separate log-stdev parameters
  kCategoricalFactored, // dense net -> concatenated per-factor logits
  kTabularSoftmax,      // single linear map, no bias, one-hot inputs
};

const char* head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

/// Architecture description. Hidden layers use tanh; the output layer is
/// linear. Tabular-softmax forbids hidden layers and biases so that theta is
/// exactly the logit table.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_sizes;
  HeadKind head = HeadKind::kCategoricalFactored;
  int action_dim = 0;               // gaussian only
  std::vector<int> action_factors;  // categorical / tabular-softmax

  void validate() const;
  bool uses_bias() const { return head != HeadKind::kTabularSoftmax; }
  int net_output_dim() const;
  /// Dimension of the head-coordinate space: gaussian uses (mean, log-stdev)
  /// pairs, discrete heads use pre-softmax logits.
  int head_coord_dim() const;
  int param_count() const;
};

/// Named slice of the flat parameter vector.
struct ParamSlice {
  std::string name;
  int offset = 0;
  int size = 0;
};

/// Slices partition [0, param_count) exactly, in order.
std::vector<ParamSlice> param_layout(const NetworkSpec& spec);

/// Uniform(-w, w) weights with w = 1/sqrt(fan_in); zero biases; zero
/// log-stdev.
Eigen::VectorXd init_params(const NetworkSpec& spec, Rng& rng);

/// Distribution over actions produced by one forward pass.
struct DistParams {
  HeadKind kind = HeadKind::kCategoricalFactored;
  Eigen::VectorXd mean;    // gaussian
  Eigen::VectorXd stdev;   // gaussian, exp(log-stdev), always positive
  std::vector<Eigen::VectorXd> factor_logits;
  std::vector<Eigen::VectorXd> factor_probs;
};

struct Action {
  Eigen::VectorXd cont;    // gaussian heads
  std::vector<int> disc;   // discrete heads, one index per factor
};

double log_prob(const DistParams& dist, const Action& action);
Action sample(const DistParams& dist, Rng& rng);
double entropy(const DistParams& dist);

/// KL(old || new) in closed form. Discrete factors follow the 0*log0 = 0
/// convention and report +infinity when old has support where new does not.
double kl_divergence(const DistParams& old_dist, const DistParams& new_dist);

/// Head-space Fisher product M v, the second derivative of
/// kl(mu, mu_old) in its first argument evaluated at `at`:
/// gaussian blocks are 1/sigma^2 (mean) and 2 (log-stdev); discrete factors
/// apply diag(p) - p p^T in logit coordinates.
Eigen::VectorXd fisher_head_product(const DistParams& at, const Eigen::VectorXd& v);

/// Immutable (spec, theta) snapshot with forward evaluation and the exact
/// derivative facilities the solver needs: gradients of log-likelihood and
/// Jacobian products in head-coordinate space.
class PolicyModel {
 public:
  PolicyModel(NetworkSpec spec, Eigen::VectorXd theta);

  const NetworkSpec& spec() const { return spec_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  /// Cached activations from one evaluation, reused by the Jacobian products.
  struct Trace {
    Eigen::VectorXd input;
    std::vector<Eigen::VectorXd> hidden;  // post-tanh activations
    Eigen::VectorXd net_out;
    DistParams dist;
  };

  Trace forward(const Eigen::VectorXd& state) const;
  DistParams dist(const Eigen::VectorXd& state) const;

  /// d log pi(a|s) / d theta by reverse accumulation.
  Eigen::VectorXd grad_log_prob(const Eigen::VectorXd& state, const Action& action) const;

  /// J v: directional derivative of the head coordinates along theta
  /// direction v.
  Eigen::VectorXd head_jvp(const Trace& trace, const Eigen::VectorXd& v) const;
  /// J^T u: head-coordinate cotangent pulled back to theta space.
  Eigen::VectorXd head_vjp(const Trace& trace, const Eigen::VectorXd& u) const;

 private:
  struct LayerView {
    int w_offset = 0, rows = 0, cols = 0;
    int b_offset = -1;  // -1 when the layer has no bias
  };

  Eigen::Map<const Eigen::MatrixXd> weight(const LayerView& l) const;

  NetworkSpec spec_;
  Eigen::VectorXd theta_;
  std::vector<LayerView> layers_;
  int logstd_offset_ = -1;
};

/// Versioned textual checkpoint of (spec, theta, extras). Parameter values
/// are stored as hexadecimal floats so the round trip is bit exact.
void save_checkpoint(std::ostream& out, const NetworkSpec& spec, const Eigen::VectorXd& theta,
                     const std::map<std::string, std::string>& extras);
void save_checkpoint_file(const std::string& path, const NetworkSpec& spec,
                          const Eigen::VectorXd& theta,
                          const std::map<std::string, std::string>& extras);

struct Checkpoint {
  NetworkSpec spec;
  Eigen::VectorXd theta;
  std::map<std::string, std::string> extras;
};

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace trpolab::policy

#endif  // TRPOLAB_POLICY_MODEL_HPP_
