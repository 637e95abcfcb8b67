#include "trpolab/policy_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace trpolab::policy {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::ArrayXd e = (logits.array() - m).exp();
  return (e / e.sum()).matrix();
}

}  // namespace

const char* head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kGaussianDiag: return "gaussian";
    case HeadKind::kCategoricalFactored: return "categorical";
    case HeadKind::kTabularSoftmax: return "tabular";
  }
  return "?";
}

HeadKind head_kind_from_name(const std::string& name) {
  if (name == "gaussian") return HeadKind::kGaussianDiag;
  if (name == "categorical") return HeadKind::kCategoricalFactored;
  if (name == "tabular") return HeadKind::kTabularSoftmax;
  throw std::invalid_argument("unknown head kind '" + name + "'");
}

void NetworkSpec::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("input_dim must be positive");
  for (int h : hidden_sizes) {
    if (h <= 0) throw std::invalid_argument("hidden layer sizes must be positive");
  }
  switch (head) {
    case HeadKind::kGaussianDiag:
      if (action_dim <= 0) throw std::invalid_argument("gaussian head needs action_dim > 0");
      break;
    case HeadKind::kCategoricalFactored:
      if (action_factors.empty()) throw std::invalid_argument("categorical head needs factors");
      for (int n : action_factors) {
        if (n <= 1) throw std::invalid_argument("categorical factors need at least 2 outcomes");
      }
      break;
    case HeadKind::kTabularSoftmax:
      if (!hidden_sizes.empty()) {
        throw std::invalid_argument("tabular-softmax policies have no hidden layers");
      }
      if (action_factors.size() != 1 || action_factors[0] <= 1) {
        throw std::invalid_argument("tabular-softmax needs exactly one factor of size >= 2");
      }
      break;
  }
}

int NetworkSpec::net_output_dim() const {
  if (head == HeadKind::kGaussianDiag) return action_dim;
  int total = 0;
  for (int n : action_factors) total += n;
  return total;
}

int NetworkSpec::head_coord_dim() const {
  if (head == HeadKind::kGaussianDiag) return 2 * action_dim;
  return net_output_dim();
}

int NetworkSpec::param_count() const {
  int total = 0;
  int in = input_dim;
  for (int h : hidden_sizes) {
    total += h * in + h;
    in = h;
  }
  total += net_output_dim() * in;
  if (uses_bias()) total += net_output_dim();
  if (head == HeadKind::kGaussianDiag) total += action_dim;
  return total;
}

std::vector<ParamSlice> param_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<ParamSlice> slices;
  int offset = 0;
  int in = spec.input_dim;
  int layer = 0;
  for (int h : spec.hidden_sizes) {
    slices.push_back({"W" + std::to_string(layer), offset, h * in});
    offset += h * in;
    slices.push_back({"b" + std::to_string(layer), offset, h});
    offset += h;
    in = h;
    ++layer;
  }
  const int out = spec.net_output_dim();
  slices.push_back({"W" + std::to_string(layer), offset, out * in});
  offset += out * in;
  if (spec.uses_bias()) {
    slices.push_back({"b" + std::to_string(layer), offset, out});
    offset += out;
  }
  if (spec.head == HeadKind::kGaussianDiag) {
    slices.push_back({"log_stdev", offset, spec.action_dim});
    offset += spec.action_dim;
  }
  return slices;
}

Eigen::VectorXd init_params(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(spec.param_count());
  int offset = 0;
  int in = spec.input_dim;
  auto fill_weights = [&](int rows, int cols) {
    const double w = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows * cols; ++i) theta[offset + i] = rng.uniform(-w, w);
    offset += rows * cols;
  };
  for (int h : spec.hidden_sizes) {
    fill_weights(h, in);
    offset += h;  // biases stay zero
    in = h;
  }
  fill_weights(spec.net_output_dim(), in);
  if (spec.uses_bias()) offset += spec.net_output_dim();
  // gaussian log-stdev slice stays zero: stdev = exp(0) = 1
  return theta;
}

double log_prob(const DistParams& dist, const Action& action) {
  if (dist.kind == HeadKind::kGaussianDiag) {
    if (action.cont.size() != dist.mean.size()) {
      throw std::invalid_argument("action dimension does not match gaussian head");
    }
    double lp = 0.0;
    for (int d = 0; d < dist.mean.size(); ++d) {
      const double z = (action.cont[d] - dist.mean[d]) / dist.stdev[d];
      lp += -0.5 * z * z - std::log(dist.stdev[d]) - 0.5 * kLogTwoPi;
    }
    return lp;
  }
  if (action.disc.size() != dist.factor_probs.size()) {
    throw std::invalid_argument("action factor count does not match discrete head");
  }
  double lp = 0.0;
  for (std::size_t k = 0; k < dist.factor_probs.size(); ++k) {
    const auto& p = dist.factor_probs[k];
    const int a = action.disc[k];
    if (a < 0 || a >= p.size()) throw std::invalid_argument("discrete action index out of range");
    if (p[a] <= 0.0) return -kInf;
    lp += std::log(p[a]);
  }
  return lp;
}

Action sample(const DistParams& dist, Rng& rng) {
  Action action;
  if (dist.kind == HeadKind::kGaussianDiag) {
    action.cont.resize(dist.mean.size());
    for (int d = 0; d < dist.mean.size(); ++d) {
      action.cont[d] = dist.mean[d] + dist.stdev[d] * rng.normal();
    }
    return action;
  }
  action.disc.reserve(dist.factor_probs.size());
  for (const auto& p : dist.factor_probs) action.disc.push_back(rng.categorical(p));
  return action;
}

double entropy(const DistParams& dist) {
  if (dist.kind == HeadKind::kGaussianDiag) {
    double h = 0.0;
    for (int d = 0; d < dist.stdev.size(); ++d) {
      h += 0.5 * (1.0 + kLogTwoPi) + std::log(dist.stdev[d]);
    }
    return h;
  }
  double h = 0.0;
  for (const auto& p : dist.factor_probs) {
    for (int i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
  }
  return h;
}

double kl_divergence(const DistParams& old_dist, const DistParams& new_dist) {
  if (old_dist.kind != new_dist.kind) throw std::invalid_argument("head kinds differ");
  if (old_dist.kind == HeadKind::kGaussianDiag) {
    if (old_dist.mean.size() != new_dist.mean.size()) {
      throw std::invalid_argument("gaussian dimensions differ");
    }
    double kl = 0.0;
    for (int d = 0; d < old_dist.mean.size(); ++d) {
      const double so = old_dist.stdev[d];
      const double sn = new_dist.stdev[d];
      const double dm = old_dist.mean[d] - new_dist.mean[d];
      kl += std::log(sn / so) + (so * so + dm * dm) / (2.0 * sn * sn) - 0.5;
    }
    return std::max(kl, 0.0);
  }
  if (old_dist.factor_probs.size() != new_dist.factor_probs.size()) {
    throw std::invalid_argument("factor counts differ");
  }
  double kl = 0.0;
  for (std::size_t k = 0; k < old_dist.factor_probs.size(); ++k) {
    const auto& po = old_dist.factor_probs[k];
    const auto& pn = new_dist.factor_probs[k];
    if (po.size() != pn.size()) throw std::invalid_argument("factor sizes differ");
    for (int i = 0; i < po.size(); ++i) {
      if (po[i] == 0.0) continue;
      if (pn[i] == 0.0) return kInf;
      kl += po[i] * std::log(po[i] / pn[i]);
    }
  }
  return std::max(kl, 0.0);
}

Eigen::VectorXd fisher_head_product(const DistParams& at, const Eigen::VectorXd& v) {
  if (at.kind == HeadKind::kGaussianDiag) {
    const int d = static_cast<int>(at.mean.size());
    if (v.size() != 2 * d) throw std::invalid_argument("fisher product dimension mismatch");
    Eigen::VectorXd out(2 * d);
    out.head(d) = v.head(d).cwiseQuotient(at.stdev.cwiseProduct(at.stdev));
    out.tail(d) = 2.0 * v.tail(d);
    return out;
  }
  int total = 0;
  for (const auto& p : at.factor_probs) total += static_cast<int>(p.size());
  if (v.size() != total) throw std::invalid_argument("fisher product dimension mismatch");
  Eigen::VectorXd out(total);
  int off = 0;
  for (const auto& p : at.factor_probs) {
    const int n = static_cast<int>(p.size());
    const auto vf = v.segment(off, n);
    const double pv = p.dot(vf);
    out.segment(off, n) = p.cwiseProduct(vf) - p * pv;
    off += n;
  }
  return out;
}

PolicyModel::PolicyModel(NetworkSpec spec, Eigen::VectorXd theta)
    : spec_(std::move(spec)), theta_(std::move(theta)) {
  spec_.validate();
  if (theta_.size() != spec_.param_count()) {
    throw std::invalid_argument("theta has " + std::to_string(theta_.size()) +
                                " entries, spec needs " + std::to_string(spec_.param_count()));
  }
  int offset = 0;
  int in = spec_.input_dim;
  for (int h : spec_.hidden_sizes) {
    LayerView l;
    l.w_offset = offset;
    l.rows = h;
    l.cols = in;
    offset += h * in;
    l.b_offset = offset;
    offset += h;
    layers_.push_back(l);
    in = h;
  }
  LayerView out;
  out.w_offset = offset;
  out.rows = spec_.net_output_dim();
  out.cols = in;
  offset += out.rows * out.cols;
  if (spec_.uses_bias()) {
    out.b_offset = offset;
    offset += out.rows;
  }
  layers_.push_back(out);
  if (spec_.head == HeadKind::kGaussianDiag) {
    logstd_offset_ = offset;
  }
}

Eigen::Map<const Eigen::MatrixXd> PolicyModel::weight(const LayerView& l) const {
  return Eigen::Map<const Eigen::MatrixXd>(theta_.data() + l.w_offset, l.rows, l.cols);
}

PolicyModel::Trace PolicyModel::forward(const Eigen::VectorXd& state) const {
  if (state.size() != spec_.input_dim) {
    throw std::invalid_argument("state has wrong dimension");
  }
  Trace trace;
  trace.input = state;
  Eigen::VectorXd x = state;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Eigen::VectorXd z = weight(layers_[l]) * x;
    z += theta_.segment(layers_[l].b_offset, layers_[l].rows);
    x = z.array().tanh().matrix();
    if (!x.allFinite()) {
      throw std::runtime_error("non-finite activation in layer " + std::to_string(l));
    }
    trace.hidden.push_back(x);
  }
  const LayerView& out = layers_.back();
  trace.net_out = weight(out) * x;
  if (out.b_offset >= 0) trace.net_out += theta_.segment(out.b_offset, out.rows);
  if (!trace.net_out.allFinite()) {
    throw std::runtime_error("non-finite activation in layer " + std::to_string(layers_.size() - 1));
  }

  DistParams& dist = trace.dist;
  dist.kind = spec_.head;
  if (spec_.head == HeadKind::kGaussianDiag) {
    dist.mean = trace.net_out;
    dist.stdev = theta_.segment(logstd_offset_, spec_.action_dim).array().exp().matrix();
  } else {
    int off = 0;
    for (int n : spec_.action_factors) {
      dist.factor_logits.push_back(trace.net_out.segment(off, n));
      dist.factor_probs.push_back(softmax(dist.factor_logits.back()));
      off += n;
    }
  }
  return trace;
}

DistParams PolicyModel::dist(const Eigen::VectorXd& state) const { return forward(state).dist; }

Eigen::VectorXd PolicyModel::head_jvp(const Trace& trace, const Eigen::VectorXd& v) const {
  if (v.size() != theta_.size()) throw std::invalid_argument("direction has wrong dimension");
  const Eigen::VectorXd* x = &trace.input;
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(x->size());
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    const LayerView& lv = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> dw(v.data() + lv.w_offset, lv.rows, lv.cols);
    Eigen::VectorXd dz = dw * (*x) + weight(lv) * dx;
    dz += v.segment(lv.b_offset, lv.rows);
    const Eigen::VectorXd& act = trace.hidden[l];
    dx = ((1.0 - act.array().square()) * dz.array()).matrix();
    x = &act;
  }
  const LayerView& out = layers_.back();
  Eigen::Map<const Eigen::MatrixXd> dw(v.data() + out.w_offset, out.rows, out.cols);
  Eigen::VectorXd dnet = dw * (*x) + weight(out) * dx;
  if (out.b_offset >= 0) dnet += v.segment(out.b_offset, out.rows);

  if (spec_.head == HeadKind::kGaussianDiag) {
    Eigen::VectorXd tangent(2 * spec_.action_dim);
    tangent.head(spec_.action_dim) = dnet;
    tangent.tail(spec_.action_dim) = v.segment(logstd_offset_, spec_.action_dim);
    return tangent;
  }
  return dnet;
}

Eigen::VectorXd PolicyModel::head_vjp(const Trace& trace, const Eigen::VectorXd& u) const {
  if (u.size() != spec_.head_coord_dim()) {
    throw std::invalid_argument("cotangent has wrong dimension");
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());

  Eigen::VectorXd g_net;
  if (spec_.head == HeadKind::kGaussianDiag) {
    g_net = u.head(spec_.action_dim);
    grad.segment(logstd_offset_, spec_.action_dim) = u.tail(spec_.action_dim);
  } else {
    g_net = u;
  }

  const LayerView& out = layers_.back();
  const Eigen::VectorXd& last =
      trace.hidden.empty() ? trace.input : trace.hidden.back();
  Eigen::Map<Eigen::MatrixXd>(grad.data() + out.w_offset, out.rows, out.cols) =
      g_net * last.transpose();
  if (out.b_offset >= 0) grad.segment(out.b_offset, out.rows) = g_net;

  Eigen::VectorXd gx = weight(out).transpose() * g_net;
  for (int l = static_cast<int>(layers_.size()) - 2; l >= 0; --l) {
    const LayerView& lv = layers_[l];
    const Eigen::VectorXd& act = trace.hidden[l];
    Eigen::VectorXd gz = ((1.0 - act.array().square()) * gx.array()).matrix();
    const Eigen::VectorXd& below = (l == 0) ? trace.input : trace.hidden[l - 1];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + lv.w_offset, lv.rows, lv.cols) =
        gz * below.transpose();
    grad.segment(lv.b_offset, lv.rows) = gz;
    gx = weight(lv).transpose() * gz;
  }
  return grad;
}

Eigen::VectorXd PolicyModel::grad_log_prob(const Eigen::VectorXd& state,
                                           const Action& action) const {
  const Trace trace = forward(state);
  const DistParams& dist = trace.dist;
  Eigen::VectorXd u(spec_.head_coord_dim());
  if (spec_.head == HeadKind::kGaussianDiag) {
    const int d = spec_.action_dim;
    for (int i = 0; i < d; ++i) {
      const double z = (action.cont[i] - dist.mean[i]) / dist.stdev[i];
      u[i] = z / dist.stdev[i];    // d logp / d mean
      u[d + i] = z * z - 1.0;      // d logp / d log-stdev
    }
  } else {
    int off = 0;
    for (std::size_t k = 0; k < dist.factor_probs.size(); ++k) {
      const auto& p = dist.factor_probs[k];
      const int n = static_cast<int>(p.size());
      u.segment(off, n) = -p;
      u[off + action.disc[k]] += 1.0;
      off += n;
    }
  }
  return head_vjp(trace, u);
}

namespace {

std::string fmt_hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw std::invalid_argument("bad parameter value '" + tok + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const NetworkSpec& spec, const Eigen::VectorXd& theta,
                     const std::map<std::string, std::string>& extras) {
  out << "trpolab-checkpoint-v1\n";
  out << "input_dim " << spec.input_dim << '\n';
  out << "hidden " << spec.hidden_sizes.size();
  for (int h : spec.hidden_sizes) out << ' ' << h;
  out << '\n';
  out << "head " << head_kind_name(spec.head) << '\n';
  out << "action_dim " << spec.action_dim << '\n';
  out << "factors " << spec.action_factors.size();
  for (int n : spec.action_factors) out << ' ' << n;
  out << '\n';
  out << "theta " << theta.size();
  for (int i = 0; i < theta.size(); ++i) out << ' ' << fmt_hex(theta[i]);
  out << '\n';
  for (const auto& [key, value] : extras) {
    out << "extra " << key << ' ' << value << '\n';
  }
  out << "end\n";
}

void save_checkpoint_file(const std::string& path, const NetworkSpec& spec,
                          const Eigen::VectorXd& theta,
                          const std::map<std::string, std::string>& extras) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  save_checkpoint(out, spec, theta, extras);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "trpolab-checkpoint-v1") {
    throw std::invalid_argument("not a trpolab checkpoint (bad version line)");
  }
  Checkpoint ckpt;
  bool saw_end = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "end") {
      saw_end = true;
      break;
    } else if (key == "input_dim") {
      ls >> ckpt.spec.input_dim;
    } else if (key == "hidden") {
      std::size_t n = 0;
      ls >> n;
      ckpt.spec.hidden_sizes.resize(n);
      for (auto& h : ckpt.spec.hidden_sizes) ls >> h;
    } else if (key == "head") {
      std::string name;
      ls >> name;
      ckpt.spec.head = head_kind_from_name(name);
    } else if (key == "action_dim") {
      ls >> ckpt.spec.action_dim;
    } else if (key == "factors") {
      std::size_t n = 0;
      ls >> n;
      ckpt.spec.action_factors.resize(n);
      for (auto& f : ckpt.spec.action_factors) ls >> f;
    } else if (key == "theta") {
      int n = 0;
      ls >> n;
      ckpt.theta.resize(n);
      std::string tok;
      for (int i = 0; i < n; ++i) {
        if (!(ls >> tok)) throw std::invalid_argument("truncated theta line");
        ckpt.theta[i] = parse_hex(tok);
      }
    } else if (key == "extra") {
      std::string name;
      ls >> name;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.extras[name] = value;
    } else {
      throw std::invalid_argument("unknown checkpoint key '" + key + "'");
    }
    if (!ls && !ls.eof()) throw std::invalid_argument("malformed checkpoint line: " + line);
  }
  if (!saw_end) throw std::invalid_argument("truncated checkpoint (missing end)");
  ckpt.spec.validate();
  if (ckpt.theta.size() != ckpt.spec.param_count()) {
    throw std::invalid_argument("checkpoint theta does not match spec");
  }
  return ckpt;
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace trpolab::policy
