#include "trpolab/tabular_mdp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace trpolab::tabular {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
  if ((p.array() < 0.0).any()) {
    throw std::invalid_argument(what + " has a negative entry");
  }
  if (std::abs(p.sum() - 1.0) > kRowSumTol) {
    throw std::invalid_argument(what + " does not sum to 1 (sum=" + std::to_string(p.sum()) + ")");
  }
}

}  // namespace

void TabularMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0) {
    throw std::invalid_argument("MDP needs positive state and action counts");
  }
  if (!(discount > 0.0 && discount < 1.0)) {
    throw std::invalid_argument("discount must lie in (0,1)");
  }
  if (static_cast<int>(transitions.size()) != num_actions) {
    throw std::invalid_argument("transition tensor has wrong action count");
  }
  for (int a = 0; a < num_actions; ++a) {
    if (transitions[a].rows() != num_states || transitions[a].cols() != num_states) {
      throw std::invalid_argument("transition matrix for action " + std::to_string(a) +
                                  " has wrong shape");
    }
    for (int s = 0; s < num_states; ++s) {
      check_distribution(transitions[a].row(s).transpose(),
                         "P[" + std::to_string(s) + "][" + std::to_string(a) + "]");
    }
  }
  if (rewards.size() != num_states) {
    throw std::invalid_argument("reward vector has wrong length");
  }
  if (initial_dist.size() != num_states) {
    throw std::invalid_argument("initial distribution has wrong length");
  }
  check_distribution(initial_dist, "rho0");
}

void TabularPolicy::validate() const {
  if (probs.rows() <= 0 || probs.cols() <= 0) {
    throw std::invalid_argument("policy matrix is empty");
  }
  for (int s = 0; s < probs.rows(); ++s) {
    check_distribution(probs.row(s).transpose(), "pi[" + std::to_string(s) + "]");
  }
}

Eigen::MatrixXd policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy) {
  Eigen::MatrixXd p_pi = Eigen::MatrixXd::Zero(mdp.num_states, mdp.num_states);
  for (int a = 0; a < mdp.num_actions; ++a) {
    p_pi.noalias() += policy.probs.col(a).asDiagonal() * mdp.transitions[a];
  }
  return p_pi;
}

ExactEvaluation evaluate_exact(const TabularMdp& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  if (policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions) {
    throw std::invalid_argument("policy shape does not match MDP");
  }

  const int s_count = mdp.num_states;
  const Eigen::MatrixXd p_pi = policy_transition_matrix(mdp, policy);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(s_count, s_count) - mdp.discount * p_pi;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  ExactEvaluation out;
  out.v = lu.solve(mdp.rewards);

  // I - gamma P_pi is strictly diagonally dominant in the infinity norm, so
  // the factorization cannot be singular; a non-finite solve means broken input.
  if (!out.v.allFinite()) {
    throw std::runtime_error("internal error: value solve produced non-finite entries");
  }

  out.q.resize(s_count, mdp.num_actions);
  for (int a = 0; a < mdp.num_actions; ++a) {
    out.q.col(a) = mdp.rewards + mdp.discount * (mdp.transitions[a] * out.v);
  }
  out.adv = out.q.colwise() - out.v;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(system.transpose());
  out.visitation = lu_t.solve(mdp.initial_dist);
  if (!out.visitation.allFinite()) {
    throw std::runtime_error("internal error: visitation solve produced non-finite entries");
  }

  out.eta = mdp.initial_dist.dot(out.v);
  return out;
}

EtaDifference eta_difference_identity(const TabularMdp& mdp, const TabularPolicy& pi,
                                      const TabularPolicy& pi_tilde) {
  const ExactEvaluation base = evaluate_exact(mdp, pi);
  const ExactEvaluation other = evaluate_exact(mdp, pi_tilde);
  EtaDifference d;
  d.lhs = other.eta - base.eta;
  d.rhs = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    d.rhs += other.visitation[s] * pi_tilde.probs.row(s).dot(base.adv.row(s));
  }
  return d;
}

namespace {

// Strips comments, yields whitespace-separated tokens.
std::vector<std::string> tokenize(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  return tokens;
}

double parse_real(const std::string& tok, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("bad ") + what + " value '" + tok + "'");
  }
}

int parse_int(const std::string& tok, const char* what) {
  const double v = parse_real(tok, what);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw std::invalid_argument(std::string("expected integer ") + what + ", got '" + tok + "'");
  }
  return i;
}

}  // namespace

TabularMdp load_mdp(std::istream& in) {
  const std::vector<std::string> toks = tokenize(in);
  std::size_t pos = 0;
  auto need = [&](const char* what) -> const std::string& {
    if (pos >= toks.size()) throw std::invalid_argument(std::string("truncated MDP file: missing ") + what);
    return toks[pos++];
  };

  if (need("'mdp' header") != "mdp") throw std::invalid_argument("MDP file must start with 'mdp'");
  TabularMdp mdp;
  mdp.num_states = parse_int(need("state count"), "state count");
  mdp.num_actions = parse_int(need("action count"), "action count");
  mdp.discount = parse_real(need("gamma"), "gamma");

  if (mdp.num_states <= 0 || mdp.num_actions <= 0) {
    throw std::invalid_argument("MDP needs positive state and action counts");
  }

  if (need("'rho0' line") != "rho0") throw std::invalid_argument("expected 'rho0' line");
  mdp.initial_dist.resize(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) mdp.initial_dist[s] = parse_real(need("rho0 entry"), "rho0 entry");

  if (need("'r' line") != "r") throw std::invalid_argument("expected 'r' line");
  mdp.rewards.resize(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) mdp.rewards[s] = parse_real(need("reward entry"), "reward entry");

  mdp.transitions.assign(mdp.num_actions,
                         Eigen::MatrixXd::Constant(mdp.num_states, mdp.num_states, -1.0));
  for (int row = 0; row < mdp.num_states * mdp.num_actions; ++row) {
    if (need("'P' line") != "P") throw std::invalid_argument("expected 'P s a ...' line");
    const int s = parse_int(need("state index"), "state index");
    const int a = parse_int(need("action index"), "action index");
    if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions) {
      throw std::invalid_argument("P line indexes out of range");
    }
    for (int sn = 0; sn < mdp.num_states; ++sn) {
      mdp.transitions[a](s, sn) = parse_real(need("transition probability"), "transition probability");
    }
  }
  if (pos != toks.size()) throw std::invalid_argument("trailing tokens after transition lines");

  mdp.validate();
  return mdp;
}

TabularMdp load_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open MDP file: " + path);
  return load_mdp(in);
}

namespace {
std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void save_mdp(const TabularMdp& mdp, std::ostream& out) {
  out << "mdp " << mdp.num_states << ' ' << mdp.num_actions << ' ' << fmt_real(mdp.discount) << '\n';
  out << "rho0";
  for (int s = 0; s < mdp.num_states; ++s) out << ' ' << fmt_real(mdp.initial_dist[s]);
  out << "\nr";
  for (int s = 0; s < mdp.num_states; ++s) out << ' ' << fmt_real(mdp.rewards[s]);
  out << '\n';
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      out << "P " << s << ' ' << a;
      for (int sn = 0; sn < mdp.num_states; ++sn) out << ' ' << fmt_real(mdp.transitions[a](s, sn));
      out << '\n';
    }
  }
}

void save_mdp_file(const TabularMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write MDP file: " + path);
  save_mdp(mdp, out);
}

}  // namespace trpolab::tabular
