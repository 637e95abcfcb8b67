#include "trpolab/theory_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace trpolab::bounds {

namespace {

using tabular::ExactEvaluation;
using tabular::evaluate_exact;

constexpr double kInf = std::numeric_limits<double>::infinity();

double penalty_coefficient(double epsilon, double gamma) {
  return 2.0 * epsilon * gamma / ((1.0 - gamma) * (1.0 - gamma));
}

}  // namespace

double surrogate_L(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_tilde) {
  const ExactEvaluation eval = evaluate_exact(mdp, pi);
  double acc = eval.eta;
  for (int s = 0; s < mdp.num_states; ++s) {
    acc += eval.visitation[s] * pi_tilde.probs.row(s).dot(eval.adv.row(s));
  }
  return acc;
}

double kl_rows(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 log 0 = 0
    if (q[i] == 0.0) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

DivergenceReport divergences(const TabularPolicy& pi, const TabularPolicy& pi_tilde,
                             const Eigen::VectorXd& state_weights) {
  pi.validate();
  pi_tilde.validate();
  if (pi.probs.rows() != pi_tilde.probs.rows() || pi.probs.cols() != pi_tilde.probs.cols()) {
    throw std::invalid_argument("policy shapes differ");
  }
  if (state_weights.size() != pi.probs.rows()) {
    throw std::invalid_argument("state weight vector has wrong length");
  }

  DivergenceReport rep;
  for (int s = 0; s < pi.probs.rows(); ++s) {
    const double tv = 0.5 * (pi.probs.row(s) - pi_tilde.probs.row(s)).cwiseAbs().sum();
    const double kl = kl_rows(pi.probs.row(s).transpose(), pi_tilde.probs.row(s).transpose());
    rep.tv_max = std::max(rep.tv_max, tv);
    rep.kl_max = std::max(rep.kl_max, kl);
    rep.kl_mean += state_weights[s] * kl;
  }
  return rep;
}

BoundCertificate certify_theorem1(const TabularMdp& mdp, const TabularPolicy& pi,
                                  const TabularPolicy& pi_tilde) {
  const ExactEvaluation base = evaluate_exact(mdp, pi);
  const ExactEvaluation other = evaluate_exact(mdp, pi_tilde);

  BoundCertificate cert;
  cert.eta_new = other.eta;
  cert.surrogate = base.eta;
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.surrogate += base.visitation[s] * pi_tilde.probs.row(s).dot(base.adv.row(s));
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.alpha = std::max(cert.alpha,
                          0.5 * (pi.probs.row(s) - pi_tilde.probs.row(s)).cwiseAbs().sum());
  }
  cert.epsilon = base.adv.cwiseAbs().maxCoeff();
  cert.penalty_coeff = penalty_coefficient(cert.epsilon, mdp.discount);
  cert.lower_bound = cert.surrogate - cert.penalty_coeff * cert.alpha * cert.alpha;
  cert.slack = cert.eta_new - cert.lower_bound;
  return cert;
}

BoundCertificate certify_theorem1a(const TabularMdp& mdp, const TabularPolicy& pi,
                                   const TabularPolicy& pi_tilde) {
  const ExactEvaluation base = evaluate_exact(mdp, pi);
  const ExactEvaluation other = evaluate_exact(mdp, pi_tilde);

  BoundCertificate cert;
  cert.eta_new = other.eta;
  cert.surrogate = base.eta;
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.surrogate += base.visitation[s] * pi_tilde.probs.row(s).dot(base.adv.row(s));
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.alpha = std::max(cert.alpha,
                          0.5 * (pi.probs.row(s) - pi_tilde.probs.row(s)).cwiseAbs().sum());
  }

  // Per-state ratio of advantage-weighted probability change to total
  // variation mass. States with zero variation carry no second-order error
  // and are excluded. The bound needs a uniform per-state magnitude, so the
  // certified epsilon is the largest |ratio|; Hoelder gives
  // |ratio| <= max_{s,a}|A|, keeping this bound at least as tight as the
  // plain one.
  cert.epsilon = 0.0;
  bool any_moved = false;
  for (int s = 0; s < mdp.num_states; ++s) {
    const double denom = (pi_tilde.probs.row(s) - pi.probs.row(s)).cwiseAbs().sum();
    if (denom <= 0.0) continue;
    any_moved = true;
    const double num = (pi_tilde.probs.row(s) - pi.probs.row(s)).dot(base.q.row(s));
    cert.epsilon = std::max(cert.epsilon, std::abs(num) / denom);
  }
  if (!any_moved) {
    // identical policies: degenerate certificate
    cert.alpha = 0.0;
    cert.epsilon = 0.0;
    cert.penalty_coeff = 0.0;
    cert.lower_bound = cert.surrogate;
    cert.slack = cert.eta_new - cert.lower_bound;
    return cert;
  }

  cert.penalty_coeff = penalty_coefficient(cert.epsilon, mdp.discount);
  cert.lower_bound = cert.surrogate - cert.penalty_coeff * cert.alpha * cert.alpha;
  cert.slack = cert.eta_new - cert.lower_bound;
  return cert;
}

BoundCertificate certify_cpi(const TabularMdp& mdp, const TabularPolicy& pi_old,
                             const TabularPolicy& pi_prime, double alpha) {
  const TabularPolicy pi_new = cpi_mixture(pi_old, pi_prime, alpha);
  const ExactEvaluation base = evaluate_exact(mdp, pi_old);
  const ExactEvaluation other = evaluate_exact(mdp, pi_new);

  BoundCertificate cert;
  cert.eta_new = other.eta;
  cert.surrogate = base.eta;
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.surrogate += base.visitation[s] * pi_new.probs.row(s).dot(base.adv.row(s));
  }
  cert.alpha = alpha;
  cert.epsilon = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    cert.epsilon = std::max(cert.epsilon, std::abs(pi_prime.probs.row(s).dot(base.adv.row(s))));
  }
  cert.penalty_coeff = penalty_coefficient(cert.epsilon, mdp.discount);
  cert.lower_bound = cert.surrogate - cert.penalty_coeff * alpha * alpha;
  cert.slack = cert.eta_new - cert.lower_bound;
  return cert;
}

TabularPolicy cpi_mixture(const TabularPolicy& pi_old, const TabularPolicy& pi_prime,
                          double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("mixture coefficient must lie in [0,1]");
  }
  if (pi_old.probs.rows() != pi_prime.probs.rows() ||
      pi_old.probs.cols() != pi_prime.probs.cols()) {
    throw std::invalid_argument("policy shapes differ");
  }
  TabularPolicy mixed;
  mixed.probs = (1.0 - alpha) * pi_old.probs + alpha * pi_prime.probs;
  return mixed;
}

namespace {

// Exact maximizer of sum_a p_a adv_a over the simplex subject to
// KL(q || p) <= budget. KKT form: p_a proportional to q_a / (nu - adv_a)
// with nu above the largest advantage on q's support; KL(q || p(nu)) is
// continuous and runs from +inf (nu -> max adv) to 0 (nu -> inf), so a
// bisection on nu hits the budget. Returns the new row.
Eigen::VectorXd max_linear_under_kl(const Eigen::VectorXd& q, const Eigen::VectorXd& adv,
                                    double budget, double* achieved_kl) {
  const int n = static_cast<int>(q.size());
  double max_adv = -kInf;
  double min_adv = kInf;
  for (int a = 0; a < n; ++a) {
    if (q[a] > 0.0) {
      max_adv = std::max(max_adv, adv[a]);
      min_adv = std::min(min_adv, adv[a]);
    }
  }
  if (budget <= 0.0 || max_adv - min_adv < 1e-300) {
    *achieved_kl = 0.0;
    return q;
  }

  const double scale = std::max(1.0, max_adv - min_adv);
  auto row_for = [&](double t) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    double norm = 0.0;
    for (int a = 0; a < n; ++a) {
      if (q[a] > 0.0) {
        p[a] = q[a] / (max_adv + t - adv[a]);
        norm += p[a];
      }
    }
    p /= norm;
    return p;
  };
  auto kl_for = [&](double t) { return kl_rows(q, row_for(t)); };

  // geometric bracket: KL decreases as t grows
  double t_hi = scale;
  while (kl_for(t_hi) > budget && t_hi < 1e18 * scale) t_hi *= 4.0;
  if (kl_for(t_hi) > budget) {
    throw std::runtime_error("inner policy maximization failed to bracket KL budget (residual " +
                             std::to_string(kl_for(t_hi) - budget) + ")");
  }
  double t_lo = t_hi;
  while (kl_for(t_lo) < budget && t_lo > 1e-18 * scale) t_lo *= 0.25;
  if (kl_for(t_lo) < budget) {
    // even the near-greedy row fits in the budget
    *achieved_kl = kl_for(t_lo);
    return row_for(t_lo);
  }

  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (t_lo + t_hi);
    if (kl_for(mid) > budget) {
      t_lo = mid;
    } else {
      t_hi = mid;
    }
  }
  *achieved_kl = kl_for(t_hi);
  return row_for(t_hi);
}

struct MmCandidate {
  Eigen::MatrixXd rows;
  double gain = 0.0;    // sum_s rho_s * improvement in expected advantage
  double max_kl = 0.0;  // realized max_s KL(q_s || p_s)
};

MmCandidate mm_candidate(const TabularPolicy& pi, const ExactEvaluation& eval, double budget) {
  const int s_count = static_cast<int>(pi.probs.rows());
  MmCandidate cand;
  cand.rows = pi.probs;
  for (int s = 0; s < s_count; ++s) {
    double achieved = 0.0;
    const Eigen::VectorXd row =
        max_linear_under_kl(pi.probs.row(s).transpose(), eval.adv.row(s).transpose(), budget,
                            &achieved);
    cand.rows.row(s) = row.transpose();
    cand.gain += eval.visitation[s] * row.dot(eval.adv.row(s).transpose());
    cand.max_kl = std::max(cand.max_kl, achieved);
  }
  return cand;
}

}  // namespace

std::vector<MmIterate> mm_policy_iteration(const TabularMdp& mdp, const TabularPolicy& pi0,
                                           int iters) {
  mdp.validate();
  pi0.validate();
  if (iters < 0) throw std::invalid_argument("iteration count must be nonnegative");

  std::vector<MmIterate> trace;
  trace.reserve(iters + 1);

  TabularPolicy current = pi0;
  ExactEvaluation eval = evaluate_exact(mdp, current);
  trace.push_back({current, eval.eta, eval.eta});

  constexpr double kGoldenStep = 3.1748021039363987;  // three grid points per decade
  double prev_budget = 0.0;

  for (int i = 0; i < iters; ++i) {
    const double eps_prime = eval.adv.cwiseAbs().maxCoeff();
    const double c = penalty_coefficient(eps_prime, mdp.discount);

    // objective of the budgeted candidate as a function of the shared
    // per-state KL budget; concave in the budget
    auto objective = [&](double budget) {
      const MmCandidate cand = mm_candidate(current, eval, budget);
      return cand.gain - c * cand.max_kl;
    };

    double best_budget = 0.0;
    double best_value = 0.0;  // budget 0 keeps the current policy: M - eta = 0
    if (prev_budget == 0.0) {
      // cold start: coarse log grid
      for (double budget = 1e-13; budget <= 32.0; budget *= kGoldenStep) {
        const double value = objective(budget);
        if (value > best_value) {
          best_value = value;
          best_budget = budget;
        }
      }
    } else {
      // warm start around the previous maximizer, expanding while the edge wins
      double lo = prev_budget / (kGoldenStep * kGoldenStep);
      double hi = prev_budget * kGoldenStep * kGoldenStep;
      for (double budget = lo; budget <= hi * 1.0001; budget *= kGoldenStep) {
        const double value = objective(budget);
        if (value > best_value) {
          best_value = value;
          best_budget = budget;
        }
      }
      while (best_budget > 0.0 && best_budget <= lo * 1.0001 && lo > 1e-15) {
        lo /= kGoldenStep;
        const double value = objective(lo);
        if (value > best_value) {
          best_value = value;
          best_budget = lo;
        } else {
          break;
        }
      }
      while (best_budget >= hi * 0.9999 && hi < 64.0) {
        hi *= kGoldenStep;
        const double value = objective(hi);
        if (value > best_value) {
          best_value = value;
          best_budget = hi;
        } else {
          break;
        }
      }
    }
    if (best_budget > 0.0) {
      // golden-section refinement on the bracketing interval
      constexpr double kGolden = 0.6180339887498949;
      double a = best_budget / kGoldenStep;
      double b = best_budget * kGoldenStep;
      double x1 = b - kGolden * (b - a);
      double x2 = a + kGolden * (b - a);
      double f1 = objective(x1);
      double f2 = objective(x2);
      for (int it = 0; it < 24; ++it) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kGolden * (b - a);
          f2 = objective(x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kGolden * (b - a);
          f1 = objective(x1);
        }
      }
      const double refined = 0.5 * (a + b);
      if (objective(refined) > best_value) best_budget = refined;
    }
    prev_budget = best_budget;

    const MmCandidate cand = mm_candidate(current, eval, best_budget);
    const double m_value = eval.eta + cand.gain - c * cand.max_kl;
    if (m_value < eval.eta) {
      // never step to a candidate whose minorant is below the fixed point
      trace.push_back({current, eval.eta, eval.eta});
      continue;
    }
    current.probs = cand.rows;
    eval = evaluate_exact(mdp, current);
    trace.push_back({current, eval.eta, m_value});
  }
  return trace;
}

TabularPolicy tabular_softmax(const Eigen::MatrixXd& theta) {
  TabularPolicy pi;
  pi.probs.resize(theta.rows(), theta.cols());
  for (int s = 0; s < theta.rows(); ++s) {
    const double m = theta.row(s).maxCoeff();
    Eigen::ArrayXd e = (theta.row(s).array() - m).exp();
    pi.probs.row(s) = (e / e.sum()).matrix();
  }
  return pi;
}

Eigen::MatrixXd softmax_policy_gradient(const TabularMdp& mdp, const Eigen::MatrixXd& theta) {
  const TabularPolicy pi = tabular_softmax(theta);
  const tabular::ExactEvaluation eval = evaluate_exact(mdp, pi);
  Eigen::MatrixXd grad(theta.rows(), theta.cols());
  for (int s = 0; s < theta.rows(); ++s) {
    grad.row(s) = eval.visitation[s] * pi.probs.row(s).cwiseProduct(eval.adv.row(s));
  }
  return grad;
}

}  // namespace trpolab::bounds
