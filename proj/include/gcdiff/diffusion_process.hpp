#pragma once

// Forward noising kernels, closed-form marginals and the Bayes posterior of
// the Gaussian-categorical diffusion.

#include "gcdiff/core.hpp"
#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/schedules.hpp"

#include <cmath>

namespace gcdiff {

// Posterior q(z_s | z_t, z_0); the normalizer is folded into theta.
struct PosteriorParams {
  FactorizedGCParams params;
};

// Signal retention between two timesteps s < t. For s = t - 1 the stored
// per-step alpha and beta are used verbatim, so one-step and strided code
// paths agree bit for bit.
struct Retention {
  double alpha;
  double beta;
};

inline Retention gauss_retention(const NoiseSchedule& sched, int t, int s) {
  if (s == t - 1) return {sched.alpha_gauss(t), sched.beta_gauss(t)};
  const double a = sched.alphabar_gauss(t) / sched.alphabar_gauss(s);
  return {a, 1.0 - a};
}

inline Retention cat_retention(const NoiseSchedule& sched, int t, int s) {
  if (s == t - 1) return {sched.alpha_cat(t), sched.beta_cat(t)};
  const double a = sched.alphabar_cat(t) / sched.alphabar_cat(s);
  return {a, 1.0 - a};
}

inline void check_timestep(const NoiseSchedule& sched, int t, int lowest, const char* where) {
  if (t < lowest || t > sched.total_steps()) {
    throw ValidationError(std::string(where) + ": timestep " + std::to_string(t) + " out of range [" +
                          std::to_string(lowest) + ", " + std::to_string(sched.total_steps()) + "]");
  }
}

// y' ~ C((1 - beta) 1[y] + beta / K). beta may be 0 or 1 here.
inline int categorical_step(int y, double beta, std::size_t n_classes, Rng& rng) {
  require(beta >= 0.0 && beta <= 1.0, "categorical_step: beta must lie in [0, 1]");
  const double u = uniform01(rng);
  const double k = static_cast<double>(n_classes);
  // Inverse CDF over the row (beta/K, ..., 1 - beta + beta/K, ..., beta/K).
  double acc = 0.0;
  for (std::size_t j = 0; j < n_classes; ++j) {
    acc += beta / k + (static_cast<int>(j) == y ? 1.0 - beta : 0.0);
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(n_classes) - 1;
}

// Samples q(z_t | z_s) for s < t; with s = t - 1 this is the one-step kernel.
inline JointSample forward_jump(const JointSample& z_s, int s, int t, const NoiseSchedule& sched,
                                std::size_t n_classes, Rng& rng) {
  check_timestep(sched, t, 1, "forward_jump");
  require(s >= 0 && s < t, "forward_jump: require 0 <= s < t");
  const Retention g = gauss_retention(sched, t, s);
  const Retention c = cat_retention(sched, t, s);
  JointSample out;
  out.x.resize(z_s.x.size());
  const double keep = std::sqrt(g.alpha);
  const double sd = std::sqrt(std::max(g.beta, kVarianceFloor));
  for (Eigen::Index j = 0; j < z_s.x.size(); ++j) out.x(j) = keep * z_s.x(j) + sd * standard_normal(rng);
  out.y.resize(z_s.y.size());
  for (std::size_t i = 0; i < z_s.y.size(); ++i) out.y[i] = categorical_step(z_s.y[i], c.beta, n_classes, rng);
  return out;
}

// One forward step q(z_t | z_{t-1}).
inline JointSample q_step(const JointSample& z_prev, int t, const NoiseSchedule& sched, std::size_t n_classes,
                          Rng& rng) {
  check_timestep(sched, t, 1, "q_step");
  return forward_jump(z_prev, t - 1, t, sched, n_classes, rng);
}

// q(z_t | z_0): mean sqrt(abar) x0, variance 1 - abar,
// theta = abar_cat 1[y0] + (1 - abar_cat) / K.
inline FactorizedGCParams q_marginal_params(const JointSample& z0, int t, const NoiseSchedule& sched,
                                            std::size_t n_classes) {
  check_timestep(sched, t, 1, "q_marginal_params");
  const double ab = sched.alphabar_gauss(t);
  const double abc = sched.alphabar_cat(t);
  FactorizedGCParams p;
  p.mean = std::sqrt(ab) * z0.x;
  p.var = Eigen::VectorXd::Constant(z0.x.size(), std::max(1.0 - ab, kVarianceFloor));
  p.theta = RowMatrixXd::Constant(static_cast<Eigen::Index>(z0.y.size()), static_cast<Eigen::Index>(n_classes),
                                  (1.0 - abc) / static_cast<double>(n_classes));
  for (std::size_t i = 0; i < z0.y.size(); ++i) p.theta(static_cast<Eigen::Index>(i), z0.y[i]) += abc;
  return p;
}

// Gaussian posterior coefficients for the jump t -> s:
// mean = coef_x0 * x0 + coef_xt * x_t, variance = var.
struct GaussPosteriorCoefs {
  double coef_x0;
  double coef_xt;
  double var;
};

inline GaussPosteriorCoefs gauss_posterior_coefs(const NoiseSchedule& sched, int t, int s) {
  const Retention g = gauss_retention(sched, t, s);
  const double ab_t = sched.alphabar_gauss(t);
  const double ab_s = sched.alphabar_gauss(s);
  const double denom = 1.0 - ab_t;
  if (denom < kDenominatorFloor) {
    throw ValidationError("posterior: 1 - alphabar_t below floor at t=" + std::to_string(t));
  }
  return {std::sqrt(ab_s) * g.beta / denom, std::sqrt(g.alpha) * (1.0 - ab_s) / denom,
          (1.0 - ab_s) * g.beta / denom};
}

// Categorical posterior row i: normalize([a 1[y_t] + (1-a)/K] * [abar_s theta0 + (1-abar_s)/K]).
inline RowMatrixXd cat_posterior(const RowMatrixXd& theta0, const std::vector<int>& y_t, const NoiseSchedule& sched,
                                 int t, int s) {
  const Retention c = cat_retention(sched, t, s);
  const double ab_s = sched.alphabar_cat(s);
  const Eigen::Index k = theta0.cols();
  const double inv_k = 1.0 / static_cast<double>(k);
  RowMatrixXd out(theta0.rows(), k);
  for (Eigen::Index i = 0; i < theta0.rows(); ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double f1 = (1.0 - c.alpha) * inv_k + (j == y_t[static_cast<std::size_t>(i)] ? c.alpha : 0.0);
      const double f2 = ab_s * theta0(i, j) + (1.0 - ab_s) * inv_k;
      out(i, j) = f1 * f2;
    }
    const double z = out.row(i).sum();
    out.row(i) /= z;
  }
  return out;
}

// q(z_s | z_t, z0_hat) for 0 <= s < t. theta0 may be a one-hot matrix or a
// predicted PMF; either enters the y_0 slot linearly.
inline PosteriorParams posterior_between(const Eigen::VectorXd& x0, const RowMatrixXd& theta0, const JointSample& z_t,
                                         int t, int s, const NoiseSchedule& sched) {
  check_timestep(sched, t, 1, "posterior");
  require(s >= 0 && s < t, "posterior: require 0 <= s < t");
  require(x0.size() == z_t.x.size(), "posterior: image length mismatch");
  require(static_cast<std::size_t>(theta0.rows()) == z_t.y.size(), "posterior: layout length mismatch");
  const GaussPosteriorCoefs g = gauss_posterior_coefs(sched, t, s);
  PosteriorParams post;
  post.params.mean = g.coef_x0 * x0 + g.coef_xt * z_t.x;
  post.params.var = Eigen::VectorXd::Constant(x0.size(), std::max(g.var, kVarianceFloor));
  post.params.theta = cat_posterior(theta0, z_t.y, sched, t, s);
  return post;
}

// One-step posterior q(z_{t-1} | z_t, z0_hat), 2 <= t <= T.
inline PosteriorParams posterior_params(const Eigen::VectorXd& x0, const RowMatrixXd& theta0, const JointSample& z_t,
                                        int t, const NoiseSchedule& sched) {
  check_timestep(sched, t, 2, "posterior_params");
  return posterior_between(x0, theta0, z_t, t, t - 1, sched);
}

}  // namespace gcdiff
