#pragma once

// Factorized Gaussian-categorical distributions.
//
// The Gaussian part is shared by every categorical state, so a distribution
// over (x in R^N, y in {0..K-1}^M) is stored as one diagonal Gaussian plus an
// M x K row-stochastic matrix. The K^M-state mixture form is never built.

#include "gcdiff/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace gcdiff {

struct FactorizedGCParams {
  Eigen::VectorXd mean;  // length N
  Eigen::VectorXd var;   // length N, diagonal covariance
  RowMatrixXd theta;     // M x K, rows are PMFs

  ShapeSpec shape() const {
    return {static_cast<std::size_t>(mean.size()), static_cast<std::size_t>(theta.rows()),
            static_cast<std::size_t>(theta.cols())};
  }

  // Floors the variance and renormalizes PMF rows that drifted by at most
  // 1e-6; anything further off is rejected.
  void normalize() {
    require(mean.size() == var.size(), "FactorizedGCParams: mean/var length mismatch");
    require(mean.allFinite() && var.allFinite() && theta.allFinite(),
            "FactorizedGCParams: non-finite parameter");
    for (Eigen::Index j = 0; j < var.size(); ++j) {
      require(var(j) >= 0.0, "FactorizedGCParams: negative variance");
      var(j) = std::max(var(j), kVarianceFloor);
    }
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      require((theta.row(i).array() >= 0.0).all(), "FactorizedGCParams: negative probability");
      const double s = theta.row(i).sum();
      require(std::abs(s - 1.0) <= kPmfRenormTolerance, "FactorizedGCParams: PMF row does not sum to 1");
      theta.row(i) /= s;
    }
  }
};

inline FactorizedGCParams make_gc_params(Eigen::VectorXd mean, Eigen::VectorXd var, RowMatrixXd theta) {
  FactorizedGCParams p{std::move(mean), std::move(var), std::move(theta)};
  p.normalize();
  return p;
}

inline double gaussian_log_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

// sum_i log theta[i, y_i] + sum_j log N(x_j; mean_j, var_j). -inf when a label
// hits a zero-probability class.
inline double log_pdf(const FactorizedGCParams& params, const JointSample& z) {
  const ShapeSpec shape = params.shape();
  z.validate(shape);
  require(params.mean.allFinite() && params.var.allFinite(), "log_pdf: non-finite parameters");
  double lp = 0.0;
  for (std::size_t i = 0; i < shape.n_cat; ++i) {
    const double p = params.theta(static_cast<Eigen::Index>(i), z.y[i]);
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    lp += std::log(p);
  }
  for (Eigen::Index j = 0; j < params.mean.size(); ++j) {
    lp += gaussian_log_pdf(z.x(j), params.mean(j), std::max(params.var(j), kVarianceFloor));
  }
  return lp;
}

// Draws x then y, in coordinate order. The draw order is part of the
// sampler's shared-noise-stream contract.
inline JointSample sample(const FactorizedGCParams& params, Rng& rng) {
  JointSample z;
  z.x.resize(params.mean.size());
  for (Eigen::Index j = 0; j < params.mean.size(); ++j) {
    z.x(j) = params.mean(j) + std::sqrt(std::max(params.var(j), kVarianceFloor)) * standard_normal(rng);
  }
  z.y.resize(static_cast<std::size_t>(params.theta.rows()));
  for (Eigen::Index i = 0; i < params.theta.rows(); ++i) {
    z.y[static_cast<std::size_t>(i)] = sample_categorical(params.theta.row(i), rng);
  }
  return z;
}

inline double gaussian_kl(double mean_p, double var_p, double mean_q, double var_q) {
  var_p = std::max(var_p, kVarianceFloor);
  var_q = std::max(var_q, kVarianceFloor);
  const double d = mean_p - mean_q;
  return 0.5 * (std::log(var_q / var_p) + (var_p + d * d) / var_q - 1.0);
}

template <typename RowP, typename RowQ>
double categorical_kl(const RowP& p, const RowQ& q) {
  double kl = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p(k) <= 0.0) continue;
    if (q(k) <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p(k) * (std::log(p(k)) - std::log(q(k)));
  }
  return std::max(kl, 0.0);
}

// KL(p || q) = Gaussian KL + categorical KL, both summed over coordinates.
inline double kl_divergence(const FactorizedGCParams& p, const FactorizedGCParams& q) {
  require(p.shape() == q.shape(), "kl_divergence: shape mismatch");
  double kl = 0.0;
  for (Eigen::Index j = 0; j < p.mean.size(); ++j) {
    kl += gaussian_kl(p.mean(j), p.var(j), q.mean(j), q.var(j));
  }
  for (Eigen::Index i = 0; i < p.theta.rows(); ++i) {
    kl += categorical_kl(p.theta.row(i), q.theta.row(i));
  }
  return kl;
}

inline double entropy(const FactorizedGCParams& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.var.size(); ++j) {
    h += 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * std::max(p.var(j), kVarianceFloor));
  }
  for (Eigen::Index i = 0; i < p.theta.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.theta.cols(); ++k) {
      const double v = p.theta(i, k);
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  return h;
}

}  // namespace gcdiff
