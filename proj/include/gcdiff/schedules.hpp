#pragma once

// Paired Gaussian / categorical noise schedules.

#include "gcdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace gcdiff {

struct Accumulated {
  std::vector<double> alpha;
  std::vector<double> alphabar;
};

// alpha_t = 1 - beta_t and the running product of alpha.
inline Accumulated accumulate(const std::vector<double>& beta) {
  require(!beta.empty(), "accumulate: empty beta sequence");
  Accumulated out;
  out.alpha.reserve(beta.size());
  out.alphabar.reserve(beta.size());
  double running = 1.0;
  for (double b : beta) {
    require(b > 0.0 && b < 1.0, "accumulate: beta must lie in (0, 1)");
    const double a = 1.0 - b;
    running *= a;
    out.alpha.push_back(a);
    out.alphabar.push_back(running);
  }
  return out;
}

// Gaussian-side cosine schedule: alphabar(t) = f(t) / f(0),
// f(t) = cos^2(((t / T + s) / (1 + s)) * pi / 2), beta clipped at 0.999.
inline std::vector<double> cosine_betas(int total_steps, double offset = 0.008) {
  require(total_steps >= 1, "cosine_schedule: T must be at least 1");
  require(offset > 0.0 && offset < 0.1, "cosine_schedule: offset s must lie in (0, 0.1)");
  const auto f = [&](int t) {
    const double c = std::cos(((static_cast<double>(t) / total_steps + offset) / (1.0 + offset)) *
                              std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  std::vector<double> beta(static_cast<std::size_t>(total_steps));
  double prev = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    const double ab = f(t) / f0;
    beta[static_cast<std::size_t>(t - 1)] = std::min(1.0 - ab / prev, kBetaClip);
    prev = ab;
  }
  return beta;
}

// beta_cat = beta_gauss^p, clipped into (0, 0.999].
inline std::vector<double> power_coupled(const std::vector<double>& beta_gauss, double p) {
  require(p > 0.0 && std::isfinite(p), "power_coupled: p must be positive");
  std::vector<double> out;
  out.reserve(beta_gauss.size());
  for (double b : beta_gauss) {
    require(b > 0.0 && b < 1.0, "power_coupled: beta must lie in (0, 1)");
    double c = p == 1.0 ? b : std::pow(b, p);
    c = std::clamp(c, std::numeric_limits<double>::min(), kBetaClip);
    out.push_back(c);
  }
  return out;
}

// Immutable after construction. Timesteps are 1-based; index 0 holds the
// clean-data convention (beta 0, alpha 1, alphabar 1).
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> beta_gauss, std::vector<double> beta_cat) {
    require(!beta_gauss.empty(), "NoiseSchedule: empty schedule");
    require(beta_gauss.size() == beta_cat.size(), "NoiseSchedule: chain length mismatch");
    gauss_ = build(beta_gauss);
    cat_ = build(beta_cat);
  }

  int total_steps() const { return static_cast<int>(gauss_.beta.size()) - 1; }

  double beta_gauss(int t) const { return gauss_.beta[checked(t)]; }
  double alpha_gauss(int t) const { return gauss_.alpha[checked(t)]; }
  double alphabar_gauss(int t) const { return gauss_.alphabar[checked(t)]; }
  double beta_cat(int t) const { return cat_.beta[checked(t)]; }
  double alpha_cat(int t) const { return cat_.alpha[checked(t)]; }
  double alphabar_cat(int t) const { return cat_.alphabar[checked(t)]; }

  // Raw per-step betas (length T), as accepted by the constructor.
  std::vector<double> betas_gauss() const { return {gauss_.beta.begin() + 1, gauss_.beta.end()}; }
  std::vector<double> betas_cat() const { return {cat_.beta.begin() + 1, cat_.beta.end()}; }

  // Final state close to pure noise on both chains.
  bool reaches_noise(double tolerance = 1e-3) const {
    return gauss_.alphabar.back() < tolerance && cat_.alphabar.back() < tolerance;
  }

 private:
  struct Chain {
    std::vector<double> beta, alpha, alphabar;
  };

  static Chain build(const std::vector<double>& beta) {
    const Accumulated acc = accumulate(beta);
    Chain c;
    c.beta.push_back(0.0);
    c.alpha.push_back(1.0);
    c.alphabar.push_back(1.0);
    c.beta.insert(c.beta.end(), beta.begin(), beta.end());
    c.alpha.insert(c.alpha.end(), acc.alpha.begin(), acc.alpha.end());
    c.alphabar.insert(c.alphabar.end(), acc.alphabar.begin(), acc.alphabar.end());
    for (std::size_t t = 1; t < c.alphabar.size(); ++t) {
      require(c.alphabar[t] > 0.0 && c.alphabar[t] < c.alphabar[t - 1],
              "NoiseSchedule: alphabar must be positive and strictly decreasing");
    }
    return c;
  }

  std::size_t checked(int t) const {
    if (t < 0 || t > total_steps()) throw ValidationError("NoiseSchedule: timestep out of range");
    return static_cast<std::size_t>(t);
  }

  Chain gauss_;
  Chain cat_;
};

// Cosine Gaussian chain with the categorical chain coupled as beta^p.
// Only the Gaussian chain is required to end below 1e-3: with the 0.999 clip,
// p = 3 leaves the categorical chain at about 1.1e-3.
inline NoiseSchedule make_cosine_schedule(int total_steps, double p = 1.0, double offset = 0.008) {
  std::vector<double> gauss = cosine_betas(total_steps, offset);
  std::vector<double> cat = power_coupled(gauss, p);
  NoiseSchedule sched(std::move(gauss), std::move(cat));
  require(sched.alphabar_gauss(sched.total_steps()) < 1e-3,
          "cosine schedule: final Gaussian alphabar not below 1e-3");
  return sched;
}

}  // namespace gcdiff
