#pragma once

// Independent reference computations used by `gcdiff verify` and the test
// suites. Nothing here is called by the library itself. Each oracle derives
// its answer by a different route than the production code: explicit
// transition matrices built from raw betas, brute-force Bayes enumeration,
// completing the square, quadrature, finite differences.

#include "gcdiff/diffusion_process.hpp"
#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/metrics.hpp"
#include "gcdiff/schedules.hpp"
#include "gcdiff/training.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace gcdiff::oracle {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed error (meaning depends on the check)
  double tolerance = 0.0;
  std::size_t cases = 0;
  std::string note;

  std::string line() const {
    std::ostringstream o;
    o << (passed ? "PASS " : "FAIL ") << name << " cases=" << cases << " worst=" << worst << " tol=" << tolerance;
    if (!note.empty()) o << " " << note;
    return o.str();
  }
};

// One-step categorical transition matrix Q[from][to] = (1-b) 1[from=to] + b/K.
inline Eigen::MatrixXd transition_matrix(double beta, int k) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(k, k, beta / k);
  q.diagonal().array() += 1.0 - beta;
  return q;
}

// Product Q_1 Q_2 ... Q_t built from raw betas (row vector convention).
inline Eigen::MatrixXd transition_product(const std::vector<double>& betas, int from, int to, int k) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(k, k);
  for (int t = from + 1; t <= to; ++t) p = p * transition_matrix(betas[static_cast<std::size_t>(t - 1)], k);
  return p;
}

inline double product_alphabar(const std::vector<double>& betas, int t) {
  double a = 1.0;
  for (int s = 1; s <= t; ++s) a *= 1.0 - betas[static_cast<std::size_t>(s - 1)];
  return a;
}

// q(y_s = j | y_t, y_0) by enumerating j and applying Bayes with explicit
// transition matrices between 0 -> s -> t.
inline Eigen::VectorXd bayes_categorical(const std::vector<double>& betas, int t, int s, int y_t, int y_0, int k) {
  const Eigen::MatrixXd to_s = transition_product(betas, 0, s, k);
  const Eigen::MatrixXd s_to_t = transition_product(betas, s, t, k);
  Eigen::VectorXd post(k);
  for (int j = 0; j < k; ++j) post(j) = s_to_t(j, y_t) * to_s(y_0, j);
  return post / post.sum();
}

struct GaussPost {
  double mean;
  double var;
};

// Completing the square in q(x_t | x_s) q(x_s | x_0).
inline GaussPost conjugate_gaussian(const std::vector<double>& betas, int t, int s, double x_t, double x_0) {
  const double ab_s = product_alphabar(betas, s);
  double a_ts = 1.0;
  for (int r = s + 1; r <= t; ++r) a_ts *= 1.0 - betas[static_cast<std::size_t>(r - 1)];
  // prior on x_s: N(sqrt(ab_s) x_0, 1 - ab_s); likelihood: x_t ~ N(sqrt(a_ts) x_s, 1 - a_ts)
  const double prec = 1.0 / (1.0 - ab_s) + a_ts / (1.0 - a_ts);
  const double lin = std::sqrt(ab_s) * x_0 / (1.0 - ab_s) + std::sqrt(a_ts) * x_t / (1.0 - a_ts);
  return {lin / prec, 1.0 / prec};
}

inline std::vector<double> random_betas(int big_t, Rng& rng, double lo = 1e-3, double hi = 0.3) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  std::vector<double> b(static_cast<std::size_t>(big_t));
  for (double& v : b) v = std::exp(u(rng));
  return b;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Posterior of the process vs brute-force Bayes (categorical) and completing
// the square (Gaussian) on random schedules and states.
inline CheckResult check_posterior(std::size_t cases, std::uint64_t seed, double tol = 1e-10) {
  CheckResult r{"posterior_bayes", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int big_t = std::uniform_int_distribution<int>(2, 30)(rng);
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const std::vector<double> bg = random_betas(big_t, rng);
    const std::vector<double> bc = random_betas(big_t, rng);
    const NoiseSchedule sched(bg, bc);
    const int t = std::uniform_int_distribution<int>(2, big_t)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const int yt = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const double x0 = 2.0 * uniform01(rng) - 1.0;
    const double xt = 3.0 * standard_normal(rng);
    const JointSample z_t{Eigen::VectorXd::Constant(1, xt), {yt}};
    RowMatrixXd onehot = RowMatrixXd::Zero(1, k);
    onehot(0, y0) = 1.0;
    const PosteriorParams p = posterior_params(Eigen::VectorXd::Constant(1, x0), onehot, z_t, t, sched);
    const Eigen::VectorXd ref = bayes_categorical(bc, t, t - 1, yt, y0, k);
    for (int j = 0; j < k; ++j) r.worst = std::max(r.worst, std::abs(p.params.theta(0, j) - ref(j)));
    const GaussPost g = conjugate_gaussian(bg, t, t - 1, xt, x0);
    r.worst = std::max(r.worst, rel_err(p.params.mean(0), g.mean));
    r.worst = std::max(r.worst, rel_err(p.params.var(0), g.var));
  }
  r.passed = r.worst <= tol;
  return r;
}

// Strided posterior q(z_s | z_t, z_0) for arbitrary s < t against the same oracles.
inline CheckResult check_strided_posterior(std::size_t cases, std::uint64_t seed, double tol = 1e-10) {
  CheckResult r{"strided_posterior_bayes", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int big_t = std::uniform_int_distribution<int>(3, 30)(rng);
    const int k = std::uniform_int_distribution<int>(2, 4)(rng);
    const std::vector<double> bg = random_betas(big_t, rng);
    const std::vector<double> bc = random_betas(big_t, rng);
    const NoiseSchedule sched(bg, bc);
    const int t = std::uniform_int_distribution<int>(2, big_t)(rng);
    const int s = std::uniform_int_distribution<int>(1, t - 1)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const int yt = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const double x0 = 2.0 * uniform01(rng) - 1.0;
    const double xt = 2.0 * standard_normal(rng);
    RowMatrixXd onehot = RowMatrixXd::Zero(1, k);
    onehot(0, y0) = 1.0;
    const PosteriorParams p = posterior_between(Eigen::VectorXd::Constant(1, x0), onehot,
                                                JointSample{Eigen::VectorXd::Constant(1, xt), {yt}}, t, s, sched);
    const Eigen::VectorXd ref = bayes_categorical(bc, t, s, yt, y0, k);
    for (int j = 0; j < k; ++j) r.worst = std::max(r.worst, std::abs(p.params.theta(0, j) - ref(j)));
    const GaussPost g = conjugate_gaussian(bg, t, s, xt, x0);
    r.worst = std::max(r.worst, rel_err(p.params.mean(0), g.mean));
    r.worst = std::max(r.worst, rel_err(p.params.var(0), g.var));
  }
  r.passed = r.worst <= tol;
  return r;
}

// t-step transition product applied to 1[y_0] vs the closed-form marginal.
inline CheckResult check_categorical_marginal(std::size_t cases, std::uint64_t seed, double tol = 1e-12) {
  CheckResult r{"categorical_marginal_product", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int big_t = std::uniform_int_distribution<int>(1, 10)(rng);
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const std::vector<double> bg = random_betas(big_t, rng);
    const std::vector<double> bc = random_betas(big_t, rng);
    const NoiseSchedule sched(bg, bc);
    const int t = std::uniform_int_distribution<int>(1, big_t)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, k - 1)(rng);
    const Eigen::MatrixXd prod = transition_product(bc, 0, t, k);
    const FactorizedGCParams q =
        q_marginal_params(JointSample{Eigen::VectorXd::Zero(1), {y0}}, t, sched, static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) r.worst = std::max(r.worst, std::abs(prod(y0, j) - q.theta(0, j)));
  }
  r.passed = r.worst <= tol;
  return r;
}

// Two-step stride: the kernel used for the jump s -> t equals the product of
// the skipped one-step matrices.
inline CheckResult check_stride_kernel(std::size_t cases, std::uint64_t seed, double tol = 1e-10) {
  CheckResult r{"stride_transition_product", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int big_t = std::uniform_int_distribution<int>(3, 40)(rng);
    const int k = std::uniform_int_distribution<int>(2, 4)(rng);
    const std::vector<double> bc = random_betas(big_t, rng);
    const NoiseSchedule sched(bc, bc);
    const int t = std::uniform_int_distribution<int>(2, big_t)(rng);
    const int s = std::uniform_int_distribution<int>(0, t - 1)(rng);
    const Retention ret = cat_retention(sched, t, s);
    const Eigen::MatrixXd composed = transition_matrix(ret.beta, k);
    const Eigen::MatrixXd prod = transition_product(bc, s, t, k);
    r.worst = std::max(r.worst, (composed - prod).cwiseAbs().maxCoeff());
  }
  r.passed = r.worst <= tol;
  return r;
}

// Monte-Carlo: run q_step chains 1..t and compare the Gaussian moments with
// q_marginal_params (3 sigma on mean and variance), and label frequencies
// with the closed form (3 sigma binomial).
inline CheckResult check_chain_montecarlo(std::size_t chains, std::uint64_t seed) {
  CheckResult r{"chain_montecarlo", true, 0.0, 3.0, chains, "worst in standard errors"};
  const int k = 3, big_t = 5;
  const NoiseSchedule sched(std::vector<double>{0.05, 0.1, 0.2, 0.15, 0.3}, std::vector<double>{0.1, 0.2, 0.05, 0.3, 0.1});
  const JointSample z0{Eigen::VectorXd::Constant(1, 0.7), {1}};
  const FactorizedGCParams q = q_marginal_params(z0, big_t, sched, k);
  double sum = 0.0, sum2 = 0.0;
  std::vector<double> freq(k, 0.0);
  for (std::size_t c = 0; c < chains; ++c) {
    Rng rng(derive_seed(seed, c));
    JointSample z = z0;
    for (int t = 1; t <= big_t; ++t) z = q_step(z, t, sched, k, rng);
    sum += z.x(0);
    sum2 += z.x(0) * z.x(0);
    freq[static_cast<std::size_t>(z.y[0])] += 1.0;
  }
  const double n = static_cast<double>(chains);
  const double mean = sum / n;
  const double var = (sum2 - n * mean * mean) / (n - 1.0);
  const double mu = q.mean(0), v = q.var(0);
  r.worst = std::max(r.worst, std::abs(mean - mu) / std::sqrt(v / n));
  // variance of the sample variance for a Gaussian: 2 v^2 / (n - 1)
  r.worst = std::max(r.worst, std::abs(var - v) / std::sqrt(2.0 * v * v / (n - 1.0)));
  for (int j = 0; j < k; ++j) {
    const double p = q.theta(0, j);
    r.worst = std::max(r.worst, std::abs(freq[static_cast<std::size_t>(j)] / n - p) / std::sqrt(p * (1.0 - p) / n));
  }
  r.passed = r.worst <= 3.0;
  return r;
}

// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 4000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline FactorizedGCParams random_gc_1d(int k, Rng& rng) {
  FactorizedGCParams p;
  p.mean = Eigen::VectorXd::Constant(1, 2.0 * standard_normal(rng));
  p.var = Eigen::VectorXd::Constant(1, std::exp(std::uniform_real_distribution<double>(-2.0, 1.5)(rng)));
  p.theta.resize(1, k);
  for (int j = 0; j < k; ++j) p.theta(0, j) = 0.05 + uniform01(rng);
  p.theta /= p.theta.sum();
  return p;
}

// Joint log density log p(x, y) of a one-coordinate, one-position
// distribution, written out directly.
inline double joint_log_density_1d(const FactorizedGCParams& p, double x, int y) {
  const double d = x - p.mean(0);
  return std::log(p.theta(0, y)) - 0.5 * d * d / p.var(0) - 0.5 * std::log(2.0 * std::numbers::pi * p.var(0));
}

// KL(p || q) for N = M = 1 by K-term sum of quadrature integrals of p log(p/q)
// over the joint density, with no use of the decomposition.
inline double brute_kl_1d(const FactorizedGCParams& p, const FactorizedGCParams& q) {
  const double sd = std::sqrt(p.var(0));
  double kl = 0.0;
  for (int y = 0; y < p.theta.cols(); ++y) {
    kl += simpson(
        [&](double x) {
          const double la = joint_log_density_1d(p, x, y);
          return std::exp(la) * (la - joint_log_density_1d(q, x, y));
        },
        p.mean(0) - 16.0 * sd, p.mean(0) + 16.0 * sd, 20000);
  }
  return kl;
}

inline CheckResult check_kl_decomposition(std::size_t cases, std::uint64_t seed, double tol = 1e-5) {
  CheckResult r{"kl_decomposition_quadrature", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int k = std::uniform_int_distribution<int>(2, 4)(rng);
    const FactorizedGCParams p = random_gc_1d(k, rng);
    const FactorizedGCParams q = random_gc_1d(k, rng);
    r.worst = std::max(r.worst, std::abs(kl_divergence(p, q) - brute_kl_1d(p, q)));
  }
  r.passed = r.worst <= tol;
  return r;
}

// exp(log_pdf) integrates to one over x and sums to one over y.
inline CheckResult check_pdf_normalization(std::size_t cases, std::uint64_t seed, double tol = 1e-6) {
  CheckResult r{"pdf_normalization", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const int k = std::uniform_int_distribution<int>(2, 4)(rng);
    const FactorizedGCParams p = random_gc_1d(k, rng);
    const double sd = std::sqrt(p.var(0));
    double total = 0.0;
    for (int y = 0; y < k; ++y) {
      total += simpson(
          [&](double x) { return std::exp(log_pdf(p, JointSample{Eigen::VectorXd::Constant(1, x), {y}})); },
          p.mean(0) - 14.0 * sd, p.mean(0) + 14.0 * sd, 4000);
    }
    r.worst = std::max(r.worst, std::abs(total - 1.0));
  }
  r.passed = r.worst <= tol;
  return r;
}

// Small architecture (under 500 parameters) for gradient checks.
inline ArchConfig gradcheck_arch(int total_steps) {
  ArchConfig a;
  a.shape = {2, 1, 2};
  a.total_steps = total_steps;
  a.cond_count = 2;
  a.label_embed = 3;
  a.cond_embed = 2;
  a.time_embed = 4;
  a.hidden = 8;
  a.blocks = 1;
  return a;
}

// Error measure for one coordinate: relative with an absolute floor so that
// gradients at the finite-difference noise level are not divided by ~0.
inline double gradient_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Analytic vs central-difference gradients of the batch loss at random
// parameter points. Every coordinate of every point is compared.
inline CheckResult check_gradients(std::size_t points, std::uint64_t seed, LossMode mode = LossMode::vlb,
                                   double tol = 1e-4, double h = 1e-5) {
  CheckResult r{mode == LossMode::vlb ? "gradient_fd_vlb" : "gradient_fd_simple", true, 0.0, tol, points, ""};
  const int big_t = 20;
  const NoiseSchedule sched = make_cosine_schedule(big_t);
  const ArchConfig arch = gradcheck_arch(big_t);
  LossOptions opts{mode, 0.7};
  Rng rng(seed);
  std::size_t coords = 0;
  for (std::size_t pt = 0; pt < points; ++pt) {
    ReferenceDenoiser<double> model(arch);
    for (double& w : model.parameters()) w = 0.5 * standard_normal(rng);
    std::vector<TrainItem> batch(4);
    std::vector<int> ts(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      batch[b].z0 = JointSample{Eigen::Vector2d(2.0 * uniform01(rng) - 1.0, 2.0 * uniform01(rng) - 1.0),
                                {std::uniform_int_distribution<int>(0, 1)(rng)}};
      batch[b].cond = std::uniform_int_distribution<int>(0, 1)(rng);
      batch[b].cond_dropped = b == 3;
      // cover the decoder term and the KL terms
      ts[b] = b == 0 ? 1 : std::uniform_int_distribution<int>(2, big_t)(rng);
    }
    const std::uint64_t noise_seed = rng();
    const auto eval = [&](bool grad) {
      Rng nr(noise_seed);
      LossResult<double> res = vlb_loss<double>(batch, model, sched, nr, opts, ts);
      if (!grad) res.grad.clear();
      return res;
    };
    const LossResult<double> base = eval(true);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = eval(false).loss;
      params[i] = keep - h;
      const double down = eval(false).loss;
      params[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double floor = 1e-4 * std::max(1.0, std::abs(base.loss));
      r.worst = std::max(r.worst, gradient_error(base.grad[i], numeric, floor));
      ++coords;
    }
  }
  r.note = "coordinates=" + std::to_string(coords);
  r.passed = r.worst < tol;
  return r;
}

// Tr((S1 S2)^{1/2}) for 2 x 2 PSD matrices in closed form: the eigenvalues of
// S1 S2 are real and nonnegative, so the trace of the root is
// sqrt(tr + 2 sqrt(det)).
inline double frechet_2x2(const Eigen::Vector2d& mu1, const Eigen::Matrix2d& s1, const Eigen::Vector2d& mu2,
                          const Eigen::Matrix2d& s2) {
  const Eigen::Matrix2d prod = s1 * s2;
  const double det = std::max(prod.determinant(), 0.0);
  const double tr_root = std::sqrt(std::max(prod.trace() + 2.0 * std::sqrt(det), 0.0));
  return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_root;
}

inline CheckResult check_fsd_closed_form(std::size_t cases, std::uint64_t seed, double tol = 1e-8) {
  CheckResult r{"fsd_2x2_closed_form", true, 0.0, tol, cases, ""};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    Eigen::Matrix2d a, b;
    for (Eigen::Matrix2d* m : {&a, &b}) {
      Eigen::Matrix2d l;
      l << 1.0 + 3.0 * uniform01(rng), 0.0, standard_normal(rng), 0.5 + 2.0 * uniform01(rng);
      *m = l * l.transpose();
    }
    const Eigen::Vector2d m1(10.0 * uniform01(rng), 10.0 * uniform01(rng));
    const Eigen::Vector2d m2(10.0 * uniform01(rng), 10.0 * uniform01(rng));
    r.worst = std::max(r.worst, std::abs(frechet_distance(m1, a, m2, b) - frechet_2x2(m1, a, m2, b)));
  }
  r.passed = r.worst <= tol;
  return r;
}

inline std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {check_posterior(1000, derive_seed(seed, 1)),
          check_strided_posterior(500, derive_seed(seed, 2)),
          check_categorical_marginal(500, derive_seed(seed, 3)),
          check_stride_kernel(500, derive_seed(seed, 4)),
          check_chain_montecarlo(100000, derive_seed(seed, 5)),
          check_kl_decomposition(200, derive_seed(seed, 6)),
          check_pdf_normalization(50, derive_seed(seed, 7)),
          check_gradients(100, derive_seed(seed, 8), LossMode::vlb),
          check_gradients(20, derive_seed(seed, 9), LossMode::simple),
          check_fsd_closed_form(200, derive_seed(seed, 10))};
}

}  // namespace gcdiff::oracle
