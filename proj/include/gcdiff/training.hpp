#pragma once

// VLB loss with exact gradients, Adam, and the deterministic training loop.

#include "gcdiff/core.hpp"
#include "gcdiff/denoiser.hpp"
#include "gcdiff/diffusion_process.hpp"
#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/schedules.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <ranges>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gcdiff {

struct ConditionedSample {
  JointSample z;
  int cond = 0;
};

enum class LossMode { vlb, simple };

struct LossOptions {
  LossMode mode = LossMode::vlb;
  double lambda_cat = 1.0;
};

struct TrainItem {
  JointSample z0;
  int cond = 0;
  bool cond_dropped = false;
};

// Per-item loss term for one sampled timestep.
struct TermValue {
  int t = 0;
  double gauss = 0.0;
  double cat = 0.0;  // already multiplied by lambda_cat
  double total() const { return gauss + cat; }
};

namespace detail {

// log Q(z), Q the standard normal upper tail; asymptotic series past z = 30.
inline double log_upper_tail(double z) {
  if (z == std::numeric_limits<double>::infinity()) return -std::numeric_limits<double>::infinity();
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  const double z2 = z * z;
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(-1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2));
}

// log(Phi(hi) - Phi(lo)) for lo < hi, either end possibly infinite.
inline double log_normal_interval(double lo, double hi) {
  if (lo >= 0.0) {
    const double a = log_upper_tail(lo);
    const double b = log_upper_tail(hi);
    return a + std::log1p(-std::exp(b - a));
  }
  if (hi <= 0.0) return log_normal_interval(-hi, -lo);
  const double tails = std::exp(log_upper_tail(-lo)) + std::exp(log_upper_tail(hi));
  return std::log1p(-tails);
}

inline double log_normal_density(double z) {
  if (!std::isfinite(z)) return -std::numeric_limits<double>::infinity();
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

// log of the mass N(mean, sd^2) puts on the 8-bit bin containing x in
// [-1, 1] (256 uniform bins, outermost bins open-ended), and its derivative
// with respect to the mean.
struct DiscretizedLogLik {
  double value;
  double d_mean;
};

inline DiscretizedLogLik discretized_gaussian_loglik(double x, double mean, double sd) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const double clipped = std::clamp(x, -1.0, 1.0);
  const int bin = static_cast<int>(std::lround((clipped + 1.0) * 127.5));
  const double center = -1.0 + bin / 127.5;
  const double lo = bin == 0 ? -kInf : (center - 1.0 / 255.0 - mean) / sd;
  const double hi = bin == 255 ? kInf : (center + 1.0 / 255.0 - mean) / sd;
  const double lp = detail::log_normal_interval(lo, hi);
  const double d = (std::exp(detail::log_normal_density(lo) - lp) - std::exp(detail::log_normal_density(hi) - lp)) / sd;
  return {lp, d};
}

struct TermGrad {
  TermValue value;
  Eigen::VectorXd d_x0;
  RowMatrixXd d_logits;
};

// KL(target_i || model_i) summed over rows, where the model row is
// normalize(f1 * (keep * softmax(logits) + (1 - keep) / K)) and
// f1 = retain 1[y_t] + (1 - retain) / K. A one-hot target gives -log model[y].
inline double categorical_posterior_kl(const RowMatrixXd& target, const RowMatrixXd& logits, const std::vector<int>& y_t,
                                       double retain, double keep, RowMatrixXd* d_logits) {
  const Eigen::Index k = logits.cols();
  const double inv_k = 1.0 / static_cast<double>(k);
  const RowMatrixXd p = softmax_rows(logits);
  double total = 0.0;
  if (d_logits != nullptr) d_logits->setZero(logits.rows(), k);
  Eigen::VectorXd f1(k), g(k), dp(k);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double u_sum = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      f1(j) = (1.0 - retain) * inv_k + (j == y_t[static_cast<std::size_t>(i)] ? retain : 0.0);
      g(j) = keep * p(i, j) + (1.0 - keep) * inv_k;
      u_sum += f1(j) * g(j);
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      const double tj = target(i, j);
      if (tj <= 0.0) continue;
      const double qj = f1(j) * g(j) / u_sum;
      total += tj * (std::log(tj) - std::log(qj));
    }
    if (d_logits != nullptr) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const double dg = (g(j) > 0.0 ? -target(i, j) / g(j) : 0.0) + f1(j) / u_sum;
        dp(j) = keep * dg;
      }
      const double inner = p.row(i).dot(dp);
      for (Eigen::Index j = 0; j < k; ++j) (*d_logits)(i, j) = p(i, j) * (dp(j) - inner);
    }
  }
  return total;
}

// Loss term and head gradients for one item given network predictions.
inline TermGrad item_term(const Eigen::VectorXd& x0_hat, const RowMatrixXd& logits, const JointSample& z0,
                          const JointSample& z_t, int t, const NoiseSchedule& sched, const LossOptions& opts,
                          bool want_grad) {
  TermGrad out;
  out.value.t = t;
  const auto n_classes = static_cast<std::size_t>(logits.cols());
  if (want_grad) out.d_x0.setZero(x0_hat.size());
  RowMatrixXd d_logits;
  RowMatrixXd* dl = want_grad ? &d_logits : nullptr;

  if (opts.mode == LossMode::simple) {
    const Eigen::VectorXd diff = x0_hat - z0.x;
    out.value.gauss = diff.squaredNorm();
    if (want_grad) out.d_x0 = 2.0 * diff;
    const RowMatrixXd target = z0.one_hot(n_classes);
    // keep = 1, retain = 0: plain cross-entropy against softmax(logits).
    out.value.cat = categorical_posterior_kl(target, logits, z_t.y, 0.0, 1.0, dl);
  } else if (t >= 2) {
    const GaussPosteriorCoefs g = gauss_posterior_coefs(sched, t, t - 1);
    const double w = g.coef_x0 * g.coef_x0 / (2.0 * std::max(g.var, kVarianceFloor));
    const Eigen::VectorXd diff = x0_hat - z0.x;
    out.value.gauss = w * diff.squaredNorm();
    if (want_grad) out.d_x0 = 2.0 * w * diff;
    const RowMatrixXd target = cat_posterior(z0.one_hot(n_classes), z_t.y, sched, t, t - 1);
    out.value.cat = categorical_posterior_kl(target, logits, z_t.y, sched.alpha_cat(t), sched.alphabar_cat(t - 1), dl);
  } else {
    // Decoder term -log p(z_0 | z_1): discretized Gaussian around x0_hat with
    // variance beta_1, and the model posterior at s = 0 evaluated at y_0.
    const double sd = std::sqrt(std::max(sched.beta_gauss(1), kVarianceFloor));
    for (Eigen::Index j = 0; j < x0_hat.size(); ++j) {
      const DiscretizedLogLik ll = discretized_gaussian_loglik(z0.x(j), x0_hat(j), sd);
      out.value.gauss -= ll.value;
      if (want_grad) out.d_x0(j) = -ll.d_mean;
    }
    out.value.cat = categorical_posterior_kl(z0.one_hot(n_classes), logits, z_t.y, sched.alpha_cat(1), 1.0, dl);
  }
  out.value.cat *= opts.lambda_cat;
  if (want_grad) out.d_logits = opts.lambda_cat * d_logits;
  return out;
}

// L_T = KL(q(z_T | z_0) || N(0, I) x Uniform(K)^M); parameter-free.
inline double prior_term(const JointSample& z0, const NoiseSchedule& sched, std::size_t n_classes) {
  const int big_t = sched.total_steps();
  const FactorizedGCParams q = q_marginal_params(z0, big_t, sched, n_classes);
  FactorizedGCParams prior;
  prior.mean = Eigen::VectorXd::Zero(q.mean.size());
  prior.var = Eigen::VectorXd::Ones(q.var.size());
  prior.theta = RowMatrixXd::Constant(q.theta.rows(), q.theta.cols(), 1.0 / static_cast<double>(n_classes));
  return kl_divergence(q, prior);
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  AlignedVector<Scalar> grad;
  std::vector<TermValue> terms;
};

// Mean per-item loss over the batch with exact parameter gradients. Each item
// draws t uniformly from [1, T] (unless `timesteps` pins them) and then
// z_t ~ q(z_t | z_0); the draws come from `rng` in item order.
template <typename Scalar>
LossResult<Scalar> vlb_loss(std::span<const TrainItem> batch, const ReferenceDenoiser<Scalar>& model,
                            const NoiseSchedule& sched, Rng& rng, const LossOptions& opts = {},
                            std::span<const int> timesteps = {}) {
  require(!batch.empty(), "vlb_loss: empty batch");
  require(timesteps.empty() || timesteps.size() == batch.size(), "vlb_loss: timestep override length mismatch");
  const ShapeSpec shape = model.shape();
  const int big_t = sched.total_steps();
  std::uniform_int_distribution<int> pick_t(1, big_t);

  std::vector<DenoiserInput> inputs(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainItem& item = batch[b];
    item.z0.validate(shape);
    const int t = timesteps.empty() ? pick_t(rng) : timesteps[b];
    check_timestep(sched, t, 1, "vlb_loss");
    const JointSample z_t = sample(q_marginal_params(item.z0, t, sched, shape.n_classes), rng);
    inputs[b] = DenoiserInput{z_t.x, z_t.y, t, item.cond, item.cond_dropped};
  }

  const auto cache = model.forward(inputs);
  const auto outputs = model.unpack(cache);
  using Matrix = typename ReferenceDenoiser<Scalar>::Matrix;
  const auto n = static_cast<Eigen::Index>(shape.n_gauss);
  const auto m = static_cast<Eigen::Index>(shape.n_cat);
  const auto k = static_cast<Eigen::Index>(shape.n_classes);
  const auto bsz = static_cast<Eigen::Index>(batch.size());
  Matrix d_x0(n, bsz), d_logits(m * k, bsz);
  LossResult<Scalar> result;
  result.terms.reserve(batch.size());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const DenoiserInput& in = inputs[b];
    const JointSample z_t{in.x_t, in.y_t};
    const TermGrad tg = item_term(outputs[b].x0_hat, outputs[b].theta0_logits, batch[b].z0, z_t, in.t, sched, opts, true);
    if (!std::isfinite(tg.value.total())) {
      std::ostringstream msg;
      msg << "vlb_loss: non-finite loss at item " << b << " (t=" << in.t << ", gauss=" << tg.value.gauss
          << ", cat=" << tg.value.cat << ")";
      throw NumericalError(msg.str());
    }
    result.loss += scale * tg.value.total();
    result.terms.push_back(tg.value);
    const auto col = static_cast<Eigen::Index>(b);
    d_x0.col(col) = (scale * tg.d_x0).cast<Scalar>();
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) d_logits(i * k + j, col) = static_cast<Scalar>(scale * tg.d_logits(i, j));
    }
  }
  result.grad.assign(model.parameter_count(), Scalar(0));
  model.backward(cache, d_x0, d_logits, result.grad);
  return result;
}

// Full-sum VLB estimate: for every sample and every t in [1, T] one z_t draw,
// plus the prior term. Reported in nats per sample.
struct VlbEstimate {
  double total = 0.0;
  double prior = 0.0;
  std::vector<double> per_t;  // index t-1 holds the mean of L_{t-1}

  double sum_of_terms() const {
    double s = prior;
    for (double v : per_t) s += v;
    return s;
  }
};

template <Denoiser D>
VlbEstimate estimate_vlb(const D& model, std::span<const ConditionedSample> samples, const NoiseSchedule& sched,
                         std::uint64_t seed, const LossOptions& opts = {}, bool conditional = true) {
  require(!samples.empty(), "estimate_vlb: no samples");
  const ShapeSpec shape = model.shape();
  const int big_t = sched.total_steps();
  VlbEstimate est;
  est.per_t.assign(static_cast<std::size_t>(big_t), 0.0);
  const double inv = 1.0 / static_cast<double>(samples.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t si = 0; si < samples.size(); ++si) {
    const ConditionedSample& s = samples[si];
    Rng rng(derive_seed(seed, si));
    est.prior += inv * prior_term(s.z, sched, shape.n_classes);
    for (int t0 = 1; t0 <= big_t; t0 += static_cast<int>(kChunk)) {
      const int t1 = std::min(big_t, t0 + static_cast<int>(kChunk) - 1);
      std::vector<DenoiserInput> inputs;
      inputs.reserve(static_cast<std::size_t>(t1 - t0 + 1));
      for (int t = t0; t <= t1; ++t) {
        const JointSample z_t = sample(q_marginal_params(s.z, t, sched, shape.n_classes), rng);
        inputs.push_back(DenoiserInput{z_t.x, z_t.y, t, s.cond, !conditional});
      }
      const auto outs = model.predict(inputs);
      for (std::size_t b = 0; b < inputs.size(); ++b) {
        const JointSample z_t{inputs[b].x_t, inputs[b].y_t};
        const TermGrad tg =
            item_term(outs[b].x0_hat, outs[b].theta0_logits, s.z, z_t, inputs[b].t, sched, opts, false);
        est.per_t[static_cast<std::size_t>(inputs[b].t - 1)] += inv * tg.value.total();
      }
    }
  }
  est.total = est.sum_of_terms();
  return est;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, Scalar(0)), v_(n, Scalar(0)) {}

  void step(std::span<Scalar> params, std::span<const Scalar> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "Adam: size mismatch");
    ++count_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(count_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(count_));
    const auto b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    const auto step_size = static_cast<Scalar>(cfg_.lr / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(cfg_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grad[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grad[i] * grad[i];
      params[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }

  AdamConfig& config() { return cfg_; }
  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return count_; }
  std::vector<Scalar>& first_moment() { return m_; }
  std::vector<Scalar>& second_moment() { return v_; }
  const std::vector<Scalar>& first_moment() const { return m_; }
  const std::vector<Scalar>& second_moment() const { return v_; }
  void set_step_count(std::uint64_t c) { count_ = c; }

 private:
  AdamConfig cfg_;
  std::vector<Scalar> m_, v_;
  std::uint64_t count_ = 0;
};

struct TrainConfig {
  long steps = 1000;
  int batch = 64;
  double lr = 1e-3;
  double cond_dropout = 0.1;
  std::uint64_t seed = 0;
  LossOptions loss;
  int log_every = 100;
  double ema_decay = 0.0;  // 0 disables the weight average
};

struct LossTracePoint {
  long step;
  double loss;  // mean training loss over the logging window
};

// Model, optimizer state and step counter; what a checkpoint persists.
template <typename Scalar>
struct TrainState {
  ReferenceDenoiser<Scalar> model;
  Adam<Scalar> optimizer;
  long step = 0;
  std::uint64_t seed = 0;
  std::vector<Scalar> ema;  // exponential moving average of parameters; empty when unused

  // Model carrying the averaged weights, or a copy of the raw model.
  ReferenceDenoiser<Scalar> averaged_model() const {
    ReferenceDenoiser<Scalar> m = model;
    if (!ema.empty()) std::copy(ema.begin(), ema.end(), m.parameters().begin());
    return m;
  }
};

template <typename Scalar>
TrainState<Scalar> init_train_state(const ArchConfig& arch, std::uint64_t seed, double lr) {
  TrainState<Scalar> s{ReferenceDenoiser<Scalar>(arch), Adam<Scalar>(0), 0, seed, {}};
  s.model.initialize(derive_seed(seed, 0xC0FFEEULL));
  s.optimizer = Adam<Scalar>(s.model.parameter_count(), AdamConfig{lr});
  return s;
}

// Runs cfg.steps optimizer steps from the given state. Step k draws its batch,
// dropout decisions and noise from Rng(derive_seed(seed, k)), so training is
// resumable and reproducible. Throws NumericalError on divergence.
template <typename Scalar>
std::vector<LossTracePoint> train(TrainState<Scalar>& state, std::span<const ConditionedSample> dataset,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  const std::function<void(const LossTracePoint&)>& on_log = {}) {
  require(!dataset.empty(), "train: empty dataset");
  require(cfg.steps >= 0, "train: steps must be nonnegative");
  require(cfg.batch >= 1, "train: batch must be positive");
  require(cfg.lr > 0.0, "train: learning rate must be positive");
  require(cfg.cond_dropout >= 0.0 && cfg.cond_dropout <= 1.0, "train: cond dropout must lie in [0, 1]");
  require(cfg.log_every >= 1, "train: log_every must be positive");
  require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, "train: ema decay must lie in [0, 1)");
  require(sched.total_steps() == state.model.arch().total_steps, "train: schedule length differs from model");
  state.optimizer.config().lr = cfg.lr;
  const auto params = state.model.parameters();
  if (cfg.ema_decay > 0.0 && state.ema.empty()) state.ema.assign(params.begin(), params.end());
  const auto decay = static_cast<Scalar>(cfg.ema_decay);

  std::vector<LossTracePoint> trace;
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<TrainItem> batch(static_cast<std::size_t>(cfg.batch));
  double window = 0.0;
  int window_count = 0;
  const long end = state.step + cfg.steps;
  while (state.step < end) {
    Rng rng(derive_seed(state.seed, static_cast<std::uint64_t>(state.step) + 1));
    for (TrainItem& item : batch) {
      const ConditionedSample& s = dataset[pick(rng)];
      item.z0 = s.z;
      item.cond = s.cond;
      item.cond_dropped = uniform01(rng) < cfg.cond_dropout;
    }
    LossResult<Scalar> res = vlb_loss<Scalar>(batch, state.model, sched, rng, cfg.loss);
    if (!std::isfinite(res.loss)) {
      throw NumericalError("train: loss diverged at step " + std::to_string(state.step));
    }
    state.optimizer.step(params, res.grad);
    if (!state.ema.empty() && cfg.ema_decay > 0.0) {
      for (std::size_t i = 0; i < params.size(); ++i) state.ema[i] = decay * state.ema[i] + (Scalar(1) - decay) * params[i];
    }
    ++state.step;
    window += res.loss;
    ++window_count;
    if (state.step % cfg.log_every == 0 || state.step == end) {
      const LossTracePoint p{state.step, window / window_count};
      trace.push_back(p);
      if (on_log) on_log(p);
      window = 0.0;
      window_count = 0;
    }
  }
  return trace;
}

}  // namespace gcdiff
