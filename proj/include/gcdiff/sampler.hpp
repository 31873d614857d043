#pragma once

// Reverse-process generation: ancestral and strided sampling, classifier-free
// guidance, and resampled cross-modal outpainting.
//
// Every entry point takes one generator per sample and consumes it in a fixed
// order (initial state x then y, then per step: known-region draws, model
// posterior draws x then y, resampling draws). Two entry points that make the
// same draws therefore produce bit-identical results.

#include "gcdiff/core.hpp"
#include "gcdiff/denoiser.hpp"
#include "gcdiff/diffusion_process.hpp"
#include "gcdiff/gc_distribution.hpp"
#include "gcdiff/schedules.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcdiff {

// Disabled guidance means plain conditional prediction (equivalent to w = 1).
struct GuidanceConfig {
  double scale = 1.0;
  bool enabled = false;
};

// uncond + w * (cond - uncond), on x0_hat and on the label logits.
inline DenoiserOutput guide_predictions(const DenoiserOutput& out_cond, const DenoiserOutput& out_uncond, double w) {
  require(std::isfinite(w), "guide_predictions: scale must be finite");
  require(out_cond.x0_hat.size() == out_uncond.x0_hat.size() &&
              out_cond.theta0_logits.rows() == out_uncond.theta0_logits.rows() &&
              out_cond.theta0_logits.cols() == out_uncond.theta0_logits.cols(),
          "guide_predictions: shape mismatch");
  if (w == 1.0) return out_cond;
  if (w == 0.0) return out_uncond;
  DenoiserOutput g;
  g.x0_hat = out_uncond.x0_hat + w * (out_cond.x0_hat - out_uncond.x0_hat);
  g.theta0_logits = out_uncond.theta0_logits + w * (out_cond.theta0_logits - out_uncond.theta0_logits);
  return g;
}

// `count` timesteps evenly spaced over [1, T], always including 1 and T.
inline std::vector<int> stride_steps(int total_steps, int count) {
  require(total_steps >= 1, "stride_steps: T must be positive");
  require(count >= 1 && count <= total_steps, "stride_steps: count must lie in [1, T]");
  if (count == 1) return {total_steps};
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double v = 1.0 + static_cast<double>(i) * (total_steps - 1) / (count - 1);
    const int s = static_cast<int>(std::lround(v));
    if (steps.empty() || s > steps.back()) steps.push_back(s);
  }
  return steps;
}

inline std::vector<int> full_steps(int total_steps) { return stride_steps(total_steps, total_steps); }

inline void validate_steps(std::span<const int> steps, int total_steps) {
  require(!steps.empty(), "sampler: empty step set");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    require(steps[i] >= 1 && steps[i] <= total_steps, "sampler: step outside [1, T]");
    require(i == 0 || steps[i] > steps[i - 1], "sampler: steps must be strictly ascending");
  }
  require(steps.back() == total_steps, "sampler: step set must contain T");
}

namespace detail {

inline FactorizedGCParams prior_params(const ShapeSpec& shape) {
  FactorizedGCParams p;
  p.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.n_gauss));
  p.var = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(shape.n_gauss));
  p.theta = RowMatrixXd::Constant(static_cast<Eigen::Index>(shape.n_cat), static_cast<Eigen::Index>(shape.n_classes),
                                  1.0 / static_cast<double>(shape.n_classes));
  return p;
}

template <Denoiser D>
std::vector<DenoiserOutput> guided_predict(const D& model, const std::vector<JointSample>& states, int t,
                                           std::span<const std::optional<int>> conds, const GuidanceConfig& guidance) {
  std::vector<DenoiserInput> inputs;
  inputs.reserve(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    inputs.push_back(DenoiserInput{states[b].x, states[b].y, t, conds[b], !conds[b].has_value()});
  }
  std::vector<DenoiserOutput> outs = model.predict(inputs);
  if (!guidance.enabled || guidance.scale == 1.0) return outs;

  std::vector<DenoiserInput> uncond;
  std::vector<std::size_t> index;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    if (!conds[b].has_value()) continue;
    DenoiserInput in = inputs[b];
    in.cond_dropped = true;
    uncond.push_back(std::move(in));
    index.push_back(b);
  }
  if (uncond.empty()) return outs;
  const std::vector<DenoiserOutput> u = model.predict(uncond);
  for (std::size_t i = 0; i < index.size(); ++i) {
    outs[index[i]] = guide_predictions(outs[index[i]], u[i], guidance.scale);
  }
  return outs;
}

// Model transition t -> s. For s >= 1 draws from the posterior with the
// predicted (x0_hat, softmax(logits)); for s = 0 emits (x0_hat, argmax).
inline JointSample reverse_step(const DenoiserOutput& pred, const JointSample& z_t, int t, int s,
                                const NoiseSchedule& sched, Rng& rng) {
  if (s == 0) {
    JointSample z0;
    z0.x = pred.x0_hat;
    z0.y.resize(static_cast<std::size_t>(pred.theta0_logits.rows()));
    for (Eigen::Index i = 0; i < pred.theta0_logits.rows(); ++i) {
      z0.y[static_cast<std::size_t>(i)] = argmax(pred.theta0_logits.row(i));
    }
    return z0;
  }
  const PosteriorParams post = posterior_between(pred.x0_hat, softmax_rows(pred.theta0_logits), z_t, t, s, sched);
  return sample(post.params, rng);
}

inline void check_finite(const JointSample& z, int t) {
  if (!z.x.allFinite()) throw NumericalError("sampler: non-finite state at timestep " + std::to_string(t));
}

}  // namespace detail

// Batched strided sampling. steps must ascend and contain T; every
// transition goes from steps[i] to steps[i-1], and the final one from
// steps[0] emits the decoder mode.
template <Denoiser D>
std::vector<JointSample> strided_sample_batch(const D& model, const NoiseSchedule& sched,
                                              std::span<const std::optional<int>> conds,
                                              const GuidanceConfig& guidance, std::span<const int> steps,
                                              std::span<Rng> rngs) {
  validate_steps(steps, sched.total_steps());
  require(conds.size() == rngs.size(), "sampler: one condition slot per generator required");
  const ShapeSpec shape = model.shape();
  const FactorizedGCParams prior = detail::prior_params(shape);
  std::vector<JointSample> z(rngs.size());
  for (std::size_t b = 0; b < rngs.size(); ++b) z[b] = sample(prior, rngs[b]);
  for (std::size_t idx = steps.size(); idx-- > 0;) {
    const int t = steps[idx];
    const int s = idx > 0 ? steps[idx - 1] : 0;
    const std::vector<DenoiserOutput> preds = detail::guided_predict(model, z, t, conds, guidance);
    for (std::size_t b = 0; b < z.size(); ++b) {
      z[b] = detail::reverse_step(preds[b], z[b], t, s, sched, rngs[b]);
      detail::check_finite(z[b], t);
    }
  }
  return z;
}

template <Denoiser D>
JointSample strided_sample(const D& model, const NoiseSchedule& sched, std::optional<int> cond,
                           const GuidanceConfig& guidance, std::span<const int> steps, Rng& rng) {
  const std::optional<int> conds[1] = {cond};
  return strided_sample_batch(model, sched, conds, guidance, steps, std::span<Rng>(&rng, 1)).front();
}

template <Denoiser D>
JointSample ancestral_sample(const D& model, const NoiseSchedule& sched, std::optional<int> cond,
                             const GuidanceConfig& guidance, Rng& rng) {
  const std::vector<int> steps = full_steps(sched.total_steps());
  return strided_sample(model, sched, cond, guidance, steps, rng);
}

// Known values plus a per-coordinate mask over the N image coordinates
// followed by the M label positions; true marks a known coordinate.
struct OutpaintSpec {
  JointSample known;
  std::vector<bool> mask;
  int resample_n = 1;

  void validate(const ShapeSpec& shape) const {
    known.validate(shape);
    require(mask.size() == shape.n_gauss + shape.n_cat, "OutpaintSpec: mask must cover N + M coordinates");
    require(resample_n >= 1, "OutpaintSpec: resample_n must be positive");
  }
};

// Resampled outpainting. Per transition t -> s and each of resample_n inner
// passes: draw the known region from q(z_s | z_0), draw the unknown region
// from the model, splice by mask, and unless it is the last pass push z_s back
// to t with the forward kernel. The final transition writes the known values
// verbatim.
template <Denoiser D>
std::vector<JointSample> outpaint_batch(const D& model, const NoiseSchedule& sched,
                                        std::span<const OutpaintSpec> specs,
                                        std::span<const std::optional<int>> conds, const GuidanceConfig& guidance,
                                        std::span<const int> steps, std::span<Rng> rngs) {
  validate_steps(steps, sched.total_steps());
  require(specs.size() == rngs.size() && conds.size() == rngs.size(), "outpaint: batch size mismatch");
  const ShapeSpec shape = model.shape();
  for (const OutpaintSpec& sp : specs) sp.validate(shape);
  const auto n = static_cast<Eigen::Index>(shape.n_gauss);
  const FactorizedGCParams prior = detail::prior_params(shape);

  std::vector<JointSample> z(rngs.size());
  for (std::size_t b = 0; b < rngs.size(); ++b) z[b] = sample(prior, rngs[b]);

  for (std::size_t idx = steps.size(); idx-- > 0;) {
    const int t = steps[idx];
    const int s = idx > 0 ? steps[idx - 1] : 0;
    // At s = 0 the splice is deterministic, so extra passes would repeat it.
    std::vector<int> per_item_passes(specs.size());
    int max_passes = 1;
    for (std::size_t b = 0; b < specs.size(); ++b) {
      per_item_passes[b] = s == 0 ? 1 : specs[b].resample_n;
      max_passes = std::max(max_passes, per_item_passes[b]);
    }
    std::vector<JointSample> next(z.size());
    for (int pass = 0; pass < max_passes; ++pass) {
      const std::vector<DenoiserOutput> preds = detail::guided_predict(model, z, t, conds, guidance);
      for (std::size_t b = 0; b < z.size(); ++b) {
        if (pass >= per_item_passes[b]) continue;
        const OutpaintSpec& sp = specs[b];
        Rng& rng = rngs[b];
        JointSample known_s = sp.known;
        if (s > 0) {
          const double ab = sched.alphabar_gauss(s);
          const double abc = sched.alphabar_cat(s);
          const double keep = std::sqrt(ab), sd = std::sqrt(1.0 - ab);
          for (Eigen::Index j = 0; j < n; ++j) {
            if (sp.mask[static_cast<std::size_t>(j)]) known_s.x(j) = keep * sp.known.x(j) + sd * standard_normal(rng);
          }
          for (std::size_t i = 0; i < shape.n_cat; ++i) {
            if (!sp.mask[static_cast<std::size_t>(n) + i]) continue;
            // theta = abc 1[y0] + (1 - abc) / K, i.e. a categorical step with beta = 1 - abc.
            known_s.y[i] = categorical_step(sp.known.y[i], 1.0 - abc, shape.n_classes, rng);
          }
        }
        JointSample z_s = detail::reverse_step(preds[b], z[b], t, s, sched, rng);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (sp.mask[static_cast<std::size_t>(j)]) z_s.x(j) = known_s.x(j);
        }
        for (std::size_t i = 0; i < shape.n_cat; ++i) {
          if (sp.mask[static_cast<std::size_t>(n) + i]) z_s.y[i] = known_s.y[i];
        }
        detail::check_finite(z_s, t);
        if (pass + 1 < per_item_passes[b] && t > 1) {
          z[b] = forward_jump(z_s, s, t, sched, shape.n_classes, rng);
        } else {
          next[b] = std::move(z_s);
        }
      }
    }
    z = std::move(next);
  }
  return z;
}

template <Denoiser D>
JointSample outpaint(const D& model, const NoiseSchedule& sched, const OutpaintSpec& spec, std::optional<int> cond,
                     const GuidanceConfig& guidance, std::span<const int> steps, Rng& rng) {
  const std::optional<int> conds[1] = {cond};
  return outpaint_batch(model, sched, std::span<const OutpaintSpec>(&spec, 1), conds, guidance, steps,
                        std::span<Rng>(&rng, 1))
      .front();
}

}  // namespace gcdiff
