#pragma once

// Procedural image-layout scenes with an enumerable ground-truth distribution.
//
// Grammar: a horizon splits the H x W grid at row r; rows above take a "top"
// class u, rows below a "bottom" class v. With probability p_blob a 2 x 2 blob
// of a third class w is placed inside the bottom region. Top classes are
// {0, ..., K/2 - 1}, bottom classes the rest, w is any class other than u, v.
// Each pixel's C channels equal palette[class] plus N(0, sigma^2) noise,
// clipped to [-1, 1]. The condition ID is the bitmask of classes present.

#include "gcdiff/core.hpp"
#include "gcdiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

namespace gcdiff {

enum class SceneType : int { horizon = 0, horizon_blob = 1 };

struct SceneConfig {
  int height = 8;
  int width = 8;
  int channels = 1;
  int n_classes = 4;
  std::vector<double> palette;  // empty: evenly spaced levels in [-0.75, 0.75]
  double sigma_data = 0.05;
  double p_blob = 0.5;
  std::uint64_t seed = 0;

  std::vector<double> levels() const {
    if (!palette.empty()) return palette;
    std::vector<double> out(static_cast<std::size_t>(n_classes));
    for (int k = 0; k < n_classes; ++k) {
      out[static_cast<std::size_t>(k)] = n_classes == 1 ? 0.0 : -0.75 + 1.5 * k / (n_classes - 1);
    }
    return out;
  }

  int horizon_min() const { return std::max(1, height / 4); }
  int horizon_max() const { return height - std::max(2, height / 4); }
  int top_class_count() const { return n_classes / 2; }
  int condition_count() const { return 1 << n_classes; }

  ShapeSpec shape() const {
    return {static_cast<std::size_t>(height * width * channels), static_cast<std::size_t>(height * width),
            static_cast<std::size_t>(n_classes)};
  }

  void validate() const {
    require(height >= 4 && width >= 2, "SceneConfig: grid must be at least 4 x 2");
    require(channels >= 1, "SceneConfig: channels must be positive");
    require(n_classes >= 2 && n_classes <= 16, "SceneConfig: n_classes must lie in [2, 16]");
    require(sigma_data >= 0.0 && std::isfinite(sigma_data), "SceneConfig: sigma_data must be nonnegative");
    require(p_blob >= 0.0 && p_blob <= 1.0, "SceneConfig: p_blob must lie in [0, 1]");
    require(p_blob == 0.0 || n_classes >= 3, "SceneConfig: blobs need at least 3 classes");
    require(horizon_min() <= horizon_max(), "SceneConfig: grid too small for the horizon range");
    const std::vector<double> lv = levels();
    require(static_cast<int>(lv.size()) == n_classes, "SceneConfig: palette size must equal n_classes");
    for (std::size_t a = 0; a < lv.size(); ++a) {
      require(lv[a] >= -1.0 && lv[a] <= 1.0, "SceneConfig: palette level outside [-1, 1]");
      for (std::size_t b = a + 1; b < lv.size(); ++b) {
        require(std::abs(lv[a] - lv[b]) >= 4.0 * sigma_data, "SceneConfig: palette levels closer than 4 sigma");
      }
    }
  }
};

struct SceneSample : ConditionedSample {
  SceneType type = SceneType::horizon;
};

// Layout parameters of one grammar outcome.
struct SceneLayoutParams {
  SceneType type = SceneType::horizon;
  int top = 0, bottom = 0, horizon = 0;
  int blob = -1, blob_row = 0, blob_col = 0;
};

inline std::vector<int> render_layout(const SceneConfig& cfg, const SceneLayoutParams& p) {
  std::vector<int> y(static_cast<std::size_t>(cfg.height * cfg.width));
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) y[static_cast<std::size_t>(r * cfg.width + c)] = r < p.horizon ? p.top : p.bottom;
  }
  if (p.type == SceneType::horizon_blob) {
    for (int r = p.blob_row; r < p.blob_row + 2; ++r) {
      for (int c = p.blob_col; c < p.blob_col + 2; ++c) y[static_cast<std::size_t>(r * cfg.width + c)] = p.blob;
    }
  }
  return y;
}

inline int condition_of(const std::vector<int>& layout) {
  int mask = 0;
  for (int label : layout) mask |= 1 << label;
  return mask;
}

inline std::vector<int> classes_in_condition(int cond, int n_classes) {
  std::vector<int> out;
  for (int k = 0; k < n_classes; ++k) {
    if (cond & (1 << k)) out.push_back(k);
  }
  return out;
}

namespace detail {

inline std::vector<int> blob_classes(const SceneConfig& cfg, int top, int bottom) {
  std::vector<int> out;
  for (int k = 0; k < cfg.n_classes; ++k) {
    if (k != top && k != bottom) out.push_back(k);
  }
  return out;
}

template <typename T>
T pick_uniform(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline int pick_range(int lo, int hi, Rng& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace detail

inline SceneLayoutParams draw_layout(const SceneConfig& cfg, Rng& rng) {
  SceneLayoutParams p;
  p.type = uniform01(rng) < cfg.p_blob ? SceneType::horizon_blob : SceneType::horizon;
  p.top = detail::pick_range(0, cfg.top_class_count() - 1, rng);
  p.bottom = detail::pick_range(cfg.top_class_count(), cfg.n_classes - 1, rng);
  p.horizon = detail::pick_range(cfg.horizon_min(), cfg.horizon_max(), rng);
  if (p.type == SceneType::horizon_blob) {
    p.blob = detail::pick_uniform(detail::blob_classes(cfg, p.top, p.bottom), rng);
    p.blob_row = detail::pick_range(p.horizon, cfg.height - 2, rng);
    p.blob_col = detail::pick_range(0, cfg.width - 2, rng);
  }
  return p;
}

inline Eigen::VectorXd render_image(const SceneConfig& cfg, const std::vector<int>& layout, Rng& rng) {
  const std::vector<double> lv = cfg.levels();
  Eigen::VectorXd x(static_cast<Eigen::Index>(layout.size() * static_cast<std::size_t>(cfg.channels)));
  for (std::size_t p = 0; p < layout.size(); ++p) {
    for (int c = 0; c < cfg.channels; ++c) {
      double v = lv[static_cast<std::size_t>(layout[p])];
      if (cfg.sigma_data > 0.0) v += cfg.sigma_data * standard_normal(rng);
      x(static_cast<Eigen::Index>(p * static_cast<std::size_t>(cfg.channels)) + c) = std::clamp(v, -1.0, 1.0);
    }
  }
  return x;
}

// Item i uses its own generator derived from (seed, i).
inline std::vector<SceneSample> generate(const SceneConfig& cfg, std::size_t count) {
  cfg.validate();
  std::vector<SceneSample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    const SceneLayoutParams p = draw_layout(cfg, rng);
    SceneSample& s = out[i];
    s.type = p.type;
    s.z.y = render_layout(cfg, p);
    s.z.x = render_image(cfg, s.z.y, rng);
    s.cond = condition_of(s.z.y);
  }
  return out;
}

// Nearest palette level per pixel (channel mean); ties go to the lower class.
inline std::vector<int> oracle_segment(const Eigen::VectorXd& image, const SceneConfig& cfg) {
  const std::vector<double> lv = cfg.levels();
  require(image.size() % cfg.channels == 0, "oracle_segment: image length not a multiple of channels");
  const Eigen::Index pixels = image.size() / cfg.channels;
  std::vector<int> y(static_cast<std::size_t>(pixels));
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const double v = image.segment(p * cfg.channels, cfg.channels).mean();
    int best = 0;
    double best_d = std::abs(v - lv[0]);
    for (std::size_t k = 1; k < lv.size(); ++k) {
      const double d = std::abs(v - lv[k]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    y[static_cast<std::size_t>(p)] = best;
  }
  return y;
}

struct EnumeratedLayout {
  SceneLayoutParams params;
  std::vector<int> layout;
  double probability;
};

// Every grammar outcome with its exact probability.
inline std::vector<EnumeratedLayout> enumerate_layouts(const SceneConfig& cfg) {
  cfg.validate();
  std::vector<EnumeratedLayout> out;
  const int tops = cfg.top_class_count();
  const int bottoms = cfg.n_classes - tops;
  const int rows = cfg.horizon_max() - cfg.horizon_min() + 1;
  const double base = 1.0 / (tops * bottoms * rows);
  for (int u = 0; u < tops; ++u) {
    for (int v = tops; v < cfg.n_classes; ++v) {
      for (int r = cfg.horizon_min(); r <= cfg.horizon_max(); ++r) {
        SceneLayoutParams p{SceneType::horizon, u, v, r};
        if (cfg.p_blob < 1.0) out.push_back({p, render_layout(cfg, p), base * (1.0 - cfg.p_blob)});
        if (cfg.p_blob <= 0.0) continue;
        const std::vector<int> ws = detail::blob_classes(cfg, u, v);
        const int positions = (cfg.height - 1 - r) * (cfg.width - 1);
        const double each = base * cfg.p_blob / static_cast<double>(ws.size() * static_cast<std::size_t>(positions));
        for (int w : ws) {
          for (int br = r; br <= cfg.height - 2; ++br) {
            for (int bc = 0; bc <= cfg.width - 2; ++bc) {
              SceneLayoutParams q{SceneType::horizon_blob, u, v, r, w, br, bc};
              out.push_back({q, render_layout(cfg, q), each});
            }
          }
        }
      }
    }
  }
  return out;
}

// Discretized layout summary: present-class bitmask plus, per class, its
// pixel share bucketed as absent / under half / at least half. The number of
// classes present identifies the scene type (2 = horizon, 3 = horizon+blob).
inline std::uint64_t layout_summary(const std::vector<int>& layout, int n_classes) {
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (int label : layout) ++counts[static_cast<std::size_t>(label)];
  std::uint64_t key = 0;
  const auto total = static_cast<double>(layout.size());
  for (int k = 0; k < n_classes; ++k) {
    const int c = counts[static_cast<std::size_t>(k)];
    const std::uint64_t bucket = c == 0 ? 0 : (c / total < 0.5 ? 1 : 2);
    key = key * 3 + bucket;
  }
  return key;
}

inline std::map<std::uint64_t, double> summary_distribution(const SceneConfig& cfg) {
  std::map<std::uint64_t, double> dist;
  for (const EnumeratedLayout& e : enumerate_layouts(cfg)) dist[layout_summary(e.layout, cfg.n_classes)] += e.probability;
  return dist;
}

}  // namespace gcdiff
