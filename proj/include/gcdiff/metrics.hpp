#pragma once

// Layout-aware evaluation: Semantic Recall / Precision / F-score, Frechet
// Segmentation Distance, mIoU, and a grammar total-variation check.

#include "gcdiff/core.hpp"
#include "gcdiff/toy_scenes.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <bit>
#include <cmath>
#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gcdiff {

// Set of class indices, K <= 64.
class ClassSet {
 public:
  ClassSet() = default;
  explicit ClassSet(std::uint64_t bits) : bits_(bits) {}

  static ClassSet of_layout(const std::vector<int>& layout) {
    std::uint64_t b = 0;
    for (int label : layout) b |= std::uint64_t{1} << label;
    return ClassSet(b);
  }

  ClassSet& insert(int k) {
    bits_ |= std::uint64_t{1} << k;
    return *this;
  }
  bool contains(int k) const { return (bits_ >> k) & 1U; }
  int size() const { return std::popcount(bits_); }
  bool empty() const { return bits_ == 0; }
  std::uint64_t bits() const { return bits_; }
  ClassSet operator&(ClassSet o) const { return ClassSet(bits_ & o.bits_); }

 private:
  std::uint64_t bits_ = 0;
};

struct DetectionPair {
  ClassSet detected;  // classes in F(x)
  ClassSet truth;     // classes named by the condition
};

// Builds detection pairs by running a segmenter over generated images.
template <typename Segmenter>
std::vector<DetectionPair> detect(std::span<const Eigen::VectorXd> images, std::span<const ClassSet> truths,
                                  Segmenter&& segment) {
  require(images.size() == truths.size(), "detect: images and class sets differ in count");
  std::vector<DetectionPair> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back({ClassSet::of_layout(segment(images[i])), truths[i]});
  return out;
}

struct PerClassRecall {
  int detected = 0;
  int expected = 0;
  double rate() const { return expected == 0 ? 0.0 : static_cast<double>(detected) / expected; }
};

struct RecallResult {
  double value = 0.0;
  std::vector<PerClassRecall> per_class;
};

// Mean over samples of |F(x) & truth| / |truth|.
inline RecallResult semantic_recall(std::span<const DetectionPair> pairs, int n_classes) {
  require(!pairs.empty(), "semantic_recall: no samples");
  RecallResult r;
  r.per_class.assign(static_cast<std::size_t>(n_classes), {});
  for (const DetectionPair& p : pairs) {
    require(!p.truth.empty(), "semantic_recall: empty ground-truth class set");
    r.value += static_cast<double>((p.detected & p.truth).size()) / p.truth.size();
    for (int k = 0; k < n_classes; ++k) {
      if (!p.truth.contains(k)) continue;
      ++r.per_class[static_cast<std::size_t>(k)].expected;
      if (p.detected.contains(k)) ++r.per_class[static_cast<std::size_t>(k)].detected;
    }
  }
  r.value /= static_cast<double>(pairs.size());
  return r;
}

// Mean over samples of |F(x) & truth| / |F(x)|; a sample detecting nothing scores 0.
inline double semantic_precision(std::span<const DetectionPair> pairs) {
  require(!pairs.empty(), "semantic_precision: no samples");
  double sum = 0.0;
  for (const DetectionPair& p : pairs) {
    if (!p.detected.empty()) sum += static_cast<double>((p.detected & p.truth).size()) / p.detected.size();
  }
  return sum / static_cast<double>(pairs.size());
}

inline double semantic_f(double recall, double precision) {
  require(recall >= 0.0 && recall <= 1.0 && precision >= 0.0 && precision <= 1.0,
          "semantic_f: recall and precision must lie in [0, 1]");
  if (recall == 0.0 || precision == 0.0) return 0.0;
  return 2.0 / (1.0 / recall + 1.0 / precision);
}

// Per-sample class pixel counts as rows of an n x K matrix.
inline Eigen::MatrixXd class_counts(std::span<const std::vector<int>> layouts, int n_classes) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layouts.size()), n_classes);
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    for (int label : layouts[i]) {
      require(label >= 0 && label < n_classes, "class_counts: label out of range");
      counts(static_cast<Eigen::Index>(i), label) += 1.0;
    }
  }
  return counts;
}

// Symmetric PSD square root with negative eigenvalues clipped to zero.
inline Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Frechet distance between Gaussians with the given moments.
// Tr((S1 S2)^{1/2}) as the nuclear norm of S1^{1/2} S2^{1/2}. Eigenvalues of
// the product would need a sqrt of rounding noise when the covariances are
// rank deficient (count vectors with a fixed total).
inline double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& mu2,
                               const Eigen::MatrixXd& s2) {
  const Eigen::MatrixXd prod = sqrtm_psd(s1) * sqrtm_psd(s2);
  const double tr_sqrt = Eigen::JacobiSVD<Eigen::MatrixXd>(prod).singularValues().sum();
  const double d = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(d)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(d, 0.0);
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1)
};

inline Moments moments(const Eigen::MatrixXd& rows) {
  require(rows.rows() >= 2, "moments: need at least 2 samples");
  Moments m;
  m.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  if (!m.mean.allFinite() || !m.cov.allFinite()) throw NumericalError("moments: non-finite statistics");
  return m;
}

// Frechet Segmentation Distance over per-class pixel-count vectors.
inline double fsd(std::span<const std::vector<int>> gen_layouts, std::span<const std::vector<int>> real_layouts,
                  int n_classes) {
  require(gen_layouts.size() >= 2 && real_layouts.size() >= 2, "fsd: need at least 2 layouts per side");
  const Moments a = moments(class_counts(gen_layouts, n_classes));
  const Moments b = moments(class_counts(real_layouts, n_classes));
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

// Mean IoU over classes present in either layout.
inline double miou(std::span<const int> a, std::span<const int> b, int n_classes) {
  require(a.size() == b.size(), "miou: layout shapes differ");
  std::vector<int> inter(static_cast<std::size_t>(n_classes), 0), uni(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i] >= 0 && a[i] < n_classes && b[i] >= 0 && b[i] < n_classes, "miou: label out of range");
    if (a[i] == b[i]) {
      ++inter[static_cast<std::size_t>(a[i])];
      ++uni[static_cast<std::size_t>(a[i])];
    } else {
      ++uni[static_cast<std::size_t>(a[i])];
      ++uni[static_cast<std::size_t>(b[i])];
    }
  }
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < n_classes; ++k) {
    if (uni[static_cast<std::size_t>(k)] == 0) continue;
    sum += static_cast<double>(inter[static_cast<std::size_t>(k)]) / uni[static_cast<std::size_t>(k)];
    ++present;
  }
  return present == 0 ? 1.0 : sum / present;
}

inline double pixel_agreement(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size() && !a.empty(), "pixel_agreement: layout shapes differ");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1U : 0U;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

// Total variation between two distributions over summary keys.
inline double total_variation(const std::map<std::uint64_t, double>& p, const std::map<std::uint64_t, double>& q) {
  double tv = 0.0;
  for (const auto& [k, v] : p) {
    const auto it = q.find(k);
    tv += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q) {
    if (!p.contains(k)) tv += v;
  }
  return 0.5 * tv;
}

inline constexpr std::size_t kMinTvSamples = 1000;

inline std::map<std::uint64_t, double> empirical_summary(std::span<const std::vector<int>> layouts, int n_classes) {
  std::map<std::uint64_t, double> emp;
  const double w = 1.0 / static_cast<double>(layouts.size());
  for (const auto& y : layouts) emp[layout_summary(y, n_classes)] += w;
  return emp;
}

// TV distance between generated layout summaries and the grammar's exact
// summary distribution.
inline double joint_tv(std::span<const std::vector<int>> gen_layouts, const SceneConfig& cfg,
                       std::size_t min_samples = kMinTvSamples) {
  require(gen_layouts.size() >= min_samples, "joint_tv: too few samples");
  return total_variation(empirical_summary(gen_layouts, cfg.n_classes), summary_distribution(cfg));
}

struct EvalReport {
  double semantic_recall = 0.0;
  double semantic_precision = 0.0;
  double semantic_f = 0.0;
  // Same three scores with the generated layout in place of F(x).
  double layout_recall = 0.0;
  double layout_precision = 0.0;
  double layout_f = 0.0;
  double fsd = 0.0;
  double miou = 0.0;             // generated layout vs F(generated image)
  double pixel_agreement = 0.0;  // same pair, fraction of equal pixels
  std::optional<double> tv_distance;
  std::size_t sample_count = 0;
  std::vector<PerClassRecall> per_class;

  std::string to_text() const {
    std::ostringstream o;
    o.precision(10);
    o << "samples=" << sample_count << "\n";
    o << "semantic_recall=" << semantic_recall << "\n";
    o << "semantic_precision=" << semantic_precision << "\n";
    o << "semantic_f=" << semantic_f << "\n";
    o << "layout_recall=" << layout_recall << "\n";
    o << "layout_precision=" << layout_precision << "\n";
    o << "layout_f=" << layout_f << "\n";
    o << "fsd=" << fsd << "\n";
    o << "miou=" << miou << "\n";
    o << "pixel_agreement=" << pixel_agreement << "\n";
    if (tv_distance) {
      o << "tv_distance=" << *tv_distance << "\n";
    } else {
      o << "tv_distance=unavailable\n";
    }
    for (std::size_t k = 0; k < per_class.size(); ++k) {
      o << "recall_class_" << k << "=" << per_class[k].rate() << "\n";
    }
    return o.str();
  }
};

// Scores generated (image, layout, condition) triples against a reference
// layout set, using the palette segmenter as F.
inline EvalReport evaluate(std::span<const ConditionedSample> generated, std::span<const std::vector<int>> reference,
                           const SceneConfig& cfg) {
  require(!generated.empty(), "evaluate: no generated samples");
  EvalReport rep;
  rep.sample_count = generated.size();
  std::vector<DetectionPair> by_image, by_layout;
  std::vector<std::vector<int>> layouts;
  double miou_sum = 0.0, agree_sum = 0.0;
  for (const ConditionedSample& s : generated) {
    const std::vector<int> seg = oracle_segment(s.z.x, cfg);
    const ClassSet truth(static_cast<std::uint64_t>(s.cond));
    by_image.push_back({ClassSet::of_layout(seg), truth});
    by_layout.push_back({ClassSet::of_layout(s.z.y), truth});
    miou_sum += miou(s.z.y, seg, cfg.n_classes);
    agree_sum += pixel_agreement(s.z.y, seg);
    layouts.push_back(s.z.y);
  }
  const RecallResult r = semantic_recall(by_image, cfg.n_classes);
  rep.semantic_recall = r.value;
  rep.per_class = r.per_class;
  rep.semantic_precision = semantic_precision(by_image);
  rep.semantic_f = semantic_f(rep.semantic_recall, rep.semantic_precision);
  rep.layout_recall = semantic_recall(by_layout, cfg.n_classes).value;
  rep.layout_precision = semantic_precision(by_layout);
  rep.layout_f = semantic_f(rep.layout_recall, rep.layout_precision);
  const double n = static_cast<double>(generated.size());
  rep.miou = miou_sum / n;
  rep.pixel_agreement = agree_sum / n;
  if (generated.size() >= 2 && reference.size() >= 2) rep.fsd = fsd(layouts, reference, cfg.n_classes);
  if (generated.size() >= kMinTvSamples) rep.tv_distance = joint_tv(layouts, cfg);
  return rep;
}

}  // namespace gcdiff
