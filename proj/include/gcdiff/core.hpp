#pragma once

// Shared value types, error types and small numeric helpers.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcdiff {

using Rng = std::mt19937_64;

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Heap storage aligned like Eigen's own buffers, so vectorized kernels over
// Map views take the same code path (and summation order) on every run.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Bad input: shapes, ranges, malformed configuration or files.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or divergence during training or sampling.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kDenominatorFloor = 1e-12;
inline constexpr double kPmfRenormTolerance = 1e-6;
inline constexpr double kBetaClip = 0.999;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

// Dimensions of a joint image-layout state. Labels are stored 0-based,
// i.e. in {0, ..., n_classes - 1}.
struct ShapeSpec {
  std::size_t n_gauss = 0;
  std::size_t n_cat = 0;
  std::size_t n_classes = 0;

  void validate() const {
    require(n_gauss > 0, "ShapeSpec: n_gauss must be positive");
    require(n_cat > 0, "ShapeSpec: n_cat must be positive");
    require(n_classes >= 2, "ShapeSpec: n_classes must be at least 2");
  }

  friend bool operator==(const ShapeSpec&, const ShapeSpec&) = default;
};

// One image-layout pair.
struct JointSample {
  Eigen::VectorXd x;
  std::vector<int> y;

  void validate(const ShapeSpec& shape) const {
    require(static_cast<std::size_t>(x.size()) == shape.n_gauss, "JointSample: image length mismatch");
    require(y.size() == shape.n_cat, "JointSample: layout length mismatch");
    require(x.allFinite(), "JointSample: non-finite image value");
    for (int label : y) {
      require(label >= 0 && static_cast<std::size_t>(label) < shape.n_classes,
              "JointSample: label out of range");
    }
  }

  RowMatrixXd one_hot(std::size_t n_classes) const {
    RowMatrixXd out = RowMatrixXd::Zero(static_cast<Eigen::Index>(y.size()),
                                        static_cast<Eigen::Index>(n_classes));
    for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
    return out;
  }

  friend bool operator==(const JointSample& a, const JointSample& b) {
    return a.x.size() == b.x.size() && (a.x.array() == b.x.array()).all() && a.y == b.y;
  }
};

// splitmix64 finalizer; derives independent per-item seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Inverse-CDF draw from a PMF row; one uniform per call.
template <typename Row>
int sample_categorical(const Row& pmf, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  const int k = static_cast<int>(pmf.size());
  for (int j = 0; j < k; ++j) {
    acc += pmf(j);
    if (u < acc) return j;
  }
  for (int j = k - 1; j >= 0; --j) {
    if (pmf(j) > 0.0) return j;
  }
  return k - 1;
}

template <typename Row>
int argmax(const Row& row) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(row.size()); ++j) {
    if (row(j) > row(best)) best = j;
  }
  return best;
}

inline double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

inline double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Row-wise softmax of an M x K logit matrix.
inline RowMatrixXd softmax_rows(const RowMatrixXd& logits) {
  RowMatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace gcdiff
