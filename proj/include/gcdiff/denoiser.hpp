#pragma once

// Denoiser contract and the reference residual-MLP network with hand-written
// backward pass.

#include "gcdiff/core.hpp"

#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <vector>

namespace gcdiff {

struct DenoiserInput {
  Eigen::VectorXd x_t;
  std::vector<int> y_t;
  int t = 1;
  std::optional<int> cond;
  bool cond_dropped = false;
};

struct DenoiserOutput {
  Eigen::VectorXd x0_hat;     // length N
  RowMatrixXd theta0_logits;  // M x K, pre-softmax
};

// Anything that maps noisy joint states to clean-sample predictions.
template <typename D>
concept Denoiser = requires(const D& d, std::span<const DenoiserInput> in) {
  { d.predict(in) } -> std::same_as<std::vector<DenoiserOutput>>;
  { d.shape() } -> std::same_as<ShapeSpec>;
};

struct ArchConfig {
  ShapeSpec shape;
  int total_steps = 1000;   // timestep range of the time embedding
  int cond_count = 1;       // condition IDs 0..cond_count-1; one extra null row
  int label_embed = 3;
  int cond_embed = 16;
  int time_embed = 32;
  int hidden = 256;
  int blocks = 4;

  void validate() const {
    shape.validate();
    require(total_steps >= 1, "ArchConfig: total_steps must be positive");
    require(cond_count >= 1, "ArchConfig: cond_count must be positive");
    require(label_embed >= 1 && cond_embed >= 1 && hidden >= 1 && blocks >= 0,
            "ArchConfig: non-positive width");
    require(time_embed >= 2 && time_embed % 2 == 0, "ArchConfig: time_embed must be even and >= 2");
  }

  int input_width() const {
    return static_cast<int>(shape.n_gauss) + static_cast<int>(shape.n_cat) * label_embed + time_embed + cond_embed;
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// Input embedding (image, per-position learnable label embedding, sinusoidal
// time embedding, condition embedding with a learned null row) followed by a
// linear projection, `blocks` residual blocks h += W2 softplus(W1 h + b1) + b2,
// and two linear heads for x0_hat and the label logits.
template <typename Scalar>
class ReferenceDenoiser {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  // Activations kept for the backward pass.
  struct Cache {
    Matrix input;
    std::vector<Matrix> hidden;  // blocks + 1 entries: residual stream before each block and final
    std::vector<Matrix> pre;     // per block W1 h + b1
    std::vector<Matrix> act;     // per block softplus(pre)
    Matrix x0;                   // N x B
    Matrix logits;               // (M*K) x B, position-major
    std::vector<int> labels;     // M * B
    std::vector<int> cond_rows;  // B
  };

  explicit ReferenceDenoiser(ArchConfig arch) : arch_(arch) {
    arch_.validate();
    layout();
    params_.assign(total_, Scalar(0));
    build_time_table();
  }

  const ArchConfig& arch() const { return arch_; }
  ShapeSpec shape() const { return arch_.shape; }
  std::size_t parameter_count() const { return total_; }
  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }

  // He-style initialization; output heads start at zero.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto fill = [&](std::size_t off, std::size_t count, double scale) {
      for (std::size_t i = 0; i < count; ++i) params_[off + i] = static_cast<Scalar>(scale * normal(rng));
    };
    std::fill(params_.begin(), params_.end(), Scalar(0));
    const auto h = static_cast<std::size_t>(arch_.hidden);
    fill(off_label_, size_label_, 1.0);
    fill(off_cond_, size_cond_, 1.0);
    fill(off_win_, h * static_cast<std::size_t>(arch_.input_width()), std::sqrt(2.0 / arch_.input_width()));
    const double branch = 1.0 / std::sqrt(2.0 * std::max(arch_.blocks, 1));
    for (int b = 0; b < arch_.blocks; ++b) {
      fill(blocks_[b].w1, h * h, std::sqrt(2.0 / arch_.hidden));
      fill(blocks_[b].w2, h * h, branch * std::sqrt(2.0 / arch_.hidden));
    }
  }

  Cache forward(std::span<const DenoiserInput> batch) const {
    const auto n = static_cast<Eigen::Index>(arch_.shape.n_gauss);
    const auto m = static_cast<Eigen::Index>(arch_.shape.n_cat);
    const auto e = static_cast<Eigen::Index>(arch_.label_embed);
    const auto b_count = static_cast<Eigen::Index>(batch.size());
    require(b_count > 0, "denoiser: empty batch");

    Cache c;
    c.input.resize(arch_.input_width(), b_count);
    c.labels.resize(static_cast<std::size_t>(m * b_count));
    c.cond_rows.resize(batch.size());
    const ConstMatrixMap label_emb = label_table();
    const ConstMatrixMap cond_emb = cond_table();
    for (Eigen::Index b = 0; b < b_count; ++b) {
      const DenoiserInput& in = batch[static_cast<std::size_t>(b)];
      validate_input(in);
      auto col = c.input.col(b);
      col.head(n) = in.x_t.template cast<Scalar>();
      for (Eigen::Index i = 0; i < m; ++i) {
        const int label = in.y_t[static_cast<std::size_t>(i)];
        c.labels[static_cast<std::size_t>(b * m + i)] = label;
        col.segment(n + i * e, e) = label_emb.col(label);
      }
      const Eigen::Index t_off = n + m * e;
      col.segment(t_off, arch_.time_embed) = time_table_.col(in.t);
      const int row = in.cond_dropped ? arch_.cond_count : *in.cond;
      c.cond_rows[static_cast<std::size_t>(b)] = row;
      col.segment(t_off + arch_.time_embed, arch_.cond_embed) = cond_emb.col(row);
    }

    c.hidden.reserve(static_cast<std::size_t>(arch_.blocks) + 1);
    Matrix h = w_in() * c.input;
    h.colwise() += b_in();
    c.hidden.push_back(h);
    for (int k = 0; k < arch_.blocks; ++k) {
      Matrix pre = w1(k) * c.hidden.back();
      pre.colwise() += b1(k);
      Matrix act = pre.unaryExpr([](Scalar a) {
        return std::max(a, Scalar(0)) + std::log1p(std::exp(-std::abs(a)));
      });
      Matrix next = c.hidden.back() + w2(k) * act;
      next.colwise() += b2(k);
      c.pre.push_back(std::move(pre));
      c.act.push_back(std::move(act));
      c.hidden.push_back(std::move(next));
    }
    c.x0 = w_x() * c.hidden.back();
    c.x0.colwise() += b_x();
    c.logits = w_l() * c.hidden.back();
    c.logits.colwise() += b_l();
    if (!c.x0.allFinite() || !c.logits.allFinite()) throw NumericalError("denoiser: non-finite output");
    return c;
  }

  std::vector<DenoiserOutput> predict(std::span<const DenoiserInput> batch) const {
    const Cache c = forward(batch);
    return unpack(c);
  }

  std::vector<DenoiserOutput> unpack(const Cache& c) const {
    const auto m = static_cast<Eigen::Index>(arch_.shape.n_cat);
    const auto k = static_cast<Eigen::Index>(arch_.shape.n_classes);
    std::vector<DenoiserOutput> out(static_cast<std::size_t>(c.x0.cols()));
    for (Eigen::Index b = 0; b < c.x0.cols(); ++b) {
      DenoiserOutput& o = out[static_cast<std::size_t>(b)];
      o.x0_hat = c.x0.col(b).template cast<double>();
      o.theta0_logits.resize(m, k);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) o.theta0_logits(i, j) = static_cast<double>(c.logits(i * k + j, b));
      }
    }
    return out;
  }

  // Accumulates dLoss/dparams into grad given upstream gradients on the two
  // heads (same layout as Cache::x0 / Cache::logits).
  void backward(const Cache& c, const Matrix& d_x0, const Matrix& d_logits, std::span<Scalar> grad) const {
    require(grad.size() == total_, "denoiser backward: gradient buffer size mismatch");
    const auto gmat = [&](std::size_t off, Eigen::Index r, Eigen::Index cols) {
      return MatrixMap(grad.data() + off, r, cols);
    };
    const auto gvec = [&](std::size_t off, Eigen::Index r) { return VectorMap(grad.data() + off, r); };
    const Eigen::Index h = arch_.hidden;
    const auto n = static_cast<Eigen::Index>(arch_.shape.n_gauss);
    const auto mk = static_cast<Eigen::Index>(arch_.shape.n_cat * arch_.shape.n_classes);
    const Matrix& top = c.hidden.back();

    gmat(off_wx_, n, h).noalias() += d_x0 * top.transpose();
    gvec(off_bx_, n) += d_x0.rowwise().sum();
    gmat(off_wl_, mk, h).noalias() += d_logits * top.transpose();
    gvec(off_bl_, mk) += d_logits.rowwise().sum();
    Matrix dh = w_x().transpose() * d_x0;
    dh.noalias() += w_l().transpose() * d_logits;

    for (int k = arch_.blocks - 1; k >= 0; --k) {
      const auto kk = static_cast<std::size_t>(k);
      gmat(blocks_[kk].w2, h, h).noalias() += dh * c.act[kk].transpose();
      gvec(blocks_[kk].b2, h) += dh.rowwise().sum();
      Matrix d_pre = w2(k).transpose() * dh;
      d_pre.array() *= c.pre[kk].unaryExpr([](Scalar a) {
        return a >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-a)) : std::exp(a) / (Scalar(1) + std::exp(a));
      }).array();
      gmat(blocks_[kk].w1, h, h).noalias() += d_pre * c.hidden[kk].transpose();
      gvec(blocks_[kk].b1, h) += d_pre.rowwise().sum();
      dh.noalias() += w1(k).transpose() * d_pre;
    }

    gmat(off_win_, h, arch_.input_width()).noalias() += dh * c.input.transpose();
    gvec(off_bin_, h) += dh.rowwise().sum();
    const Matrix d_in = w_in().transpose() * dh;

    const auto m = static_cast<Eigen::Index>(arch_.shape.n_cat);
    const auto e = static_cast<Eigen::Index>(arch_.label_embed);
    MatrixMap d_label = gmat(off_label_, e, static_cast<Eigen::Index>(arch_.shape.n_classes));
    MatrixMap d_cond = gmat(off_cond_, arch_.cond_embed, arch_.cond_count + 1);
    const Eigen::Index cond_off = n + m * e + arch_.time_embed;
    for (Eigen::Index b = 0; b < d_in.cols(); ++b) {
      for (Eigen::Index i = 0; i < m; ++i) {
        d_label.col(c.labels[static_cast<std::size_t>(b * m + i)]) += d_in.col(b).segment(n + i * e, e);
      }
      d_cond.col(c.cond_rows[static_cast<std::size_t>(b)]) += d_in.col(b).segment(cond_off, arch_.cond_embed);
    }
  }

 private:
  struct BlockOffsets {
    std::size_t w1, b1, w2, b2;
  };

  void layout() {
    const auto h = static_cast<std::size_t>(arch_.hidden);
    const auto n = arch_.shape.n_gauss;
    const auto mk = arch_.shape.n_cat * arch_.shape.n_classes;
    std::size_t off = 0;
    const auto take = [&](std::size_t count) {
      const std::size_t at = off;
      off += count;
      return at;
    };
    size_label_ = static_cast<std::size_t>(arch_.label_embed) * arch_.shape.n_classes;
    size_cond_ = static_cast<std::size_t>(arch_.cond_embed) * static_cast<std::size_t>(arch_.cond_count + 1);
    off_label_ = take(size_label_);
    off_cond_ = take(size_cond_);
    off_win_ = take(h * static_cast<std::size_t>(arch_.input_width()));
    off_bin_ = take(h);
    for (int b = 0; b < arch_.blocks; ++b) {
      BlockOffsets o{};
      o.w1 = take(h * h);
      o.b1 = take(h);
      o.w2 = take(h * h);
      o.b2 = take(h);
      blocks_.push_back(o);
    }
    off_wx_ = take(n * h);
    off_bx_ = take(n);
    off_wl_ = take(mk * h);
    off_bl_ = take(mk);
    total_ = off;
  }

  void build_time_table() {
    const int half = arch_.time_embed / 2;
    time_table_.resize(arch_.time_embed, arch_.total_steps + 1);
    for (int t = 0; t <= arch_.total_steps; ++t) {
      for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        time_table_(2 * k, t) = static_cast<Scalar>(std::sin(t * freq));
        time_table_(2 * k + 1, t) = static_cast<Scalar>(std::cos(t * freq));
      }
    }
  }

  void validate_input(const DenoiserInput& in) const {
    require(static_cast<std::size_t>(in.x_t.size()) == arch_.shape.n_gauss, "denoiser: image length mismatch");
    require(in.y_t.size() == arch_.shape.n_cat, "denoiser: layout length mismatch");
    require(in.t >= 1 && in.t <= arch_.total_steps, "denoiser: timestep out of range");
    for (int label : in.y_t) {
      require(label >= 0 && static_cast<std::size_t>(label) < arch_.shape.n_classes, "denoiser: label out of range");
    }
    if (!in.cond_dropped) {
      require(in.cond.has_value(), "denoiser: condition missing and not dropped");
      require(*in.cond >= 0 && *in.cond < arch_.cond_count, "denoiser: condition ID out of range");
    }
  }

  ConstMatrixMap cmat(std::size_t off, Eigen::Index r, Eigen::Index c) const {
    return ConstMatrixMap(params_.data() + off, r, c);
  }
  ConstVectorMap cvec(std::size_t off, Eigen::Index r) const { return ConstVectorMap(params_.data() + off, r); }

  ConstMatrixMap label_table() const {
    return cmat(off_label_, arch_.label_embed, static_cast<Eigen::Index>(arch_.shape.n_classes));
  }
  ConstMatrixMap cond_table() const { return cmat(off_cond_, arch_.cond_embed, arch_.cond_count + 1); }
  ConstMatrixMap w_in() const { return cmat(off_win_, arch_.hidden, arch_.input_width()); }
  ConstVectorMap b_in() const { return cvec(off_bin_, arch_.hidden); }
  ConstMatrixMap w1(int k) const { return cmat(blocks_[static_cast<std::size_t>(k)].w1, arch_.hidden, arch_.hidden); }
  ConstVectorMap b1(int k) const { return cvec(blocks_[static_cast<std::size_t>(k)].b1, arch_.hidden); }
  ConstMatrixMap w2(int k) const { return cmat(blocks_[static_cast<std::size_t>(k)].w2, arch_.hidden, arch_.hidden); }
  ConstVectorMap b2(int k) const { return cvec(blocks_[static_cast<std::size_t>(k)].b2, arch_.hidden); }
  ConstMatrixMap w_x() const {
    return cmat(off_wx_, static_cast<Eigen::Index>(arch_.shape.n_gauss), arch_.hidden);
  }
  ConstVectorMap b_x() const { return cvec(off_bx_, static_cast<Eigen::Index>(arch_.shape.n_gauss)); }
  ConstMatrixMap w_l() const {
    return cmat(off_wl_, static_cast<Eigen::Index>(arch_.shape.n_cat * arch_.shape.n_classes), arch_.hidden);
  }
  ConstVectorMap b_l() const {
    return cvec(off_bl_, static_cast<Eigen::Index>(arch_.shape.n_cat * arch_.shape.n_classes));
  }

  ArchConfig arch_;
  AlignedVector<Scalar> params_;
  Matrix time_table_;
  std::vector<BlockOffsets> blocks_;
  std::size_t size_label_ = 0, size_cond_ = 0;
  std::size_t off_label_ = 0, off_cond_ = 0, off_win_ = 0, off_bin_ = 0;
  std::size_t off_wx_ = 0, off_bx_ = 0, off_wl_ = 0, off_bl_ = 0;
  std::size_t total_ = 0;
};

}  // namespace gcdiff
