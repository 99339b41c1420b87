#ifndef PHENOFLUX_NETWORK_HPP
#define PHENOFLUX_NETWORK_HPP

#include "phenoflux/core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace phenoflux {

/// Residual CNN over the single-channel (rows x days) input grid. One
/// residual block per entry of `channels`; every block after the first
/// halves both spatial dimensions.
struct NeuralConfig {
  Index input_rows = 120;
  Index input_days = kMetDays;
  std::vector<Index> channels = {16, 32, 48, 64};
  Index kernel = 3;
  Index stem_kernel_rows = 3;
  Index stem_kernel_days = 7;
  Index stem_stride_rows = 4;
  Index stem_stride_days = 8;
  Index hidden = 64;
  Index fusion_dims = 2;  // climate normals: temperature, precipitation
  Index gcc_outputs = kYearDays;
  Index aux_outputs = kAuxIndices * kYearDays;
  Index kndvi_outputs = kKndviStats;

  Index residual_blocks() const { return static_cast<Index>(channels.size()); }
  void validate() const {
    if (channels.empty()) throw Error("network needs at least one residual block");
    for (Index c : channels)
      if (c < 1) throw Error("channel counts must be positive");
    if (input_rows < 1 || input_days < 1 || kernel < 1 || hidden < 1) throw Error("invalid network dimensions");
    if (stem_stride_rows < 1 || stem_stride_days < 1 || stem_kernel_rows < 1 || stem_kernel_days < 1)
      throw Error("invalid stem geometry");
    if (gcc_outputs < 1 || aux_outputs < 0 || kndvi_outputs < 0 || fusion_dims < 0)
      throw Error("invalid head sizes");
  }
};

template <typename Scalar>
struct MultiTaskOutputT {
  VectorX<Scalar> gcc;
  VectorX<Scalar> aux;    // 20 x 365, index-major (index * 365 + day)
  VectorX<Scalar> kndvi;  // mean, std, p50, p75, p90
};
using MultiTaskOutput = MultiTaskOutputT<double>;

namespace detail {

struct ConvShape {
  Index in_c = 0, out_c = 0;
  Index kh = 0, kw = 0, sh = 1, sw = 1, ph = 0, pw = 0;
  Index in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  Index w_off = 0, b_off = 0;

  Index patch() const { return in_c * kh * kw; }
  Index in_pixels() const { return in_h * in_w; }
  Index out_pixels() const { return out_h * out_w; }
};

struct DenseShape {
  Index in = 0, out = 0;
  Index w_off = 0, b_off = 0;
};

// Activations are (pixels x channels), pixel = row * width + day.
template <typename Scalar>
void im2col(const MatrixX<Scalar>& x, const ConvShape& s, MatrixX<Scalar>& cols) {
  cols.setZero(s.out_pixels(), s.patch());
  for (Index c = 0; c < s.in_c; ++c) {
    for (Index i = 0; i < s.kh; ++i) {
      for (Index j = 0; j < s.kw; ++j) {
        Scalar* dst = cols.col((c * s.kh + i) * s.kw + j).data();
        const Scalar* src = x.col(c).data();
        for (Index oh = 0; oh < s.out_h; ++oh) {
          const Index ih = oh * s.sh - s.ph + i;
          if (ih < 0 || ih >= s.in_h) continue;
          for (Index ow = 0; ow < s.out_w; ++ow) {
            const Index iw = ow * s.sw - s.pw + j;
            if (iw < 0 || iw >= s.in_w) continue;
            dst[oh * s.out_w + ow] = src[ih * s.in_w + iw];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const MatrixX<Scalar>& dcols, const ConvShape& s, MatrixX<Scalar>& dx) {
  for (Index c = 0; c < s.in_c; ++c) {
    for (Index i = 0; i < s.kh; ++i) {
      for (Index j = 0; j < s.kw; ++j) {
        const Scalar* src = dcols.col((c * s.kh + i) * s.kw + j).data();
        Scalar* dst = dx.col(c).data();
        for (Index oh = 0; oh < s.out_h; ++oh) {
          const Index ih = oh * s.sh - s.ph + i;
          if (ih < 0 || ih >= s.in_h) continue;
          for (Index ow = 0; ow < s.out_w; ++ow) {
            const Index iw = ow * s.sw - s.pw + j;
            if (iw < 0 || iw >= s.in_w) continue;
            dst[ih * s.in_w + iw] += src[oh * s.out_w + ow];
          }
        }
      }
    }
  }
}

inline Index conv_out(Index in, Index k, Index stride, Index pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace detail

template <typename Scalar>
class ResidualNetwork {
 public:
  using Mat = MatrixX<Scalar>;
  using Vec = VectorX<Scalar>;

  struct BlockTape {
    Mat cols1, act1, cols2, cols_proj, out;
  };
  struct Tape {
    Mat stem_cols;
    Mat stem_out;
    std::vector<BlockTape> blocks;
    Vec fused;
    Vec hidden;
  };

  ResidualNetwork() = default;

  ResidualNetwork(const NeuralConfig& config, std::uint64_t seed) : config_(config) {
    build();
    initialize(seed);
  }

  /// Rebuild the layer geometry for `config` and adopt existing parameters.
  ResidualNetwork(const NeuralConfig& config, Vec parameters) : config_(config) {
    build();
    if (parameters.size() != params_.size()) throw Error("parameter blob does not match network config");
    params_ = std::move(parameters);
  }

  const NeuralConfig& config() const { return config_; }
  Index parameter_count() const { return params_.size(); }
  Vec& parameters() { return params_; }
  const Vec& parameters() const { return params_; }

  /// Offsets of the gcc / aux / kndvi head biases inside the parameter vector.
  Eigen::Ref<Vec> gcc_bias() { return params_.segment(gcc_head_.b_off, gcc_head_.out); }
  Eigen::Ref<Vec> aux_bias() { return params_.segment(aux_head_.b_off, aux_head_.out); }
  Eigen::Ref<Vec> kndvi_bias() { return params_.segment(kndvi_head_.b_off, kndvi_head_.out); }

  MultiTaskOutputT<Scalar> forward(const Mat& input, const Vec& fusion, Tape* tape = nullptr) const {
    if (input.rows() != config_.input_rows || input.cols() != config_.input_days)
      throw Error("network input shape mismatch");
    if (fusion.size() != config_.fusion_dims) throw Error("late-fusion vector size mismatch");
    Tape local;
    Tape& t = tape ? *tape : local;

    const Mat x0 = flatten_input(input);
    detail::im2col(x0, stem_, t.stem_cols);
    t.stem_out = conv_apply(t.stem_cols, stem_);
    relu_inplace(t.stem_out);

    t.blocks.resize(blocks_.size());
    const Mat* a = &t.stem_out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Block& blk = blocks_[b];
      BlockTape& bt = t.blocks[b];
      detail::im2col(*a, blk.conv1, bt.cols1);
      bt.act1 = conv_apply(bt.cols1, blk.conv1);
      relu_inplace(bt.act1);
      detail::im2col(bt.act1, blk.conv2, bt.cols2);
      bt.out = conv_apply(bt.cols2, blk.conv2);
      if (blk.has_proj) {
        detail::im2col(*a, blk.proj, bt.cols_proj);
        bt.out += conv_apply(bt.cols_proj, blk.proj);
      } else {
        bt.out += *a;
      }
      relu_inplace(bt.out);
      a = &bt.out;
    }

    t.fused.resize(pooled_dims_ + config_.fusion_dims);
    t.fused.head(pooled_dims_) = a->colwise().mean().transpose();
    t.fused.tail(config_.fusion_dims) = fusion;
    t.hidden = dense_apply(t.fused, hidden_);
    t.hidden = t.hidden.cwiseMax(Scalar(0));

    MultiTaskOutputT<Scalar> out;
    out.gcc = dense_apply(t.hidden, gcc_head_);
    out.aux = dense_apply(t.hidden, aux_head_);
    out.kndvi = dense_apply(t.hidden, kndvi_head_);
    return out;
  }

  /// Back-propagates output cotangents. Empty cotangent vectors skip their
  /// head. Parameter gradients are accumulated into `param_grad`.
  void backward(const Tape& t, const Vec& d_gcc, const Vec& d_aux, const Vec& d_kndvi, Vec* param_grad,
                Mat* input_grad = nullptr) const {
    Vec scratch;
    if (!param_grad) {
      scratch = Vec::Zero(params_.size());
      param_grad = &scratch;
    }
    Vec& g = *param_grad;
    if (g.size() != params_.size()) g = Vec::Zero(params_.size());

    Vec d_hidden = Vec::Zero(config_.hidden);
    dense_back(t.hidden, d_gcc, gcc_head_, g, d_hidden);
    dense_back(t.hidden, d_aux, aux_head_, g, d_hidden);
    dense_back(t.hidden, d_kndvi, kndvi_head_, g, d_hidden);
    d_hidden = d_hidden.cwiseProduct((t.hidden.array() > Scalar(0)).template cast<Scalar>().matrix());

    Vec d_fused = Vec::Zero(t.fused.size());
    dense_back(t.fused, d_hidden, hidden_, g, d_fused);

    const Mat& last = t.blocks.empty() ? t.stem_out : t.blocks.back().out;
    Mat d_act = Mat::Zero(last.rows(), last.cols());
    d_act.rowwise() = d_fused.head(pooled_dims_).transpose() / static_cast<Scalar>(last.rows());

    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
      const Block& blk = blocks_[bi];
      const BlockTape& bt = t.blocks[bi];
      const Mat& a_in = bi == 0 ? t.stem_out : t.blocks[bi - 1].out;
      d_act.array() *= (bt.out.array() > Scalar(0)).template cast<Scalar>();

      Mat d_in = Mat::Zero(a_in.rows(), a_in.cols());
      if (blk.has_proj) conv_back(bt.cols_proj, d_act, blk.proj, g, d_in);
      else d_in += d_act;

      Mat d_act1 = Mat::Zero(bt.act1.rows(), bt.act1.cols());
      conv_back(bt.cols2, d_act, blk.conv2, g, d_act1);
      d_act1.array() *= (bt.act1.array() > Scalar(0)).template cast<Scalar>();
      conv_back(bt.cols1, d_act1, blk.conv1, g, d_in);
      d_act = std::move(d_in);
    }

    d_act.array() *= (t.stem_out.array() > Scalar(0)).template cast<Scalar>();
    if (input_grad) {
      Mat d_x0 = Mat::Zero(stem_.in_pixels(), 1);
      conv_back(t.stem_cols, d_act, stem_, g, d_x0);
      // pixel = row * days + day, i.e. the column-major storage of a (days x rows) matrix
      const Eigen::Map<const Mat> dt(d_x0.data(), config_.input_days, config_.input_rows);
      *input_grad = dt.transpose();
    } else {
      conv_back_params(t.stem_cols, d_act, stem_, g);
    }
  }

 private:
  struct Block {
    detail::ConvShape conv1, conv2, proj;
    bool has_proj = false;
  };

  Index allocate(Index n) {
    const Index off = next_;
    next_ += n;
    return off;
  }

  detail::ConvShape make_conv(Index in_c, Index out_c, Index in_h, Index in_w, Index kh, Index kw, Index sh, Index sw) {
    detail::ConvShape s;
    s.in_c = in_c;
    s.out_c = out_c;
    s.kh = kh;
    s.kw = kw;
    s.sh = sh;
    s.sw = sw;
    s.ph = kh / 2;
    s.pw = kw / 2;
    s.in_h = in_h;
    s.in_w = in_w;
    s.out_h = detail::conv_out(in_h, kh, sh, s.ph);
    s.out_w = detail::conv_out(in_w, kw, sw, s.pw);
    if (s.out_h < 1 || s.out_w < 1) throw Error("network geometry collapses to an empty feature map");
    s.w_off = allocate(s.patch() * out_c);
    s.b_off = allocate(out_c);
    return s;
  }

  detail::DenseShape make_dense(Index in, Index out) {
    detail::DenseShape d;
    d.in = in;
    d.out = out;
    d.w_off = allocate(in * out);
    d.b_off = allocate(out);
    return d;
  }

  void build() {
    config_.validate();
    next_ = 0;
    blocks_.clear();
    const Index k = config_.kernel;
    stem_ = make_conv(1, config_.channels.front(), config_.input_rows, config_.input_days, config_.stem_kernel_rows,
                      config_.stem_kernel_days, config_.stem_stride_rows, config_.stem_stride_days);
    Index c = stem_.out_c, h = stem_.out_h, w = stem_.out_w;
    for (std::size_t b = 0; b < config_.channels.size(); ++b) {
      const Index out_c = config_.channels[b];
      const Index stride = b == 0 ? 1 : 2;
      Block blk;
      blk.conv1 = make_conv(c, out_c, h, w, k, k, stride, stride);
      blk.conv2 = make_conv(out_c, out_c, blk.conv1.out_h, blk.conv1.out_w, k, k, 1, 1);
      blk.has_proj = stride != 1 || out_c != c;
      if (blk.has_proj) blk.proj = make_conv(c, out_c, h, w, 1, 1, stride, stride);
      c = out_c;
      h = blk.conv1.out_h;
      w = blk.conv1.out_w;
      blocks_.push_back(blk);
    }
    pooled_dims_ = c;
    hidden_ = make_dense(c + config_.fusion_dims, config_.hidden);
    gcc_head_ = make_dense(config_.hidden, config_.gcc_outputs);
    aux_head_ = make_dense(config_.hidden, config_.aux_outputs);
    kndvi_head_ = make_dense(config_.hidden, config_.kndvi_outputs);
    params_ = Vec::Zero(next_);
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](Index off, Index n, double std) {
      for (Index i = 0; i < n; ++i) params_(off + i) = static_cast<Scalar>(std * normal(rng));
    };
    auto conv = [&](const detail::ConvShape& s, double gain) {
      fill(s.w_off, s.patch() * s.out_c, gain * std::sqrt(2.0 / static_cast<double>(s.patch())));
    };
    conv(stem_, 1.0);
    for (const Block& b : blocks_) {
      conv(b.conv1, 1.0);
      conv(b.conv2, 0.1);  // damped residual branch
      if (b.has_proj) conv(b.proj, 1.0);
    }
    fill(hidden_.w_off, hidden_.in * hidden_.out, std::sqrt(2.0 / static_cast<double>(hidden_.in)));
    for (const auto* head : {&gcc_head_, &aux_head_, &kndvi_head_})
      fill(head->w_off, head->in * head->out, 0.1 / std::sqrt(static_cast<double>(head->in)));
  }

  Mat flatten_input(const Mat& input) const {
    const Mat t = input.transpose();
    return Eigen::Map<const Mat>(t.data(), t.size(), 1);
  }

  Eigen::Map<const Mat> weights(const detail::ConvShape& s) const {
    return Eigen::Map<const Mat>(params_.data() + s.w_off, s.patch(), s.out_c);
  }

  Mat conv_apply(const Mat& cols, const detail::ConvShape& s) const {
    Mat out = cols * weights(s);
    out.rowwise() += params_.segment(s.b_off, s.out_c).transpose();
    return out;
  }

  void conv_back_params(const Mat& cols, const Mat& d_out, const detail::ConvShape& s, Vec& g) const {
    Eigen::Map<Mat> dw(g.data() + s.w_off, s.patch(), s.out_c);
    dw.noalias() += cols.transpose() * d_out;
    g.segment(s.b_off, s.out_c) += d_out.colwise().sum().transpose();
  }

  void conv_back(const Mat& cols, const Mat& d_out, const detail::ConvShape& s, Vec& g, Mat& d_in) const {
    conv_back_params(cols, d_out, s, g);
    const Mat d_cols = d_out * weights(s).transpose();
    detail::col2im_add(d_cols, s, d_in);
  }

  Vec dense_apply(const Vec& x, const detail::DenseShape& d) const {
    if (d.out == 0) return Vec();
    const Eigen::Map<const Mat> w(params_.data() + d.w_off, d.out, d.in);
    return w * x + params_.segment(d.b_off, d.out);
  }

  void dense_back(const Vec& x, const Vec& dy, const detail::DenseShape& d, Vec& g, Vec& dx) const {
    if (dy.size() == 0 || d.out == 0) return;
    if (dy.size() != d.out) throw Error("output cotangent size mismatch");
    Eigen::Map<Mat> dw(g.data() + d.w_off, d.out, d.in);
    dw.noalias() += dy * x.transpose();
    g.segment(d.b_off, d.out) += dy;
    const Eigen::Map<const Mat> w(params_.data() + d.w_off, d.out, d.in);
    dx.noalias() += w.transpose() * dy;
  }

  static void relu_inplace(Mat& m) { m = m.cwiseMax(Scalar(0)); }

  NeuralConfig config_;
  Vec params_;
  Index next_ = 0;
  detail::ConvShape stem_;
  std::vector<Block> blocks_;
  Index pooled_dims_ = 0;
  detail::DenseShape hidden_, gcc_head_, aux_head_, kndvi_head_;
};

using Network = ResidualNetwork<double>;

}  // namespace phenoflux

#endif  // PHENOFLUX_NETWORK_HPP
