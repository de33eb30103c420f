#pragma once

// Forward and backward passes for every layer the U-Net uses. Each op takes
// and returns Tensor<Scalar>; the float instantiation trains, the double one
// exists for tight finite-difference checks.
//
// Reductions over the batch (weight and bias gradients, the loss) are summed
// in sample order no matter how many threads run, so results do not depend
// on the thread count.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "floeseg/error.hpp"
#include "floeseg/parallel.hpp"
#include "floeseg/rng.hpp"
#include "floeseg/tensor.hpp"

namespace floeseg::nn {

using Index = Eigen::Index;

enum class Padding { Same, None };
enum class Mode { Train, Eval };

template <typename Scalar>
struct ParamGrads {
  Tensor<Scalar> dx;
  Tensor<Scalar> dw;
  Tensor<Scalar> db;
};

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require(bool ok, ErrorCode code, const char* what) {
  if (!ok) throw Error(code, what);
}

inline void require_rank4(const std::vector<Index>& s, const char* what) {
  require(s.size() == 4, ErrorCode::ShapeMismatch, what);
}

/// acc += partial(0) + partial(1) + ... in index order. partials are computed
/// in parallel waves of at most thread_count() items.
template <typename Scalar, typename PartialFn>
void ordered_accumulate(Index n, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& acc, PartialFn&& partial) {
  const Index wave = std::max<Index>(1, thread_count());
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> slots(static_cast<std::size_t>(std::min(wave, n)));
  for (auto& s : slots) s.resize(acc.size());
  for (Index start = 0; start < n; start += wave) {
    const Index count = std::min(wave, n - start);
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t j) {
      partial(start + static_cast<Index>(j), slots[j]);
    });
    for (Index j = 0; j < count; ++j) acc += slots[static_cast<std::size_t>(j)];
  }
}

template <typename Scalar, typename In>
void im2col(const In& x, Index channels, Index h, Index w, Index k, Index pad, Index out_h, Index out_w,
            RowMatrix<Scalar>& col) {
  col.resize(channels * k * k, out_h * out_w);
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* dst = col.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy + ky - pad;
          Scalar* row = dst + oy * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = x.row(c).data() + iy * w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox + kx - pad;
            row[ox] = (ix < 0 || ix >= w) ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename Scalar, typename Out>
void col2im(const RowMatrix<Scalar>& col, Index channels, Index h, Index w, Index k, Index pad, Index out_h,
            Index out_w, Out&& dx) {
  dx.setZero();
  for (Index c = 0; c < channels; ++c) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Scalar* src = col.row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          Scalar* dst = dx.row(c).data() + iy * w;
          const Scalar* row = src + oy * out_w;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  Index batch, in_ch, out_ch, h, w, k, pad, out_h, out_w;
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Padding padding) {
  require_rank4(x.shape(), "conv2d input must be [B,C,H,W]");
  require_rank4(w.shape(), "conv2d kernel must be [Cout,Cin,k,k]");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.out_ch = w.dim(0);
  g.k = w.dim(2);
  require(w.dim(1) == g.in_ch, ErrorCode::ShapeMismatch, "conv2d kernel input channels differ from input");
  require(w.dim(3) == g.k && g.k >= 1 && g.k % 2 == 1, ErrorCode::ShapeMismatch, "conv2d kernel must be square and odd");
  g.pad = padding == Padding::Same ? g.k / 2 : 0;
  g.out_h = g.h + 2 * g.pad - g.k + 1;
  g.out_w = g.w + 2 * g.pad - g.k + 1;
  require(g.out_h >= 1 && g.out_w >= 1, ErrorCode::ShapeMismatch, "conv2d input smaller than kernel");
  return g;
}

}  // namespace detail

/// Cross-correlation y[o] = sum_i x[i] * w[o,i] + b[o].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Padding padding = Padding::Same) {
  const auto g = detail::conv_geometry(x, w, padding);
  detail::require(b.size() == g.out_ch, ErrorCode::ShapeMismatch, "conv2d bias length differs from Cout");
  Tensor<Scalar> y({g.batch, g.out_ch, g.out_h, g.out_w});
  const typename Tensor<Scalar>::ConstMatrixMap wm(w.data(), g.out_ch, g.in_ch * g.k * g.k);
  const auto bias = b.values();
  parallel_for(static_cast<std::size_t>(g.batch), [&](std::size_t bi) {
    const auto xs = x.sample(static_cast<Index>(bi));
    auto ys = y.sample(static_cast<Index>(bi));
    if (g.k == 1) {
      ys.noalias() = wm * xs;
    } else {
      detail::RowMatrix<Scalar> col;
      detail::im2col<Scalar>(xs, g.in_ch, g.h, g.w, g.k, g.pad, g.out_h, g.out_w, col);
      ys.noalias() = wm * col;
    }
    ys.colwise() += bias;
  });
  return y;
}

template <typename Scalar>
ParamGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& dy,
                                   Padding padding = Padding::Same, bool need_dx = true) {
  const auto g = detail::conv_geometry(x, w, padding);
  detail::require(dy.shape() == std::vector<Index>{g.batch, g.out_ch, g.out_h, g.out_w}, ErrorCode::ShapeMismatch,
                  "conv2d_backward gradient shape differs from output shape");
  const Index kk = g.in_ch * g.k * g.k;
  const typename Tensor<Scalar>::ConstMatrixMap wm(w.data(), g.out_ch, kk);

  ParamGrads<Scalar> out;
  if (need_dx) out.dx = Tensor<Scalar>(x.shape());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(g.out_ch * kk + g.out_ch);

  detail::ordered_accumulate<Scalar>(g.batch, acc, [&](Index bi, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& part) {
    const auto xs = x.sample(bi);
    const auto dys = dy.sample(bi);
    Eigen::Map<detail::RowMatrix<Scalar>> dw(part.data(), g.out_ch, kk);
    if (g.k == 1) {
      dw.noalias() = dys * xs.transpose();
      if (need_dx) out.dx.sample(bi).noalias() = wm.transpose() * dys;
    } else {
      detail::RowMatrix<Scalar> col;
      detail::im2col<Scalar>(xs, g.in_ch, g.h, g.w, g.k, g.pad, g.out_h, g.out_w, col);
      dw.noalias() = dys * col.transpose();
      if (need_dx) {
        detail::RowMatrix<Scalar> dcol = wm.transpose() * dys;
        detail::col2im<Scalar>(dcol, g.in_ch, g.h, g.w, g.k, g.pad, g.out_h, g.out_w, out.dx.sample(bi));
      }
    }
    part.tail(g.out_ch) = dys.rowwise().sum();
  });

  out.dw = Tensor<Scalar>(w.shape(), acc.head(g.out_ch * kk));
  out.db = Tensor<Scalar>({g.out_ch}, acc.tail(g.out_ch));
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.values().cwiseMax(Scalar(0)));
}

/// Gradient through relu. `activation` may be either the input or the output
/// of relu: both are positive exactly where the unit is active.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& activation, const Tensor<Scalar>& dy) {
  detail::require(activation.shape() == dy.shape(), ErrorCode::ShapeMismatch, "relu_backward shape mismatch");
  return Tensor<Scalar>(dy.shape(),
                        (activation.values().array() > Scalar(0)).select(dy.values(), Scalar(0)).matrix());
}

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> y;
  /// Position 0..3 of the winner inside each 2x2 window (row-major).
  std::vector<std::uint8_t> argmax;
};

template <typename Scalar>
PoolResult<Scalar> maxpool2(const Tensor<Scalar>& x) {
  detail::require_rank4(x.shape(), "maxpool2 input must be [B,C,H,W]");
  const Index h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw Error(ErrorCode::OddDimensions, "maxpool2 needs even H and W");
  const Index planes = x.dim(0) * x.dim(1);
  const Index oh = h / 2, ow = w / 2;
  PoolResult<Scalar> r{Tensor<Scalar>({x.dim(0), x.dim(1), oh, ow}),
                       std::vector<std::uint8_t>(static_cast<std::size_t>(planes * oh * ow))};
  parallel_for(static_cast<std::size_t>(x.dim(0)), [&](std::size_t bi) {
    for (Index c = 0; c < x.dim(1); ++c) {
      const Index p = static_cast<Index>(bi) * x.dim(1) + c;
      const Scalar* src = x.data() + p * h * w;
      Scalar* dst = r.y.data() + p * oh * ow;
      std::uint8_t* arg = r.argmax.data() + p * oh * ow;
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          const Scalar* base = src + 2 * oy * w + 2 * ox;
          const Scalar v[4] = {base[0], base[1], base[w], base[w + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t q = 1; q < 4; ++q) {
            if (v[q] > v[best]) best = q;
          }
          dst[oy * ow + ox] = v[best];
          arg[oy * ow + ox] = best;
        }
      }
    }
  });
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Tensor<Scalar>& dy, const std::vector<std::uint8_t>& argmax,
                                 const std::vector<Index>& input_shape) {
  detail::require_rank4(input_shape, "maxpool2_backward input shape must be rank 4");
  const Index h = input_shape[2], w = input_shape[3];
  const Index oh = h / 2, ow = w / 2;
  detail::require(dy.shape() == std::vector<Index>{input_shape[0], input_shape[1], oh, ow} &&
                      argmax.size() == static_cast<std::size_t>(dy.size()),
                  ErrorCode::ShapeMismatch, "maxpool2_backward shape mismatch");
  Tensor<Scalar> dx(input_shape);
  const Index planes = input_shape[0] * input_shape[1];
  for (Index p = 0; p < planes; ++p) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Index o = p * oh * ow + oy * ow + ox;
        const std::uint8_t q = argmax[static_cast<std::size_t>(o)];
        dx[p * h * w + (2 * oy + q / 2) * w + 2 * ox + q % 2] += dy[o];
      }
    }
  }
  return dx;
}

/// Transposed convolution with kernel 2 and stride 2; each input pixel paints
/// a disjoint 2x2 block. Kernel layout [Cin, Cout, 2, 2].
template <typename Scalar>
Tensor<Scalar> upconv2(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  detail::require_rank4(x.shape(), "upconv2 input must be [B,C,H,W]");
  detail::require(w.rank() == 4 && w.dim(0) == x.dim(1) && w.dim(2) == 2 && w.dim(3) == 2, ErrorCode::ShapeMismatch,
                  "upconv2 kernel must be [Cin,Cout,2,2]");
  const Index cin = x.dim(1), cout = w.dim(1), h = x.dim(2), wd = x.dim(3);
  detail::require(b.size() == cout, ErrorCode::ShapeMismatch, "upconv2 bias length differs from Cout");
  Tensor<Scalar> y({x.dim(0), cout, 2 * h, 2 * wd});
  const typename Tensor<Scalar>::ConstMatrixMap wm(w.data(), cin, cout * 4);
  parallel_for(static_cast<std::size_t>(x.dim(0)), [&](std::size_t bi) {
    const detail::RowMatrix<Scalar> t = wm.transpose() * x.sample(static_cast<Index>(bi));
    Scalar* dst = y.data() + static_cast<Index>(bi) * cout * 4 * h * wd;
    for (Index co = 0; co < cout; ++co) {
      for (Index q = 0; q < 4; ++q) {
        const Scalar* row = t.row(co * 4 + q).data();
        const Index dy = q / 2, dx = q % 2;
        for (Index i = 0; i < h; ++i) {
          Scalar* out = dst + (co * 2 * h + 2 * i + dy) * 2 * wd + dx;
          for (Index j = 0; j < wd; ++j) out[2 * j] = row[i * wd + j] + b[co];
        }
      }
    }
  });
  return y;
}

template <typename Scalar>
ParamGrads<Scalar> upconv2_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& dy) {
  const Index batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index cout = w.dim(1);
  detail::require(dy.shape() == std::vector<Index>{batch, cout, 2 * h, 2 * wd}, ErrorCode::ShapeMismatch,
                  "upconv2_backward gradient shape differs from output shape");
  const typename Tensor<Scalar>::ConstMatrixMap wm(w.data(), cin, cout * 4);
  ParamGrads<Scalar> out;
  out.dx = Tensor<Scalar>(x.shape());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(cin * cout * 4 + cout);
  detail::ordered_accumulate<Scalar>(batch, acc, [&](Index bi, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& part) {
    detail::RowMatrix<Scalar> t(cout * 4, h * wd);
    const Scalar* src = dy.data() + bi * cout * 4 * h * wd;
    for (Index co = 0; co < cout; ++co) {
      for (Index q = 0; q < 4; ++q) {
        Scalar* row = t.row(co * 4 + q).data();
        const Index oy = q / 2, ox = q % 2;
        for (Index i = 0; i < h; ++i) {
          const Scalar* in = src + (co * 2 * h + 2 * i + oy) * 2 * wd + ox;
          for (Index j = 0; j < wd; ++j) row[i * wd + j] = in[2 * j];
        }
      }
    }
    const auto xs = x.sample(bi);
    out.dx.sample(bi).noalias() = wm * t;
    Eigen::Map<detail::RowMatrix<Scalar>> dw(part.data(), cin, cout * 4);
    dw.noalias() = xs * t.transpose();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sums = t.rowwise().sum();
    for (Index co = 0; co < cout; ++co) {
      part[cin * cout * 4 + co] = sums.segment(co * 4, 4).sum();
    }
  });
  out.dw = Tensor<Scalar>(w.shape(), acc.head(cin * cout * 4));
  out.db = Tensor<Scalar>({cout}, acc.tail(cout));
  return out;
}

/// Channel-axis concatenation.
template <typename Scalar>
Tensor<Scalar> concat(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_rank4(a.shape(), "concat operands must be rank 4");
  detail::require_rank4(b.shape(), "concat operands must be rank 4");
  detail::require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3), ErrorCode::ShapeMismatch,
                  "concat operands differ in batch or spatial size");
  const Index c1 = a.dim(1), c2 = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor<Scalar> y({a.dim(0), c1 + c2, a.dim(2), a.dim(3)});
  for (Index bi = 0; bi < a.dim(0); ++bi) {
    y.values().segment(bi * (c1 + c2) * hw, c1 * hw) = a.values().segment(bi * c1 * hw, c1 * hw);
    y.values().segment((bi * (c1 + c2) + c1) * hw, c2 * hw) = b.values().segment(bi * c2 * hw, c2 * hw);
  }
  return y;
}

/// Inverse of concat: splits channels into [0, first) and [first, C).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> split_channels(const Tensor<Scalar>& y, Index first) {
  detail::require_rank4(y.shape(), "split operand must be rank 4");
  detail::require(first >= 0 && first <= y.dim(1), ErrorCode::ShapeMismatch, "split point outside channel range");
  const Index c = y.dim(1), c2 = c - first, hw = y.dim(2) * y.dim(3);
  Tensor<Scalar> a({y.dim(0), first, y.dim(2), y.dim(3)});
  Tensor<Scalar> b({y.dim(0), c2, y.dim(2), y.dim(3)});
  for (Index bi = 0; bi < y.dim(0); ++bi) {
    a.values().segment(bi * first * hw, first * hw) = y.values().segment(bi * c * hw, first * hw);
    b.values().segment(bi * c2 * hw, c2 * hw) = y.values().segment((bi * c + first) * hw, c2 * hw);
  }
  return {std::move(a), std::move(b)};
}

/// Crop step of the skip connection. With same-padding the encoder and
/// decoder maps always agree, so this only asserts that.
template <typename Scalar>
const Tensor<Scalar>& crop_to(const Tensor<Scalar>& skip, const Tensor<Scalar>& like) {
  detail::require(skip.dim(2) == like.dim(2) && skip.dim(3) == like.dim(3), ErrorCode::ShapeMismatch,
                  "skip connection spatial size differs from decoder map");
  return skip;
}

template <typename Scalar>
struct DropoutResult {
  Tensor<Scalar> y;
  /// Per-unit multiplier: 0 for dropped units, 1/(1-rate) for survivors.
  /// Empty in eval mode or at rate 0 (identity).
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale;
};

/// Inverted dropout. The mask of sample b is drawn from the stream
/// derive_seed(seed, {b}), so it does not depend on scheduling.
template <typename Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& x, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::BadRate, "dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return {x, {}};
  DropoutResult<Scalar> r{Tensor<Scalar>(x.shape()), Eigen::Matrix<Scalar, Eigen::Dynamic, 1>(x.size())};
  const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
  const Index batch = x.rank() > 0 ? x.dim(0) : 1;
  const Index per = batch > 0 ? x.size() / batch : 0;
  parallel_for(static_cast<std::size_t>(batch), [&](std::size_t bi) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(bi)}));
    std::bernoulli_distribution drop(rate);
    const Index off = static_cast<Index>(bi) * per;
    for (Index i = 0; i < per; ++i) {
      const Scalar s = drop(rng) ? Scalar(0) : keep_scale;
      r.scale[off + i] = s;
      r.y[off + i] = x[off + i] * s;
    }
  });
  return r;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& dy, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& scale) {
  if (scale.size() == 0) return dy;
  detail::require(scale.size() == dy.size(), ErrorCode::ShapeMismatch, "dropout mask size differs from gradient");
  return Tensor<Scalar>(dy.shape(), dy.values().cwiseProduct(scale));
}

/// Per-pixel softmax over the class axis of [B,K,H,W] logits.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& logits) {
  detail::require_rank4(logits.shape(), "softmax input must be [B,K,H,W]");
  Tensor<Scalar> p(logits.shape());
  const Index k = logits.dim(1);
  for (Index bi = 0; bi < logits.dim(0); ++bi) {
    const auto z = logits.sample(bi);
    auto ps = p.sample(bi);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mx = z.colwise().maxCoeff();
    ps = (z.rowwise() - mx).array().exp().matrix();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> denom = ps.colwise().sum();
    for (Index c = 0; c < k; ++c) ps.row(c).array() /= denom.array();
  }
  return p;
}

template <typename Scalar>
struct LossResult {
  double loss = 0.0;
  Tensor<Scalar> grad;
};

/// Mean categorical cross-entropy over all pixels of the batch, with the
/// gradient (p - t) / (B*H*W).
template <typename Scalar>
LossResult<Scalar> softmax_ce(const Tensor<Scalar>& logits, const Tensor<Scalar>& target) {
  detail::require(logits.shape() == target.shape(), ErrorCode::ShapeMismatch, "logits and target shapes differ");
  LossResult<Scalar> r{0.0, softmax(logits)};
  const Index k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  const double n = static_cast<double>(logits.dim(0) * hw);
  double total = 0.0;
  for (Index bi = 0; bi < logits.dim(0); ++bi) {
    const auto z = logits.sample(bi);
    const auto t = target.sample(bi);
    for (Index px = 0; px < hw; ++px) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(z(c, px)));
      double sum = 0.0;
      for (Index c = 0; c < k; ++c) sum += std::exp(static_cast<double>(z(c, px)) - mx);
      const double log_sum = std::log(sum) + mx;
      for (Index c = 0; c < k; ++c) {
        const double tc = static_cast<double>(t(c, px));
        if (tc != 0.0) total -= tc * (static_cast<double>(z(c, px)) - log_sum);
      }
    }
  }
  r.loss = total / n;
  r.grad.values() = (r.grad.values() - target.values()) / static_cast<Scalar>(n);
  return r;
}

}  // namespace floeseg::nn
