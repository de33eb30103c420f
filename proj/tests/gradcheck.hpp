#pragma once

// Central finite-difference checks for every layer, shared by the unit tests
// and the acceptance binary. Each check projects the layer output onto a fixed
// random tensor r, so the scalar probe is L(x) = <f(x), r> and the analytic
// gradient is the layer's backward pass fed with dy = r.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "floeseg/layers.hpp"

namespace floeseg::gradcheck {

using Index = Eigen::Index;
using Gen = std::mt19937_64;

template <typename S>
Tensor<S> random_tensor(std::vector<Index> shape, Gen& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(d(rng));
  return t;
}

// Values bounded away from zero so relu never crosses its kink under +-h.
template <typename S>
Tensor<S> away_from_zero(std::vector<Index> shape, Gen& rng) {
  auto t = random_tensor<S>(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (Index i = 0; i < t.size(); ++i) {
    if (sign(rng)) t[i] = -t[i];
  }
  return t;
}

// Distinct values 0.05 apart in random order so no pooling window has a
// near tie under +-h.
template <typename S>
Tensor<S> spaced(std::vector<Index> shape, Gen& rng) {
  Tensor<S> t(std::move(shape));
  std::vector<Index> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (Index i = 0; i < t.size(); ++i) t[order[static_cast<std::size_t>(i)]] = static_cast<S>(0.05 * static_cast<double>(i) - 1.0);
  return t;
}

template <typename S>
double dot(const Tensor<S>& a, const Tensor<S>& b) {
  double s = 0.0;
  for (Index i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

// ||analytic - numeric|| / max(||analytic||, ||numeric||), with the numeric
// gradient of `probe` taken w.r.t. every entry of `param`.
template <typename S>
double relative_error(Tensor<S>& param, const Tensor<S>& analytic, const std::function<double()>& probe, double h) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (Index i = 0; i < param.size(); ++i) {
    const S saved = param[i];
    param[i] = static_cast<S>(static_cast<double>(saved) + h);
    const double up = probe();
    param[i] = static_cast<S>(static_cast<double>(saved) - h);
    const double down = probe();
    param[i] = saved;
    const double num = (up - down) / (2.0 * h);
    const double ana = static_cast<double>(analytic[i]);
    diff += (ana - num) * (ana - num);
    na += ana * ana;
    nn += num * num;
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

inline Index pick(Gen& rng, Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

template <typename S>
double conv(Gen& rng, Index k, double h) {
  const Index b = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const Index hh = pick(rng, k, 6), ww = pick(rng, k, 6);
  auto x = random_tensor<S>({b, cin, hh, ww}, rng);
  auto w = random_tensor<S>({cout, cin, k, k}, rng);
  auto bias = random_tensor<S>({cout}, rng);
  const auto r = random_tensor<S>({b, cout, hh, ww}, rng);
  const auto g = nn::conv2d_backward(x, w, r, nn::Padding::Same);
  auto probe = [&] { return dot(nn::conv2d(x, w, bias, nn::Padding::Same), r); };
  return std::max({relative_error(x, g.dx, probe, h), relative_error(w, g.dw, probe, h), relative_error(bias, g.db, probe, h)});
}

template <typename S>
double relu(Gen& rng, double h) {
  auto x = away_from_zero<S>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
  const auto r = random_tensor<S>(x.shape(), rng);
  const auto dx = nn::relu_backward(x, r);
  return relative_error(x, dx, [&] { return dot(nn::relu(x), r); }, h);
}

template <typename S>
double maxpool(Gen& rng, double h) {
  const std::vector<Index> shape{pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3)};
  auto x = spaced<S>(shape, rng);
  const auto fwd = nn::maxpool2(x);
  const auto r = random_tensor<S>(fwd.y.shape(), rng);
  const auto dx = nn::maxpool2_backward(r, fwd.argmax, x.shape());
  return relative_error(x, dx, [&] { return dot(nn::maxpool2(x).y, r); }, h);
}

template <typename S>
double upconv(Gen& rng, double h) {
  const Index b = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  auto x = random_tensor<S>({b, cin, pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  auto w = random_tensor<S>({cin, cout, 2, 2}, rng);
  auto bias = random_tensor<S>({cout}, rng);
  const auto r = random_tensor<S>({b, cout, 2 * x.dim(2), 2 * x.dim(3)}, rng);
  const auto g = nn::upconv2_backward(x, w, r);
  auto probe = [&] { return dot(nn::upconv2(x, w, bias), r); };
  return std::max({relative_error(x, g.dx, probe, h), relative_error(w, g.dw, probe, h), relative_error(bias, g.db, probe, h)});
}

template <typename S>
double concat(Gen& rng, double h) {
  const Index b = pick(rng, 1, 2), hh = pick(rng, 1, 4), ww = pick(rng, 1, 4);
  auto a = random_tensor<S>({b, pick(rng, 1, 3), hh, ww}, rng);
  auto c = random_tensor<S>({b, pick(rng, 1, 3), hh, ww}, rng);
  const auto r = random_tensor<S>({b, a.dim(1) + c.dim(1), hh, ww}, rng);
  const auto [da, dc] = nn::split_channels(r, a.dim(1));
  auto probe = [&] { return dot(nn::concat(a, c), r); };
  return std::max(relative_error(a, da, probe, h), relative_error(c, dc, probe, h));
}

template <typename S>
double dropout_eval(Gen& rng, double h) {
  auto x = random_tensor<S>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  const double rate = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
  const auto r = random_tensor<S>(x.shape(), rng);
  const auto fwd = nn::dropout(x, rate, nn::Mode::Eval, 7);
  const auto dx = nn::dropout_backward(r, fwd.scale);
  return relative_error(x, dx, [&] { return dot(nn::dropout(x, rate, nn::Mode::Eval, 7).y, r); }, h);
}

// Train-mode dropout with a fixed seed is linear in x.
template <typename S>
double dropout_train(Gen& rng, double h) {
  auto x = random_tensor<S>({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
  const double rate = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
  const auto seed = rng();
  const auto r = random_tensor<S>(x.shape(), rng);
  const auto fwd = nn::dropout(x, rate, nn::Mode::Train, seed);
  const auto dx = nn::dropout_backward(r, fwd.scale);
  return relative_error(x, dx, [&] { return dot(nn::dropout(x, rate, nn::Mode::Train, seed).y, r); }, h);
}

template <typename S>
double softmax_ce(Gen& rng, double h) {
  const Index b = pick(rng, 1, 2), k = pick(rng, 2, 4), hh = pick(rng, 1, 4), ww = pick(rng, 1, 4);
  auto logits = random_tensor<S>({b, k, hh, ww}, rng, -2.0, 2.0);
  Tensor<S> target({b, k, hh, ww});
  for (Index bi = 0; bi < b; ++bi)
    for (Index y = 0; y < hh; ++y)
      for (Index x = 0; x < ww; ++x) target.at(bi, pick(rng, 0, k - 1), y, x) = S(1);
  const auto res = nn::softmax_ce(logits, target);
  return relative_error(logits, res.grad, [&] { return nn::softmax_ce(logits, target).loss; }, h);
}

struct Check {
  std::string layer;
  std::function<double(Gen&)> run;
};

// The full layer suite at step h for scalar type S.
template <typename S>
std::vector<Check> suite(double h) {
  return {
      {"conv3x3", [h](Gen& g) { return conv<S>(g, 3, h); }},
      {"conv1x1", [h](Gen& g) { return conv<S>(g, 1, h); }},
      {"relu", [h](Gen& g) { return relu<S>(g, h); }},
      {"maxpool2", [h](Gen& g) { return maxpool<S>(g, h); }},
      {"upconv2", [h](Gen& g) { return upconv<S>(g, h); }},
      {"concat", [h](Gen& g) { return concat<S>(g, h); }},
      {"dropout_eval", [h](Gen& g) { return dropout_eval<S>(g, h); }},
      {"dropout_train", [h](Gen& g) { return dropout_train<S>(g, h); }},
      {"softmax_ce", [h](Gen& g) { return softmax_ce<S>(g, h); }},
  };
}

// Worst relative error of one check over `shapes` random shapes.
inline double worst(const Check& c, int shapes, std::uint64_t seed) {
  Gen rng(seed);
  double w = 0.0;
  for (int i = 0; i < shapes; ++i) w = std::max(w, c.run(rng));
  return w;
}

}  // namespace floeseg::gradcheck
