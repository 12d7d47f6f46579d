#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "evmlp/common.hpp"

namespace evmlp {

// Dense H×W×C grid of scalars, row-major (row, col, channel).
template <typename S>
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<S> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, S(0)) {}

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  S& at(int y, int x, int c) { return data[index(y, x, c)]; }
  const S& at(int y, int x, int c) const { return data[index(y, x, c)]; }

  bool same_shape(const FeatureMap& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::string shape_str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

// N×N flattened patches of a square FeatureMap. Patch p (row-major over the
// patch grid) holds the P×P×C sub-block flattened in (row, col, channel)
// order; patches are stored contiguously.
template <typename S>
struct PatchGrid {
  int n = 0;          // patches per side
  int patch_dim = 0;  // scalars per flattened patch
  std::vector<S> patches;

  PatchGrid() = default;
  PatchGrid(int n_, int dim)
      : n(n_), patch_dim(dim),
        patches(static_cast<std::size_t>(n_) * n_ * dim, S(0)) {}

  S* patch(int p) { return patches.data() + static_cast<std::size_t>(p) * patch_dim; }
  const S* patch(int p) const {
    return patches.data() + static_cast<std::size_t>(p) * patch_dim;
  }
  int count() const { return n * n; }
};

template <typename S>
struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<S> weights;  // out_dim × in_dim, row-major
  std::vector<S> bias;     // out_dim

  DenseLayer() = default;
  DenseLayer(int in, int out)
      : in_dim(in), out_dim(out),
        weights(static_cast<std::size_t>(in) * out, S(0)),
        bias(static_cast<std::size_t>(out), S(0)) {}

  const S* row(int i) const {
    return weights.data() + static_cast<std::size_t>(i) * in_dim;
  }
  std::uint64_t mac_cost() const {
    return static_cast<std::uint64_t>(in_dim) * static_cast<std::uint64_t>(out_dim);
  }
};

template <typename S>
struct LayerNormParams {
  int dim = 0;
  std::vector<S> gamma;
  std::vector<S> beta;
  S epsilon = S(1e-5);

  LayerNormParams() = default;
  explicit LayerNormParams(int d)
      : dim(d), gamma(static_cast<std::size_t>(d), S(1)),
        beta(static_cast<std::size_t>(d), S(0)) {}
};

namespace detail {

// Blocked dot product with a fixed summation order, so results are
// bit-reproducible regardless of call site or thread count. The 8-lane
// block keeps the loop vectorizable without -ffast-math.
template <typename S>
inline S dot(const S* w, const S* x, int n) {
  S acc[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += w[i + k] * x[i + k];
  }
  S tail = S(0);
  for (; i < n; ++i) tail += w[i] * x[i];
  return (((acc[0] + acc[1]) + (acc[2] + acc[3])) +
          ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail;
}

}  // namespace detail

// y[i] = Σ_j weights[i][j]·x[j] + bias[i]. `x` and `y` must not alias.
template <typename S>
inline void dense_forward_into(const DenseLayer<S>& layer, const S* x, S* y,
                               MacCounter* macs = nullptr) {
  for (int i = 0; i < layer.out_dim; ++i) {
    y[i] = detail::dot(layer.row(i), x, layer.in_dim) + layer.bias[i];
  }
  if (macs) macs->add(layer.mac_cost());
}

template <typename S>
std::vector<S> dense_forward(const DenseLayer<S>& layer, const std::vector<S>& x,
                             MacCounter* macs = nullptr) {
  check_data(static_cast<int>(x.size()) == layer.in_dim,
             "dense_forward: input size " + std::to_string(x.size()) +
                 " does not match layer in_dim " + std::to_string(layer.in_dim));
  std::vector<S> y(static_cast<std::size_t>(layer.out_dim));
  dense_forward_into(layer, x.data(), y.data(), macs);
  return y;
}

// Exact GELU: x·Φ(x) with Φ the standard normal CDF (erf form, not the tanh
// approximation).
template <typename S>
inline S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475244)));
}

// Derivative of the exact GELU: Φ(x) + x·φ(x).
template <typename S>
inline S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475244)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014326779);
  return cdf + x * pdf;
}

// y = gamma ⊙ (x − mean) / sqrt(var + eps) + beta, population (1/dim)
// variance. Constant inputs come out as beta thanks to epsilon.
template <typename S>
inline void layer_norm_into(const LayerNormParams<S>& params, const S* x, S* y) {
  const int d = params.dim;
  S mean = S(0);
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= S(d);
  S var = S(0);
  for (int i = 0; i < d; ++i) {
    const S c = x[i] - mean;
    var += c * c;
  }
  var /= S(d);
  const S inv_std = S(1) / std::sqrt(var + params.epsilon);
  for (int i = 0; i < d; ++i) {
    y[i] = params.gamma[i] * ((x[i] - mean) * inv_std) + params.beta[i];
  }
}

template <typename S>
std::vector<S> layer_norm(const LayerNormParams<S>& params, const std::vector<S>& x) {
  check_data(static_cast<int>(x.size()) == params.dim,
             "layer_norm: input size " + std::to_string(x.size()) +
                 " does not match dim " + std::to_string(params.dim));
  check_data(params.dim >= 1, "layer_norm: dim must be >= 1");
  std::vector<S> y(x.size());
  layer_norm_into(params, x.data(), y.data());
  return y;
}

// Non-overlapping P×P mean pooling of a single-channel grid. Each window is
// summed first and scaled once; with nonnegative input an output cell is
// nonzero iff some window element is nonzero.
template <typename S>
FeatureMap<S> avg_pool_2d(const FeatureMap<S>& map, int stride) {
  check_data(map.channels == 1, "avg_pool_2d: expected single-channel grid, got " +
                                    map.shape_str());
  check_data(stride >= 1, "avg_pool_2d: stride must be >= 1");
  check_data(map.height % stride == 0 && map.width % stride == 0,
             "avg_pool_2d: grid " + map.shape_str() + " not divisible by stride " +
                 std::to_string(stride));
  const int oh = map.height / stride;
  const int ow = map.width / stride;
  FeatureMap<S> out(oh, ow, 1);
  const S inv = S(1) / static_cast<S>(stride * stride);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      S sum = S(0);
      for (int dy = 0; dy < stride; ++dy) {
        for (int dx = 0; dx < stride; ++dx) {
          sum += map.at(oy * stride + dy, ox * stride + dx, 0);
        }
      }
      out.at(oy, ox, 0) = sum * inv;
    }
  }
  return out;
}

namespace detail {

template <typename S>
inline void extract_patch(const FeatureMap<S>& x, int patch_side, int py, int px,
                          S* out) {
  const int c = x.channels;
  const std::size_t row_bytes = static_cast<std::size_t>(patch_side) * c;
  for (int dy = 0; dy < patch_side; ++dy) {
    const S* src = &x.data[x.index(py * patch_side + dy, px * patch_side, 0)];
    std::memcpy(out + static_cast<std::size_t>(dy) * row_bytes, src,
                row_bytes * sizeof(S));
  }
}

}  // namespace detail

// Split a square map into N×N patches of side P, each flattened in
// (row, col, channel) order.
template <typename S>
PatchGrid<S> patchify(const FeatureMap<S>& x, int patch_side) {
  check_data(patch_side >= 1, "patchify: patch side must be >= 1");
  check_data(x.height == x.width,
             "patchify: expected square map, got " + x.shape_str());
  check_data(x.height % patch_side == 0,
             "patchify: map " + x.shape_str() + " not divisible by patch side " +
                 std::to_string(patch_side));
  const int n = x.height / patch_side;
  PatchGrid<S> g(n, patch_side * patch_side * x.channels);
  for (int py = 0; py < n; ++py) {
    for (int px = 0; px < n; ++px) {
      detail::extract_patch(x, patch_side, py, px, g.patch(py * n + px));
    }
  }
  return g;
}

// Exact inverse of patchify under the same ordering. With patch_side = 1 this
// is the inter-stage layout: each processed patch becomes one output pixel.
template <typename S>
FeatureMap<S> unpatchify(const PatchGrid<S>& g, int patch_side, int channels) {
  check_data(patch_side >= 1 && channels >= 1,
             "unpatchify: patch side and channels must be >= 1");
  check_data(g.patch_dim == patch_side * patch_side * channels,
             "unpatchify: patch dim " + std::to_string(g.patch_dim) +
                 " inconsistent with side " + std::to_string(patch_side) +
                 " and channels " + std::to_string(channels));
  const int side = g.n * patch_side;
  FeatureMap<S> x(side, side, channels);
  const std::size_t row_bytes = static_cast<std::size_t>(patch_side) * channels;
  for (int py = 0; py < g.n; ++py) {
    for (int px = 0; px < g.n; ++px) {
      const S* src = g.patch(py * g.n + px);
      for (int dy = 0; dy < patch_side; ++dy) {
        S* dst = &x.data[x.index(py * patch_side + dy, px * patch_side, 0)];
        std::memcpy(dst, src + static_cast<std::size_t>(dy) * row_bytes,
                    row_bytes * sizeof(S));
      }
    }
  }
  return x;
}

}  // namespace evmlp
