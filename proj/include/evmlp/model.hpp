#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evmlp/common.hpp"
#include "evmlp/config.hpp"
#include "evmlp/numerics.hpp"

namespace evmlp {

enum class RunMode { inference, training };

// expand (d_in → d_in·α) → GELU → optional dropout → project (→ d_in) →
// residual add → LayerNorm.
template <typename S>
struct InvertedResidualBottleneck {
  DenseLayer<S> expand;
  DenseLayer<S> project;
  LayerNormParams<S> norm;
  double dropout_p = 0.0;
};

// One stage's weights: a mixing dense layer followed by n bottlenecks, all
// applied per patch.
template <typename S>
struct BuildingBlock {
  DenseLayer<S> mixer;
  std::vector<InvertedResidualBottleneck<S>> bottlenecks;
};

template <typename S>
struct Network {
  NetworkConfig config;
  std::vector<BuildingBlock<S>> stages;
  DenseLayer<S> head;
};

struct ForwardOptions {
  int threads = 1;
  MacCounter* macs = nullptr;
  Rng* dropout_rng = nullptr;  // required for training mode when dropout is active
};

enum class ParamKind { weight, bias, norm_gamma, norm_beta };

namespace detail {

template <typename Net, typename Fn>
void for_each_param_impl(Net& net, Fn&& fn) {
  auto dense = [&fn](const std::string& prefix, auto& layer) {
    fn(prefix + ".weight", ParamKind::weight, layer.weights,
       std::vector<int>{layer.out_dim, layer.in_dim});
    fn(prefix + ".bias", ParamKind::bias, layer.bias,
       std::vector<int>{layer.out_dim});
  };
  for (std::size_t l = 0; l < net.stages.size(); ++l) {
    const std::string sp = "stage" + std::to_string(l + 1);
    auto& blk = net.stages[l];
    dense(sp + ".mixer", blk.mixer);
    for (std::size_t i = 0; i < blk.bottlenecks.size(); ++i) {
      const std::string bp = sp + ".bn" + std::to_string(i + 1);
      auto& bn = blk.bottlenecks[i];
      dense(bp + ".expand", bn.expand);
      dense(bp + ".project", bn.project);
      fn(bp + ".norm.gamma", ParamKind::norm_gamma, bn.norm.gamma,
         std::vector<int>{bn.norm.dim});
      fn(bp + ".norm.beta", ParamKind::norm_beta, bn.norm.beta,
         std::vector<int>{bn.norm.dim});
    }
  }
  dense("head", net.head);
}

}  // namespace detail

// Visits every parameter tensor in canonical order (stage1.mixer.weight,
// stage1.mixer.bias, stage1.bn1.expand.weight, ..., head.weight, head.bias).
// This order fixes weight-file layout, init order and gradient layout.
template <typename S, typename Fn>
void for_each_param(Network<S>& net, Fn&& fn) {
  detail::for_each_param_impl(net, std::forward<Fn>(fn));
}

template <typename S, typename Fn>
void for_each_param(const Network<S>& net, Fn&& fn) {
  detail::for_each_param_impl(net, std::forward<Fn>(fn));
}

// Allocates all layers at their configured shapes, zero-filled (gamma = 1).
template <typename S>
Network<S> make_network_shell(const NetworkConfig& cfg) {
  validate_config(cfg);
  Network<S> net;
  net.config = cfg;
  net.stages.reserve(cfg.stages.size());
  for (std::size_t l = 0; l < cfg.stages.size(); ++l) {
    const StageConfig& st = cfg.stages[l];
    BuildingBlock<S> blk;
    blk.mixer = DenseLayer<S>(stage_patch_dim(cfg, l), st.out_dim);
    blk.bottlenecks.reserve(static_cast<std::size_t>(st.bottlenecks));
    for (int i = 0; i < st.bottlenecks; ++i) {
      InvertedResidualBottleneck<S> bn;
      bn.expand = DenseLayer<S>(st.out_dim, st.out_dim * st.expansion);
      bn.project = DenseLayer<S>(st.out_dim * st.expansion, st.out_dim);
      bn.norm = LayerNormParams<S>(st.out_dim);
      bn.dropout_p = st.dropout_p;
      blk.bottlenecks.push_back(std::move(bn));
    }
    net.stages.push_back(std::move(blk));
  }
  net.head = DenseLayer<S>(cfg.stages.back().out_dim, cfg.num_classes);
  return net;
}

// Deterministic seeded initialization: dense weights and biases uniform in
// ±sqrt(1/in_dim), gamma = 1, beta = 0. Same seed + config gives bit-identical
// weights.
template <typename S>
Network<S> build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  Network<S> net = make_network_shell<S>(cfg);
  Rng rng(seed);
  // Walk layers in the canonical parameter order; the bias bound reuses the
  // owning layer's in_dim.
  auto init_dense = [&rng](DenseLayer<S>& layer) {
    const double bound = std::sqrt(1.0 / layer.in_dim);
    for (S& w : layer.weights) w = static_cast<S>(rng.uniform(-bound, bound));
    for (S& b : layer.bias) b = static_cast<S>(rng.uniform(-bound, bound));
  };
  for (auto& blk : net.stages) {
    init_dense(blk.mixer);
    for (auto& bn : blk.bottlenecks) {
      init_dense(bn.expand);
      init_dense(bn.project);
      // gamma/beta already 1/0 from the shell
    }
  }
  init_dense(net.head);
  return net;
}

namespace detail {

// Dropout scale per element: 0 with probability p, 1/(1-p) otherwise.
template <typename S>
inline S dropout_scale(double p, Rng& rng) {
  return rng.next_unit() < p ? S(0) : static_cast<S>(1.0 / (1.0 - p));
}

template <typename S>
inline void bottleneck_forward_into(const InvertedResidualBottleneck<S>& bn,
                                    const S* x, S* y, std::vector<S>& expanded,
                                    RunMode mode, Rng* rng, MacCounter* macs) {
  const int d_in = bn.expand.in_dim;
  const int d_out = bn.expand.out_dim;
  expanded.resize(static_cast<std::size_t>(d_out));
  dense_forward_into(bn.expand, x, expanded.data(), macs);
  for (int i = 0; i < d_out; ++i) expanded[i] = gelu(expanded[i]);
  if (mode == RunMode::training && bn.dropout_p > 0.0) {
    check_data(rng != nullptr,
               "bottleneck_forward: training mode with dropout requires an rng");
    for (int i = 0; i < d_out; ++i) {
      expanded[i] *= dropout_scale<S>(bn.dropout_p, *rng);
    }
  }
  // y holds project(act) first, then the residual sum, then the norm.
  dense_forward_into(bn.project, expanded.data(), y, macs);
  for (int i = 0; i < d_in; ++i) y[i] += x[i];
  layer_norm_into(bn.norm, y, y);
}

}  // namespace detail

// y = layer_norm(x + project(dropout(gelu(expand(x))))). Dropout is the
// identity in inference mode.
template <typename S>
std::vector<S> bottleneck_forward(const InvertedResidualBottleneck<S>& bn,
                                  const std::vector<S>& x, RunMode mode,
                                  Rng* rng = nullptr, MacCounter* macs = nullptr) {
  check_data(static_cast<int>(x.size()) == bn.expand.in_dim,
             "bottleneck_forward: input size " + std::to_string(x.size()) +
                 " does not match d_in " + std::to_string(bn.expand.in_dim));
  std::vector<S> y(x.size());
  std::vector<S> scratch;
  detail::bottleneck_forward_into(bn, x.data(), y.data(), scratch, mode, rng, macs);
  return y;
}

namespace detail {

template <typename S>
inline void block_forward_into(const BuildingBlock<S>& blk, const S* patch, S* out,
                               std::vector<S>& scratch, RunMode mode, Rng* rng,
                               MacCounter* macs) {
  dense_forward_into(blk.mixer, patch, out, macs);
  for (const auto& bn : blk.bottlenecks) {
    bottleneck_forward_into(bn, out, out, scratch, mode, rng, macs);
  }
}

}  // namespace detail

// Mixer followed by the n bottlenecks, in order.
template <typename S>
std::vector<S> block_forward(const BuildingBlock<S>& blk, const std::vector<S>& patch,
                             RunMode mode, Rng* rng = nullptr,
                             MacCounter* macs = nullptr) {
  check_data(static_cast<int>(patch.size()) == blk.mixer.in_dim,
             "block_forward: patch size " + std::to_string(patch.size()) +
                 " does not match mixer in_dim " + std::to_string(blk.mixer.in_dim));
  std::vector<S> out(static_cast<std::size_t>(blk.mixer.out_dim));
  std::vector<S> scratch;
  detail::block_forward_into(blk, patch, out.data(), scratch, mode, rng, macs);
  return out;
}

// Patchify, run the block on every patch, and assemble the N×N×C_out output
// where each patch becomes one output pixel. Per-patch results depend only on
// that patch; patch work may run in parallel over disjoint output slots.
template <typename S>
FeatureMap<S> stage_forward(const BuildingBlock<S>& blk, const StageConfig& st,
                            const FeatureMap<S>& map, RunMode mode,
                            const ForwardOptions& opt = {}) {
  check_data(map.height == map.width,
             "stage_forward: expected square map, got " + map.shape_str());
  check_data(map.height % st.patch_side == 0,
             "stage_forward: map side " + std::to_string(map.height) +
                 " not divisible by patch side " + std::to_string(st.patch_side));
  check_data(st.patch_side * st.patch_side * map.channels == blk.mixer.in_dim,
             "stage_forward: patch dim mismatch for map " + map.shape_str());
  const int n = map.height / st.patch_side;
  const int total = n * n;
  FeatureMap<S> out(n, n, blk.mixer.out_dim);

  // Training-mode dropout consumes a serial RNG stream, so it runs on one
  // thread; inference parallelizes over patches.
  const bool training = mode == RunMode::training;
  const int threads = training ? 1 : opt.threads;

  std::vector<MacCounter> patch_macs(opt.macs ? static_cast<std::size_t>(total) : 0);
  parallel_for(total, threads, [&](std::int64_t p) {
    std::vector<S> patch(static_cast<std::size_t>(blk.mixer.in_dim));
    std::vector<S> scratch;
    const int py = static_cast<int>(p) / n;
    const int px = static_cast<int>(p) % n;
    detail::extract_patch(map, st.patch_side, py, px, patch.data());
    MacCounter* mc = opt.macs ? &patch_macs[static_cast<std::size_t>(p)] : nullptr;
    detail::block_forward_into(blk, patch.data(),
                               &out.data[out.index(py, px, 0)], scratch, mode,
                               opt.dropout_rng, mc);
  });
  if (opt.macs) {
    for (const MacCounter& mc : patch_macs) opt.macs->add(mc.macs);
  }
  return out;
}

// Raw [0,1] intensities → optionally normalized network input.
template <typename S>
FeatureMap<S> apply_normalization(const NetworkConfig& cfg, const FeatureMap<S>& frame) {
  if (!cfg.normalization.enabled) return frame;
  FeatureMap<S> out = frame;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < out.channels; ++c) {
        out.at(y, x, c) = static_cast<S>(
            (out.at(y, x, c) - cfg.normalization.mean[static_cast<std::size_t>(c)]) /
            cfg.normalization.std_dev[static_cast<std::size_t>(c)]);
      }
    }
  }
  return out;
}

// Full forward pass: every stage in sequence, then the classifier head on the
// flattened 1×1×C final map. Inference mode is deterministic and
// bit-reproducible across thread counts.
template <typename S>
std::vector<S> network_forward(const Network<S>& net, const FeatureMap<S>& image,
                               RunMode mode, const ForwardOptions& opt = {}) {
  check_data(image.height == net.config.input_side &&
                 image.width == net.config.input_side &&
                 image.channels == net.config.input_channels,
             "network_forward: image " + image.shape_str() + " does not match input " +
                 std::to_string(net.config.input_side) + "x" +
                 std::to_string(net.config.input_side) + "x" +
                 std::to_string(net.config.input_channels));
  FeatureMap<S> map = apply_normalization(net.config, image);
  for (std::size_t l = 0; l < net.stages.size(); ++l) {
    map = stage_forward(net.stages[l], net.config.stages[l], map, mode, opt);
  }
  check_internal(map.height == 1 && map.width == 1,
                 "network_forward: final map is not 1x1");
  return dense_forward(net.head, map.data, opt.macs);
}

struct ParamCounts {
  std::vector<std::int64_t> per_stage;
  std::int64_t head = 0;
  std::int64_t total = 0;
};

// Counts every weight, bias, gamma and beta scalar of the built network.
template <typename S>
ParamCounts count_params(const Network<S>& net) {
  ParamCounts counts;
  counts.per_stage.assign(net.stages.size(), 0);
  for (std::size_t l = 0; l < net.stages.size(); ++l) {
    const auto& blk = net.stages[l];
    std::int64_t c = static_cast<std::int64_t>(blk.mixer.weights.size()) +
                     static_cast<std::int64_t>(blk.mixer.bias.size());
    for (const auto& bn : blk.bottlenecks) {
      c += static_cast<std::int64_t>(bn.expand.weights.size()) +
           static_cast<std::int64_t>(bn.expand.bias.size()) +
           static_cast<std::int64_t>(bn.project.weights.size()) +
           static_cast<std::int64_t>(bn.project.bias.size()) +
           static_cast<std::int64_t>(bn.norm.gamma.size()) +
           static_cast<std::int64_t>(bn.norm.beta.size());
    }
    counts.per_stage[l] = c;
    counts.total += c;
  }
  counts.head = static_cast<std::int64_t>(net.head.weights.size()) +
                static_cast<std::int64_t>(net.head.bias.size());
  counts.total += counts.head;
  return counts;
}

// argmax with index tie-break, shared by classify and match-rate logic.
template <typename S>
int argmax_index(const std::vector<S>& v) {
  check_data(!v.empty(), "argmax of empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace evmlp
