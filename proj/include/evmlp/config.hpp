#pragma once

#include <string>
#include <vector>

#include "evmlp/common.hpp"

namespace evmlp {

// One building-block stage: patch side P, expansion factor, output width,
// bottleneck count and dropout probability.
struct StageConfig {
  int patch_side = 1;
  int expansion = 1;
  int out_dim = 1;
  int bottlenecks = 0;
  double dropout_p = 0.0;
};

// Optional per-channel input normalization, applied to network inputs only
// (event detection always runs on raw [0,1] intensities).
struct NormalizationConfig {
  bool enabled = false;
  std::vector<double> mean;
  std::vector<double> std_dev;
};

struct NetworkConfig {
  std::string name;
  int input_side = 0;
  int input_channels = 0;
  int num_classes = 0;
  std::vector<StageConfig> stages;
  NormalizationConfig normalization;
};

// Map side entering stage l (0-based): sides[0] = input_side, and stage l
// consumes sides[l], emits sides[l+1] = sides[l] / P.
inline std::vector<int> stage_input_sides(const NetworkConfig& cfg) {
  std::vector<int> sides;
  sides.reserve(cfg.stages.size() + 1);
  int side = cfg.input_side;
  sides.push_back(side);
  for (const StageConfig& st : cfg.stages) {
    side /= st.patch_side;
    sides.push_back(side);
  }
  return sides;
}

// Channels entering stage l (0-based): the raw image for stage 0, the
// previous stage's out_dim afterwards.
inline int stage_input_channels(const NetworkConfig& cfg, std::size_t l) {
  return l == 0 ? cfg.input_channels
                : cfg.stages[l - 1].out_dim;
}

// Flattened patch dimension consumed by stage l: P² × incoming channels.
inline int stage_patch_dim(const NetworkConfig& cfg, std::size_t l) {
  const int p = cfg.stages[l].patch_side;
  return p * p * stage_input_channels(cfg, l);
}

inline void validate_config(const NetworkConfig& cfg) {
  check_data(cfg.input_side >= 1, "config: input_side must be >= 1");
  check_data(cfg.input_channels >= 1, "config: input_channels must be >= 1");
  check_data(cfg.num_classes >= 1, "config: num_classes must be >= 1");
  check_data(!cfg.stages.empty(), "config: stage list must not be empty");
  int side = cfg.input_side;
  for (std::size_t l = 0; l < cfg.stages.size(); ++l) {
    const StageConfig& st = cfg.stages[l];
    const std::string where = "config: stage " + std::to_string(l + 1);
    check_data(st.patch_side >= 1, where + ": patch_side must be >= 1");
    check_data(st.expansion >= 1, where + ": expansion must be >= 1");
    check_data(st.out_dim >= 1, where + ": out_dim must be >= 1");
    check_data(st.bottlenecks >= 0, where + ": bottlenecks must be >= 0");
    check_data(st.dropout_p >= 0.0 && st.dropout_p < 1.0,
               where + ": dropout_p must be in [0, 1)");
    check_data(side % st.patch_side == 0,
               where + ": incoming side " + std::to_string(side) +
                   " not divisible by patch_side " + std::to_string(st.patch_side));
    side /= st.patch_side;
  }
  check_data(side == 1, "config: final stage must emit a 1x1 map, got side " +
                            std::to_string(side));
  if (cfg.normalization.enabled) {
    check_data(static_cast<int>(cfg.normalization.mean.size()) == cfg.input_channels &&
                   static_cast<int>(cfg.normalization.std_dev.size()) == cfg.input_channels,
               "config: normalization mean/std length must equal input_channels");
    for (double s : cfg.normalization.std_dev) {
      check_data(s > 0.0, "config: normalization std values must be > 0");
    }
  }
}

}  // namespace evmlp
