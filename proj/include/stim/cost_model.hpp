#pragma once

// Analytic FLOPs for divided space-time blocks. One multiply-add counts as two
// FLOPs; patch embedding and the classification head are not counted.
//
// Per block, with n = n_t * n_s and C channels:
//   temporal stage  : QKV + output projections 2 * 4 * n * C^2,
//                     scores and weighted sum  2 * 2 * n_s * n_t^2 * C
//   spatial stage   : same on the frame tokens (CLS adds one token per frame)
//   MLP (4x)        : 2 * 8 * n * C^2
// A merge inside a block shrinks every later stage of that block.

#include <cstdint>
#include <vector>

#include "stim/types.hpp"

namespace stim {

using Flops = std::uint64_t;

struct LayerFlops {
    Flops projection = 0;
    Flops temporal_attention = 0;
    Flops spatial_attention = 0;
    Flops mlp = 0;

    Flops total() const { return projection + temporal_attention + spatial_attention + mlp; }
};

// Block without merging.
LayerFlops layer_flops(int n_t, int n_s, int channels, bool with_cls);

// Block whose temporal merge yields `after_temporal` and spatial merge yields `out`.
LayerFlops layer_flops(GridDims in, GridDims after_temporal, GridDims out, int channels, bool with_cls);

struct LayerCost {
    int layer = 0;
    GridDims input;
    GridDims output;
    LayerFlops flops;
};

struct CostReport {
    std::vector<LayerCost> layers;
    Flops total = 0;
    Flops baseline_total = 0;
    double ratio = 1.0;  // total / baseline_total

    double gflops() const { return static_cast<double>(total) * 1e-9; }
    double baseline_gflops() const { return static_cast<double>(baseline_total) * 1e-9; }
};

CostReport schedule_cost(const ModelConfig& config, const MergeSchedule& schedule);

}  // namespace stim
