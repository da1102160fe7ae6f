#pragma once

// Ready-made merge hooks for the encoder.

#include <cstdint>

#include "stim/encoder.hpp"
#include "stim/spatial_merge.hpp"
#include "stim/temporal_merge.hpp"

namespace stim {

struct StimOptions {
    TemporalMergeOptions temporal;
    SpatialMergeOptions spatial;
};

// Temporal and spatial information-mining merges.
MergeHooks stim_hooks(const StimOptions& options = {});

// Control: same token budget, but pairs are drawn at random. Temporal merges
// fuse a random adjacent pair per position with equal weights; spatial
// merges fuse R_S random disjoint position pairs, shared by every frame.
MergeHooks random_hooks(std::uint64_t seed);

}  // namespace stim
