#pragma once

// Position-wise adjacent-frame temporal merging with entropy saliency weights.
// Frame indices are 0-based throughout.

#include "stim/encoder.hpp"
#include "stim/types.hpp"

namespace stim {

struct TemporalMergeOptions {
    // Divide the fused pair by the sum of its weights. Off = literal weighted sum.
    bool renormalize = true;
    // Re-derive saliency from the merged attention matrix after every inner
    // iteration instead of once per layer.
    bool recompute_saliency = false;
};

// Cosine similarity between consecutive rows of an n_t x C key matrix.
Vector adjacent_similarities(const Matrix& keys);

// Index of the largest similarity; ties go to the smallest index.
int select_pair(const Vector& sims);

// Min-max scaled negative entropy of each attention row.
Vector saliency_weights(const Matrix& attention);

// Saliency-weighted fusion of two tokens. With renormalization the weights are
// divided by their sum, falling back to the plain mean when both are ~0.
RowVector merge_pair(const RowVector& first, const RowVector& second, double alpha_first, double alpha_second,
                     bool renormalize = true);

// Removes r_t temporal slots from every spatial position by r_t successive
// merges of the most similar adjacent pair. Uses the temporal keys and
// attention recorded in `artifacts`.
MergeOutcome tim_tm(const TokenGrid& grid, const AttentionArtifacts& artifacts, int r_t,
                    const ProvenanceMap& provenance, const TemporalMergeOptions& options = {});

}  // namespace stim
