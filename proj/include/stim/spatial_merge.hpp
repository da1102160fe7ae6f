#pragma once

// Static-prioritized spatial merging: split frames into temporal segments at
// similarity dips, score every spatial position by its cross-frame stability,
// and run bipartite soft matching over the most static positions only.
//
// Indexing is 0-based. Similarity index i compares frames i and i+1; a
// boundary at i ends a segment after frame i.

#include <utility>
#include <vector>

#include "stim/encoder.hpp"
#include "stim/types.hpp"

namespace stim {

struct Segment {
    int begin = 0;  // first frame
    int end = 0;    // one past the last frame
    int length() const { return end - begin; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

struct SegmentPartition {
    Vector similarity;        // S, n_t - 1 entries
    Vector depth;             // D, defined for similarity indices 1 .. n_t - 3
    std::vector<int> boundaries;
    std::vector<Segment> segments;
};

// Mean over positions of the cosine between the same position in consecutive
// frames. Empty when fewer than two frames.
Vector frame_similarity_curve(const std::vector<Matrix>& spatial_keys);

// Depth score for every similarity index that has neighbours on both sides.
// Entry j belongs to similarity index j + 1.
Vector depth_scores(const Vector& similarity);

// K - 1 boundaries (similarity indices, ascending). Prefers the largest
// positive local maxima of D, then the largest remaining positive depths, and
// otherwise splits the frames into K near-equal runs.
std::vector<int> choose_boundaries(const Vector& depth, int segments, int n_t);

std::vector<Segment> segments_from_boundaries(const std::vector<int>& boundaries, int n_t);

SegmentPartition partition_frames(const std::vector<Matrix>& spatial_keys, int segments);

// Mean pairwise cosine of each position's keys over the frames of a segment;
// 1 for single-frame segments. `segment_keys` holds T_S matrices of n_s x C.
Vector static_scores(const std::vector<Matrix>& segment_keys);

// Matched (source, destination) position pairs, best first.
struct BipartiteMatch {
    std::vector<std::pair<int, int>> pairs;
    std::vector<double> scores;
};

// Candidates are sorted by index and dealt alternately into sets A and B;
// every A token points at its most similar B token (ties: smaller B) and the
// r best pairs are kept (ties: smaller A).
BipartiteMatch bipartite_match(const Matrix& keys, std::vector<int> candidates, int r);

struct MergedFrame {
    Matrix tokens;                 // (n_s - r) x C
    std::vector<double> sizes;     // per output token
    std::vector<int> destination;  // input position -> output position
};

// Applies a match: every destination absorbs its sources by size-weighted
// averaging; surviving tokens keep their relative order.
MergedFrame apply_match(const Matrix& tokens, const std::vector<double>& sizes, const BipartiteMatch& match);

// Bipartite soft matching restricted to `candidates`, removing r tokens.
MergedFrame bsm_on_candidates(const Matrix& tokens, const Matrix& keys, const std::vector<int>& candidates, int r,
                              const std::vector<double>& sizes);

// Positions with the `count` highest scores (ties: smaller index), ascending.
std::vector<int> top_positions(const Vector& scores, int count);

struct SpatialMergeOptions {
    // Match each frame on its own keys instead of once per segment.
    bool per_frame_matching = false;
};

struct SpatialMergeParams {
    int r_s = 0;
    int m = 2;
    int segments = 1;  // K, already resolved for the layer
};

MergeOutcome sim_tm(const TokenGrid& grid, const AttentionArtifacts& artifacts, const SpatialMergeParams& params,
                    const ProvenanceMap& provenance, const SpatialMergeOptions& options = {});

}  // namespace stim
