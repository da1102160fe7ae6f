#pragma once

// Joint (structure-free) bipartite soft matching over every token, and
// unmerging back to the dense original grid.

#include <vector>

#include "stim/types.hpp"

namespace stim {

struct FlatTokenSet {
    Matrix tokens;                          // N x C
    std::vector<double> sizes;              // N
    std::vector<std::vector<Cell>> origins; // N, partition of the original grid
    int original_t = 0;
    int original_s = 0;

    Eigen::Index count() const { return tokens.rows(); }
    static FlatTokenSet from_grid(const TokenGrid& grid, const ProvenanceMap& provenance);
    void validate() const;
};

// Merges r token pairs chosen by bipartite soft matching over all tokens
// (A = even indices, B = odd indices). Requires r <= N / 2.
FlatTokenSet tome_merge(const FlatTokenSet& set, const Matrix& keys, int r);

// Dense [T0][S0] grid in which every original cell holds a copy of the live
// token that absorbed it. CLS is carried through unchanged.
TokenGrid unmerge(const TokenGrid& grid, const ProvenanceMap& provenance);
TokenGrid unmerge(const FlatTokenSet& set);

}  // namespace stim
