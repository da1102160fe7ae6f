#include "stim/tome.hpp"

#include <algorithm>
#include <numeric>

#include "stim/spatial_merge.hpp"

namespace stim {

FlatTokenSet FlatTokenSet::from_grid(const TokenGrid& grid, const ProvenanceMap& provenance) {
    if (provenance.n_t() != grid.n_t || provenance.n_s() != grid.n_s) {
        throw Error("provenance does not match grid");
    }
    FlatTokenSet set;
    set.tokens = grid.data;
    set.original_t = provenance.original_t();
    set.original_s = provenance.original_s();
    set.origins = provenance.groups();
    for (const auto& g : set.origins) set.sizes.push_back(static_cast<double>(g.size()));
    return set;
}

void FlatTokenSet::validate() const {
    if (sizes.size() != static_cast<std::size_t>(count()) || origins.size() != sizes.size()) {
        throw Error("flat token set: inconsistent lengths");
    }
    ProvenanceMap(original_t, original_s, 1, static_cast<int>(origins.size()), origins).validate_partition();
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] != static_cast<double>(origins[i].size())) {
            throw Error("flat token set: size does not match origin count");
        }
    }
}

FlatTokenSet tome_merge(const FlatTokenSet& set, const Matrix& keys, int r) {
    const Eigen::Index n = set.count();
    if (keys.rows() != n) {
        throw Error("keys and tokens disagree on token count");
    }
    if (r < 0 || r > n / 2) {
        throw Error("R_joint must satisfy 0 <= R_joint <= N / 2");
    }
    if (r == 0) {
        return set;
    }
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const BipartiteMatch match = bipartite_match(keys, all, r);
    const MergedFrame merged = apply_match(set.tokens, set.sizes, match);

    FlatTokenSet out;
    out.tokens = merged.tokens;
    out.sizes = merged.sizes;
    out.original_t = set.original_t;
    out.original_s = set.original_s;
    out.origins.resize(static_cast<std::size_t>(merged.tokens.rows()));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& g = out.origins[static_cast<std::size_t>(merged.destination[static_cast<std::size_t>(i)])];
        const auto& src = set.origins[static_cast<std::size_t>(i)];
        g.insert(g.end(), src.begin(), src.end());
    }
    for (auto& g : out.origins) std::sort(g.begin(), g.end());
    return out;
}

TokenGrid unmerge(const TokenGrid& grid, const ProvenanceMap& provenance) {
    if (provenance.n_t() != grid.n_t || provenance.n_s() != grid.n_s) {
        throw Error("provenance does not match grid");
    }
    provenance.validate_partition();
    TokenGrid dense(provenance.original_t(), provenance.original_s(), grid.channels());
    dense.cls = grid.cls;
    for (int t = 0; t < grid.n_t; ++t) {
        for (int s = 0; s < grid.n_s; ++s) {
            for (const Cell& c : provenance.group(t, s)) dense.token(c.t, c.s) = grid.token(t, s);
        }
    }
    return dense;
}

TokenGrid unmerge(const FlatTokenSet& set) {
    set.validate();
    TokenGrid dense(set.original_t, set.original_s, static_cast<int>(set.tokens.cols()));
    for (Eigen::Index i = 0; i < set.count(); ++i) {
        for (const Cell& c : set.origins[static_cast<std::size_t>(i)]) dense.token(c.t, c.s) = set.tokens.row(i);
    }
    return dense;
}

}  // namespace stim
