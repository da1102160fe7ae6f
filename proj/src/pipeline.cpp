#include "stim/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace stim {

MergeHooks stim_hooks(const StimOptions& options) {
    MergeHooks hooks;
    hooks.temporal = [options](const TokenGrid& grid, const ProvenanceMap& prov, const AttentionArtifacts& art,
                               const MergeContext& ctx) {
        return tim_tm(grid, art, ctx.plan.r_t, prov, options.temporal);
    };
    hooks.spatial = [options](const TokenGrid& grid, const ProvenanceMap& prov, const AttentionArtifacts& art,
                              const MergeContext& ctx) {
        SpatialMergeParams params;
        params.r_s = ctx.plan.r_s;
        params.m = ctx.plan.m;
        params.segments = ctx.plan.segments.resolve(ctx.layer, ctx.num_layers);
        return sim_tm(grid, art, params, prov, options.spatial);
    };
    return hooks;
}

MergeHooks random_hooks(std::uint64_t seed) {
    MergeHooks hooks;
    hooks.temporal = [seed](const TokenGrid& grid, const ProvenanceMap& prov, const AttentionArtifacts& art,
                            const MergeContext& ctx) {
        std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(ctx.layer));
        // Uniform attention makes every saliency weight 0.5, i.e. an equal-weight mean.
        AttentionArtifacts fake;
        fake.temporal_keys.resize(static_cast<std::size_t>(grid.n_s));
        fake.temporal_attention.assign(static_cast<std::size_t>(grid.n_s),
                                       Matrix::Constant(grid.n_t, grid.n_t, 1.0 / grid.n_t));
        for (int s = 0; s < grid.n_s; ++s) {
            // Random orthogonal-ish keys make the adjacent-pair choice random.
            Matrix keys(grid.n_t, 2);
            for (int t = 0; t < grid.n_t; ++t) {
                const double angle = std::uniform_real_distribution<double>(0.0, 6.283185307179586)(rng);
                keys(t, 0) = std::cos(angle);
                keys(t, 1) = std::sin(angle);
            }
            fake.temporal_keys[static_cast<std::size_t>(s)] = keys;
        }
        (void)art;
        return tim_tm(grid, fake, ctx.plan.r_t, prov, TemporalMergeOptions{});
    };
    hooks.spatial = [seed](const TokenGrid& grid, const ProvenanceMap& prov, const AttentionArtifacts&,
                           const MergeContext& ctx) {
        std::mt19937_64 rng(seed * 1000003ull + 7919ull * static_cast<std::uint64_t>(ctx.layer));
        std::vector<int> order(static_cast<std::size_t>(grid.n_s));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        BipartiteMatch match;
        for (int k = 0; k < ctx.plan.r_s; ++k) {
            match.pairs.emplace_back(order[static_cast<std::size_t>(2 * k)], order[static_cast<std::size_t>(2 * k + 1)]);
        }
        MergeOutcome out;
        const int n_out = grid.n_s - ctx.plan.r_s;
        out.grid = TokenGrid(grid.n_t, n_out, grid.channels());
        out.grid.cls = grid.cls;
        std::vector<std::vector<Cell>> groups(static_cast<std::size_t>(grid.n_t) * n_out);
        for (int t = 0; t < grid.n_t; ++t) {
            std::vector<double> sizes(static_cast<std::size_t>(grid.n_s));
            for (int s = 0; s < grid.n_s; ++s) sizes[static_cast<std::size_t>(s)] = prov.size(t, s);
            const MergedFrame merged = apply_match(Matrix(grid.frame(t)), sizes, match);
            out.grid.frame(t) = merged.tokens;
            for (int s = 0; s < grid.n_s; ++s) {
                auto& g = groups[static_cast<std::size_t>(t) * n_out + merged.destination[static_cast<std::size_t>(s)]];
                g.insert(g.end(), prov.group(t, s).begin(), prov.group(t, s).end());
            }
        }
        for (auto& g : groups) std::sort(g.begin(), g.end());
        out.provenance = ProvenanceMap(prov.original_t(), prov.original_s(), grid.n_t, n_out, std::move(groups));
        return out;
    };
    return hooks;
}

}  // namespace stim
