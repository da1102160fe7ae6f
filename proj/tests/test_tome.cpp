#include <doctest.h>

#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "stim/error.hpp"
#include "stim/spatial_merge.hpp"
#include "stim/temporal_merge.hpp"
#include "stim/tome.hpp"

using namespace stim;

namespace {

FlatTokenSet random_set(std::mt19937_64& rng, int n_t, int n_s, int c) {
    TokenGrid g(n_t, n_s, c);
    g.data = oracle::random_matrix(rng, n_t * n_s, c);
    return FlatTokenSet::from_grid(g, ProvenanceMap::identity(n_t, n_s));
}

}  // namespace

TEST_CASE("tome: R=0 identity and too-large R") {
    std::mt19937_64 rng(1);
    const FlatTokenSet set = random_set(rng, 2, 3, 4);
    const FlatTokenSet same = tome_merge(set, set.tokens, 0);
    CHECK(same.tokens == set.tokens);
    CHECK(same.origins == set.origins);
    CHECK_THROWS_AS(tome_merge(set, set.tokens, 4), Error);
    CHECK_THROWS_AS(tome_merge(set, Matrix(set.tokens.topRows(5)), 1), Error);
}

TEST_CASE("tome: four identical tokens merge into two of size two") {
    TokenGrid g(1, 4, 3);
    for (int s = 0; s < 4; ++s) g.token(0, s) << 0.25, -1.5, 3.0;
    const FlatTokenSet set = FlatTokenSet::from_grid(g, ProvenanceMap::identity(1, 4));
    const FlatTokenSet out = tome_merge(set, set.tokens, 2);
    REQUIRE(out.count() == 2);
    CHECK(out.sizes == std::vector<double>{2.0, 2.0});
    for (Eigen::Index i = 0; i < 2; ++i) CHECK(out.tokens.row(i) == g.token(0, 0));
}

TEST_CASE("tome matches the exhaustive oracle and respects the bipartition") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng() % 11);
        const int r = 1 + static_cast<int>(rng() % static_cast<unsigned>(n / 2));
        const FlatTokenSet set = random_set(rng, 1, n, 3);
        const Matrix keys = oracle::random_matrix(rng, n, 4);
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        const oracle::BsmResult ref = oracle::bsm(set.tokens, keys, all, r, set.sizes);
        const FlatTokenSet out = tome_merge(set, keys, r);
        REQUIRE(out.count() == n - r);
        CHECK((out.tokens - ref.tokens).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(out.sizes == ref.sizes);
        CHECK_NOTHROW(out.validate());
        for (const auto& [a, b] : ref.pairs) {
            CHECK(a % 2 == 0);
            CHECK(b % 2 == 1);
        }
        // A B token may absorb several As, but no group holds two Bs.
        for (const auto& g : out.origins) {
            int odds = 0;
            for (const Cell& c : g) odds += c.s % 2 == 1;
            CHECK(odds <= 1);
        }
    }
}

TEST_CASE("tome over a spatiotemporal grid conserves size") {
    std::mt19937_64 rng(3);
    FlatTokenSet set = random_set(rng, 4, 9, 3);
    for (int round = 0; round < 4; ++round) {
        const int r = static_cast<int>(set.count() / 3);
        set = tome_merge(set, set.tokens, r);
        double total = 0;
        for (double s : set.sizes) total += s;
        CHECK(total == 36.0);
        CHECK_NOTHROW(set.validate());
    }
    const TokenGrid dense = unmerge(set);
    CHECK(dense.n_t == 4);
    CHECK(dense.n_s == 9);
}

TEST_CASE("unmerge: identity provenance is the identity") {
    std::mt19937_64 rng(4);
    TokenGrid g(3, 5, 2);
    g.data = oracle::random_matrix(rng, 15, 2);
    RowVector cls(2);
    cls << 1.0, 2.0;
    g.cls = cls;
    const TokenGrid u = unmerge(g, ProvenanceMap::identity(3, 5));
    CHECK(u.data == g.data);
    REQUIRE(u.cls.has_value());
    CHECK(*u.cls == cls);
}

TEST_CASE("unmerge: rejects a non-partition") {
    TokenGrid g(1, 2, 1);
    const ProvenanceMap bad(1, 3, 1, 2, {{Cell{0, 0}}, {Cell{0, 1}}});
    CHECK_THROWS_AS(unmerge(g, bad), Error);
}

TEST_CASE("unmerge after temporal and spatial merging: cell-by-cell audit") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int n_t = 4, n_s = 8;
        TokenGrid g(n_t, n_s, 3);
        g.data = oracle::random_matrix(rng, n_t * n_s, 3);
        AttentionArtifacts art;
        for (int s = 0; s < n_s; ++s) {
            art.temporal_keys.push_back(oracle::random_matrix(rng, n_t, 2));
            art.temporal_attention.push_back(Matrix::Constant(n_t, n_t, 1.0 / n_t));
        }
        MergeOutcome a = tim_tm(g, art, 1, ProvenanceMap::identity(n_t, n_s));
        AttentionArtifacts sart;
        for (int t = 0; t < a.grid.n_t; ++t) sart.spatial_keys.push_back(oracle::random_matrix(rng, n_s, 2));
        const MergeOutcome b = sim_tm(a.grid, sart, {2, 2, 2}, a.provenance);
        const TokenGrid u = unmerge(b.grid, b.provenance);
        CHECK(u.n_t == n_t);
        CHECK(u.n_s == n_s);
        for (int t = 0; t < b.grid.n_t; ++t) {
            for (int s = 0; s < b.grid.n_s; ++s) {
                for (const Cell& c : b.provenance.group(t, s)) CHECK(u.token(c.t, c.s) == b.grid.token(t, s));
            }
        }
    }
}

TEST_CASE("unmerge restores a constant grid exactly after merging") {
    std::mt19937_64 rng(6);
    TokenGrid g(6, 10, 4);
    RowVector v(4);
    v << 0.1, -0.7, 1.0 / 3.0, 2.5e-7;
    for (Eigen::Index i = 0; i < g.data.rows(); ++i) g.data.row(i) = v;
    AttentionArtifacts art;
    for (int s = 0; s < 10; ++s) {
        art.temporal_keys.push_back(oracle::random_matrix(rng, 6, 3));
        Matrix att = oracle::random_matrix(rng, 6, 6).cwiseAbs();
        for (int i = 0; i < 6; ++i) att.row(i) /= att.row(i).sum();
        art.temporal_attention.push_back(att);
    }
    const MergeOutcome a = tim_tm(g, art, 3, ProvenanceMap::identity(6, 10));
    AttentionArtifacts sart;
    for (int t = 0; t < 3; ++t) sart.spatial_keys.push_back(oracle::random_matrix(rng, 10, 3));
    const MergeOutcome b = sim_tm(a.grid, sart, {3, 2, 2}, a.provenance);
    const TokenGrid u = unmerge(b.grid, b.provenance);
    CHECK(u.data == g.data);
}
