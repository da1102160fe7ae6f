#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "stim/error.hpp"
#include "stim/spatial_merge.hpp"

using namespace stim;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

std::vector<Matrix> random_frames(std::mt19937_64& rng, int n_t, int n_s, int d) {
    std::vector<Matrix> f;
    for (int t = 0; t < n_t; ++t) f.push_back(oracle::random_matrix(rng, n_s, d));
    return f;
}

}  // namespace

TEST_CASE("frame similarity curve: identical, orthogonal, oracle") {
    std::mt19937_64 rng(1);
    const Matrix base = oracle::random_matrix(rng, 4, 3);
    const Vector same = frame_similarity_curve({base, base, base});
    CHECK(same.size() == 2);
    CHECK(std::abs(same(0) - 1.0) < 1e-12);

    Matrix a(2, 2), b(2, 2);
    a << 1, 0, 0, 1;
    b << 0, 1, 1, 0;
    const Vector ortho = frame_similarity_curve({a, b, a, b});
    for (Eigen::Index i = 0; i < ortho.size(); ++i) CHECK(ortho(i) == 0.0);

    CHECK(frame_similarity_curve({a}).size() == 0);

    for (int trial = 0; trial < 30; ++trial) {
        const auto frames = random_frames(rng, 6, 4, 5);
        const Vector s = frame_similarity_curve(frames);
        for (int t = 0; t < 5; ++t) {
            double ref = 0;
            for (int i = 0; i < 4; ++i) ref += oracle::cosine(frames[static_cast<std::size_t>(t)].row(i), frames[static_cast<std::size_t>(t + 1)].row(i));
            CHECK(std::abs(s(t) - ref / 4.0) < 1e-9);
        }
    }
}

TEST_CASE("depth scores: worked values and flat curve") {
    const Vector d = depth_scores(vec({0.9, 0.3, 0.8}));
    REQUIRE(d.size() == 1);
    CHECK(std::abs(d(0) - 1.1) < 1e-12);
    const Vector mono = depth_scores(vec({0.1, 0.2, 0.3}));
    CHECK(std::abs(mono(0)) < 1e-12);
    const Vector flat = depth_scores(vec({0.5, 0.5, 0.5, 0.5, 0.5}));
    for (Eigen::Index i = 0; i < flat.size(); ++i) CHECK(flat(i) == 0.0);
    CHECK(depth_scores(vec({0.5, 0.4})).size() == 0);
}

TEST_CASE("depth scores match the definition on random curves") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 12);
        std::vector<double> s(static_cast<std::size_t>(n));
        Vector sv(n);
        for (int i = 0; i < n; ++i) sv(i) = s[static_cast<std::size_t>(i)] = u(rng);
        const Vector d = depth_scores(sv);
        REQUIRE(d.size() == n - 2);
        for (int j = 0; j < n - 2; ++j) CHECK(std::abs(d(j) - oracle::depth(s, static_cast<std::size_t>(j + 1))) < 1e-12);
    }
}

TEST_CASE("boundary choice: K=1, single spike, flat fallback") {
    CHECK(choose_boundaries(vec({0.3, 0.9, 0.1}), 1, 6).empty());
    // Depth entries sit on similarity indices 1..; a spike on similarity index 2 is a boundary after frame 2.
    CHECK(choose_boundaries(vec({0.0, 0.8, 0.0, 0.0, 0.0}), 2, 8) == std::vector<int>{2});
    CHECK(choose_boundaries(Vector::Zero(5), 2, 8) == std::vector<int>{3});
    CHECK(choose_boundaries(Vector::Zero(5), 4, 8) == std::vector<int>{1, 3, 5});
    // Two peaks: the larger wins for K=2, both for K=3.
    CHECK(choose_boundaries(vec({0.5, 0.1, 0.9, 0.2}), 2, 7) == std::vector<int>{3});
    CHECK(choose_boundaries(vec({0.5, 0.1, 0.9, 0.2}), 3, 7) == std::vector<int>{1, 3});
    // Not enough peaks: the largest remaining positive depth fills in.
    CHECK(choose_boundaries(vec({0.2, 0.4, 0.6}), 3, 6) == std::vector<int>{2, 3});
}

TEST_CASE("segments from boundaries cover the frames") {
    const auto segs = segments_from_boundaries({2, 5}, 8);
    REQUIRE(segs.size() == 3);
    CHECK(segs[0] == Segment{0, 3});
    CHECK(segs[1] == Segment{3, 6});
    CHECK(segs[2] == Segment{6, 8});
}

TEST_CASE("partition validity on random keys") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_t = 1 + static_cast<int>(rng() % 12);
        const int k = 1 + static_cast<int>(rng() % 4);
        const SegmentPartition p = partition_frames(random_frames(rng, n_t, 3, 4), k);
        const int expect = std::min(k, n_t);
        CHECK(static_cast<int>(p.segments.size()) == expect);
        CHECK(static_cast<int>(p.boundaries.size()) == expect - 1);
        int next = 0;
        for (const Segment& s : p.segments) {
            CHECK(s.begin == next);
            CHECK(s.length() >= 1);
            next = s.end;
        }
        CHECK(next == n_t);
    }
}

TEST_CASE("static scores: constant track, one pair, oracle") {
    std::mt19937_64 rng(7);
    const Matrix f = oracle::random_matrix(rng, 5, 3);
    const Vector c = static_scores({f, f, f});
    for (int i = 0; i < 5; ++i) CHECK(std::abs(c(i) - 1.0) < 1e-9);
    const Vector one = static_scores({f});
    for (int i = 0; i < 5; ++i) CHECK(one(i) == 1.0);

    const auto two = random_frames(rng, 2, 5, 3);
    const Vector p = static_scores(two);
    for (int i = 0; i < 5; ++i) CHECK(std::abs(p(i) - oracle::cosine(two[0].row(i), two[1].row(i))) < 1e-12);

    for (int trial = 0; trial < 30; ++trial) {
        const auto frames = random_frames(rng, 5, 6, 4);
        const Vector mu = static_scores(frames);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(mu(i) - oracle::static_score(frames, i)) < 1e-9);
    }
}

TEST_CASE("top positions: highest scores, smaller index on ties, ascending output") {
    CHECK(top_positions(vec({0.1, 0.9, 0.5, 0.9, 0.2}), 2) == std::vector<int>{1, 3});
    CHECK(top_positions(vec({0.7, 0.7, 0.7}), 2) == std::vector<int>{0, 1});
    CHECK(top_positions(vec({0.3, 0.1, 0.2}), 3) == std::vector<int>{0, 1, 2});
}

TEST_CASE("bsm on candidates: R=0 identity, identical tokens, pool too small") {
    std::mt19937_64 rng(9);
    const Matrix tokens = oracle::random_matrix(rng, 6, 3);
    const std::vector<double> ones(6, 1.0);
    const MergedFrame id = bsm_on_candidates(tokens, tokens, {0, 1, 2, 3}, 0, ones);
    CHECK(id.tokens == tokens);

    Matrix same = tokens;
    for (int i : {1, 2, 4, 5}) same.row(i) = tokens.row(1);
    const MergedFrame m = bsm_on_candidates(same, same, {1, 2, 4, 5}, 2, ones);
    CHECK(m.tokens.rows() == 4);
    double total = 0;
    for (double s : m.sizes) total += s;
    CHECK(total == 6.0);
    for (Eigen::Index i = 0; i < m.tokens.rows(); ++i) {
        if (m.sizes[static_cast<std::size_t>(i)] > 1.0) CHECK(m.tokens.row(i) == tokens.row(1));
    }
    CHECK_THROWS_WITH_AS(bsm_on_candidates(tokens, tokens, {0, 1, 2}, 3, ones), "candidate pool too small", Error);
    CHECK_THROWS_WITH_AS(bsm_on_candidates(tokens, tokens, {4}, 1, ones), "candidate pool too small", Error);
}

TEST_CASE("bsm on candidates matches the exhaustive oracle") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 9);
        const int pool = 2 + static_cast<int>(rng() % static_cast<unsigned>(n - 1));
        const int r = 1 + static_cast<int>(rng() % static_cast<unsigned>((pool + 1) / 2));
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        const std::vector<int> cand(all.begin(), all.begin() + pool);
        const Matrix tokens = oracle::random_matrix(rng, n, 3);
        const Matrix keys = oracle::random_matrix(rng, n, 4);
        std::vector<double> sizes;
        for (int i = 0; i < n; ++i) sizes.push_back(1.0 + static_cast<double>(rng() % 3));

        const oracle::BsmResult ref = oracle::bsm(tokens, keys, cand, r, sizes);
        const BipartiteMatch match = bipartite_match(keys, cand, r);
        const std::set<std::pair<int, int>> got(match.pairs.begin(), match.pairs.end());
        CHECK(got == ref.pairs);
        const MergedFrame merged = bsm_on_candidates(tokens, keys, cand, r, sizes);
        REQUIRE(merged.tokens.rows() == ref.tokens.rows());
        CHECK((merged.tokens - ref.tokens).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(merged.sizes == ref.sizes);
        // Non-candidates pass through unchanged.
        for (int i = 0; i < n; ++i) {
            if (std::find(cand.begin(), cand.end(), i) == cand.end()) {
                CHECK(merged.tokens.row(merged.destination[static_cast<std::size_t>(i)]) == tokens.row(i));
            }
        }
    }
}

TEST_CASE("bipartite match tie rules") {
    // A = {0, 2}, B = {1, 3}; keys make both B equally close to both A.
    Matrix keys(4, 2);
    keys << 1, 0, 1, 0, 1, 0, 1, 0;
    const BipartiteMatch m = bipartite_match(keys, {0, 1, 2, 3}, 1);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0] == std::pair<int, int>{0, 1});
}

namespace {

struct SpatialInstance {
    TokenGrid grid;
    AttentionArtifacts artifacts;
};

SpatialInstance random_spatial(std::mt19937_64& rng, int n_t, int n_s) {
    SpatialInstance in;
    in.grid = TokenGrid(n_t, n_s, 3);
    in.grid.data = oracle::random_matrix(rng, n_t * n_s, 3);
    in.artifacts.spatial_keys = random_frames(rng, n_t, n_s, 4);
    return in;
}

}  // namespace

TEST_CASE("sim_tm: rectangular output, segment-consistent groups, size conservation") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_t = 1 + static_cast<int>(rng() % 8);
        const int n_s = 4 + static_cast<int>(rng() % 12);
        const int r = 1 + static_cast<int>(rng() % static_cast<unsigned>(n_s / 2));
        const int k = 1 + static_cast<int>(rng() % 3);
        const SpatialInstance in = random_spatial(rng, n_t, n_s);
        const MergeOutcome out = sim_tm(in.grid, in.artifacts, {r, 2, k}, ProvenanceMap::identity(n_t, n_s));
        CHECK(out.grid.n_s == n_s - r);
        CHECK(out.grid.n_t == n_t);
        CHECK_NOTHROW(out.provenance.validate_partition());
        int total = 0;
        for (const auto& g : out.provenance.groups()) total += static_cast<int>(g.size());
        CHECK(total == n_t * n_s);

        const SegmentPartition part = partition_frames(in.artifacts.spatial_keys, k);
        for (const Segment& seg : part.segments) {
            for (int t = seg.begin; t < seg.end; ++t) {
                for (int s = 0; s < out.grid.n_s; ++s) {
                    std::vector<int> a, b;
                    for (const Cell& c : out.provenance.group(seg.begin, s)) a.push_back(c.s);
                    for (const Cell& c : out.provenance.group(t, s)) b.push_back(c.s);
                    CHECK(a == b);
                }
            }
        }
    }
}

TEST_CASE("sim_tm: single-frame segment is plain bsm over the top candidates") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const SpatialInstance in = random_spatial(rng, 1, 10);
        const MergeOutcome out = sim_tm(in.grid, in.artifacts, {2, 2, 1}, ProvenanceMap::identity(1, 10));
        // mu is identically 1, so the candidates are positions 0..3.
        const oracle::BsmResult ref = oracle::bsm(Matrix(in.grid.frame(0)), in.artifacts.spatial_keys[0], {0, 1, 2, 3}, 2,
                                                  std::vector<double>(10, 1.0));
        CHECK((Matrix(out.grid.frame(0)) - ref.tokens).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("sim_tm: a moving feature on a constant background survives") {
    const int n_t = 4, n_s = 6;
    TokenGrid g(n_t, n_s, 2);
    AttentionArtifacts art;
    for (int t = 0; t < n_t; ++t) {
        Matrix keys(n_s, 2);
        for (int s = 0; s < n_s; ++s) {
            keys.row(s) << 1.0, 0.1 * s;
            g.token(t, s) << 1.0, 0.1 * s;
        }
        // Position 2 rotates over time.
        keys.row(2) << std::cos(1.3 * t), std::sin(1.3 * t);
        g.token(t, 2) << std::cos(1.3 * t), std::sin(1.3 * t);
        art.spatial_keys.push_back(keys);
    }
    const MergeOutcome out = sim_tm(g, art, {1, 2, 1}, ProvenanceMap::identity(n_t, n_s));
    for (int t = 0; t < n_t; ++t) {
        for (int s = 0; s < out.grid.n_s; ++s) {
            const auto& grp = out.provenance.group(t, s);
            if (grp.size() > 1) {
                for (const Cell& c : grp) CHECK(c.s != 2);
            }
        }
    }
}

TEST_CASE("sim_tm: per-frame matching keeps per-frame partitions valid") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 30; ++trial) {
        const SpatialInstance in = random_spatial(rng, 5, 12);
        SpatialMergeOptions opts;
        opts.per_frame_matching = true;
        const MergeOutcome out = sim_tm(in.grid, in.artifacts, {3, 2, 2}, ProvenanceMap::identity(5, 12), opts);
        CHECK(out.grid.n_s == 9);
        CHECK_NOTHROW(out.provenance.validate_partition());
    }
}

TEST_CASE("sim_tm: errors") {
    std::mt19937_64 rng(15);
    const SpatialInstance in = random_spatial(rng, 3, 6);
    const ProvenanceMap prov = ProvenanceMap::identity(3, 6);
    CHECK_THROWS_AS(sim_tm(in.grid, in.artifacts, {6, 1, 1}, prov), Error);
    CHECK_THROWS_WITH_AS(sim_tm(in.grid, in.artifacts, {4, 2, 1}, prov), "m * R_S exceeds current n_s", Error);
    const MergeOutcome same = sim_tm(in.grid, in.artifacts, {0, 2, 1}, prov);
    CHECK(same.grid.data == in.grid.data);
}
