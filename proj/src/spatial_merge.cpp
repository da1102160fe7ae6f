#include "stim/spatial_merge.hpp"

#include <algorithm>
#include <numeric>

#include "stim/kernels.hpp"
#include "stim/parallel.hpp"

namespace stim {

namespace {

// Indices of `values` ordered by value descending, ties by index ascending.
std::vector<int> rank_descending(const Vector& values, const std::vector<int>& subset) {
    std::vector<int> order = subset;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return values(a) > values(b); });
    return order;
}

std::vector<int> equal_split(int segments, int n_t) {
    std::vector<int> b;
    for (int k = 1; k < segments; ++k) {
        b.push_back(static_cast<int>(static_cast<long long>(k) * n_t / segments) - 1);
    }
    return b;
}

}  // namespace

Vector frame_similarity_curve(const std::vector<Matrix>& spatial_keys) {
    const int n_t = static_cast<int>(spatial_keys.size());
    if (n_t < 2) {
        return Vector(0);
    }
    Vector curve(n_t - 1);
    for (int t = 0; t + 1 < n_t; ++t) {
        const Matrix& a = spatial_keys[static_cast<std::size_t>(t)];
        const Matrix& b = spatial_keys[static_cast<std::size_t>(t + 1)];
        if (a.rows() != b.rows() || a.rows() == 0) {
            throw Error("spatial keys must have the same non-zero position count in every frame");
        }
        double sum = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i) sum += cosine_similarity(a.row(i), b.row(i));
        curve(t) = sum / static_cast<double>(a.rows());
    }
    return curve;
}

Vector depth_scores(const Vector& similarity) {
    const Eigen::Index n = similarity.size();
    if (n < 3) {
        return Vector(0);
    }
    Vector depth(n - 2);
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        const double left = similarity.head(i).maxCoeff();
        const double right = similarity.tail(n - i - 1).maxCoeff();
        depth(i - 1) = left + right - 2.0 * similarity(i);
    }
    return depth;
}

std::vector<int> choose_boundaries(const Vector& depth, int segments, int n_t) {
    if (segments < 1) {
        throw Error("K must be >= 1");
    }
    const int wanted = std::min(segments, std::max(n_t, 1)) - 1;
    if (wanted <= 0) {
        return {};
    }
    const Eigen::Index n = depth.size();
    std::vector<int> peaks;
    std::vector<int> positive;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(depth(j) > 0.0)) continue;
        positive.push_back(static_cast<int>(j));
        const bool left_ok = j == 0 || depth(j) >= depth(j - 1);
        const bool right_ok = j + 1 == n || depth(j) >= depth(j + 1);
        if (left_ok && right_ok) peaks.push_back(static_cast<int>(j));
    }
    std::vector<int> chosen;
    for (int j : rank_descending(depth, peaks)) {
        if (static_cast<int>(chosen.size()) == wanted) break;
        chosen.push_back(j);
    }
    for (int j : rank_descending(depth, positive)) {
        if (static_cast<int>(chosen.size()) == wanted) break;
        if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) chosen.push_back(j);
    }
    if (static_cast<int>(chosen.size()) < wanted) {
        return equal_split(wanted + 1, n_t);
    }
    // Depth entry j sits on similarity index j + 1.
    for (int& j : chosen) ++j;
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<Segment> segments_from_boundaries(const std::vector<int>& boundaries, int n_t) {
    std::vector<Segment> out;
    int begin = 0;
    for (int b : boundaries) {
        if (b < begin || b + 1 >= n_t) {
            throw Error("invalid segment boundary");
        }
        out.push_back(Segment{begin, b + 1});
        begin = b + 1;
    }
    out.push_back(Segment{begin, n_t});
    return out;
}

SegmentPartition partition_frames(const std::vector<Matrix>& spatial_keys, int segments) {
    const int n_t = static_cast<int>(spatial_keys.size());
    SegmentPartition p;
    p.similarity = frame_similarity_curve(spatial_keys);
    p.depth = depth_scores(p.similarity);
    p.boundaries = choose_boundaries(p.depth, segments, n_t);
    p.segments = segments_from_boundaries(p.boundaries, n_t);
    return p;
}

Vector static_scores(const std::vector<Matrix>& segment_keys) {
    if (segment_keys.empty()) {
        throw Error("static_scores: empty segment");
    }
    const Eigen::Index n_s = segment_keys.front().rows();
    const std::size_t len = segment_keys.size();
    if (len == 1) {
        return Vector::Ones(n_s);
    }
    Vector mu = Vector::Zero(n_s);
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t u = t + 1; u < len; ++u) {
            for (Eigen::Index i = 0; i < n_s; ++i) {
                mu(i) += cosine_similarity(segment_keys[t].row(i), segment_keys[u].row(i));
            }
        }
    }
    mu *= 2.0 / static_cast<double>(len * (len - 1));
    return mu;
}

std::vector<int> top_positions(const Vector& scores, int count) {
    std::vector<int> all(static_cast<std::size_t>(scores.size()));
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> order = rank_descending(scores, all);
    order.resize(static_cast<std::size_t>(std::min<Eigen::Index>(count, scores.size())));
    std::sort(order.begin(), order.end());
    return order;
}

BipartiteMatch bipartite_match(const Matrix& keys, std::vector<int> candidates, int r) {
    BipartiteMatch match;
    if (r == 0) {
        return match;
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<int> set_a;
    std::vector<int> set_b;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        (i % 2 == 0 ? set_a : set_b).push_back(candidates[i]);
    }
    if (r < 0 || r > static_cast<int>(set_a.size()) || set_b.empty()) {
        throw Error("candidate pool too small");
    }
    struct Edge {
        int a;
        int b;
        double score;
    };
    std::vector<Edge> edges;
    edges.reserve(set_a.size());
    // Exact ties go to the B nearest in candidate rank, so equal keys pair up locally.
    for (std::size_t i = 0; i < set_a.size(); ++i) {
        const int a = set_a[i];
        Edge best{a, set_b.front(), -2.0};
        std::size_t best_gap = 0;
        for (std::size_t j = 0; j < set_b.size(); ++j) {
            const double s = cosine_similarity(keys.row(a), keys.row(set_b[j]));
            const std::size_t gap = j >= i ? j - i : i - j + 1;
            if (s > best.score || (s == best.score && gap < best_gap)) {
                best = Edge{a, set_b[j], s};
                best_gap = gap;
            }
        }
        edges.push_back(best);
    }
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.score > y.score; });
    for (int k = 0; k < r; ++k) {
        match.pairs.emplace_back(edges[static_cast<std::size_t>(k)].a, edges[static_cast<std::size_t>(k)].b);
        match.scores.push_back(edges[static_cast<std::size_t>(k)].score);
    }
    return match;
}

MergedFrame apply_match(const Matrix& tokens, const std::vector<double>& sizes, const BipartiteMatch& match) {
    const Eigen::Index n = tokens.rows();
    if (sizes.size() != static_cast<std::size_t>(n)) {
        throw Error("sizes do not match token count");
    }
    std::vector<int> target(static_cast<std::size_t>(n), -1);
    for (const auto& [a, b] : match.pairs) {
        if (target[static_cast<std::size_t>(a)] != -1) throw Error("token merged twice");
        target[static_cast<std::size_t>(a)] = b;
    }
    Matrix weighted = tokens;
    std::vector<double> mass = sizes;
    std::vector<char> uniform(static_cast<std::size_t>(n), 1);
    for (Eigen::Index i = 0; i < n; ++i) weighted.row(i) *= sizes[static_cast<std::size_t>(i)];
    // Sources are folded in index order so the result is independent of pair order.
    for (Eigen::Index i = 0; i < n; ++i) {
        const int b = target[static_cast<std::size_t>(i)];
        if (b < 0) continue;
        if (target[static_cast<std::size_t>(b)] != -1) throw Error("merge destination is itself merged");
        weighted.row(b) += weighted.row(i);
        if (tokens.row(i) != tokens.row(b)) uniform[static_cast<std::size_t>(b)] = 0;
        mass[static_cast<std::size_t>(b)] += mass[static_cast<std::size_t>(i)];
    }
    MergedFrame out;
    out.tokens.resize(n - static_cast<Eigen::Index>(match.pairs.size()), tokens.cols());
    out.destination.assign(static_cast<std::size_t>(n), -1);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (target[static_cast<std::size_t>(i)] >= 0) continue;
        const double m = mass[static_cast<std::size_t>(i)];
        if (uniform[static_cast<std::size_t>(i)]) {
            out.tokens.row(k) = tokens.row(i);  // untouched or all-equal groups stay bit-exact
        } else {
            out.tokens.row(k) = weighted.row(i) / m;
        }
        out.sizes.push_back(m);
        out.destination[static_cast<std::size_t>(i)] = static_cast<int>(k);
        ++k;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const int b = target[static_cast<std::size_t>(i)];
        if (b >= 0) out.destination[static_cast<std::size_t>(i)] = out.destination[static_cast<std::size_t>(b)];
    }
    return out;
}

MergedFrame bsm_on_candidates(const Matrix& tokens, const Matrix& keys, const std::vector<int>& candidates, int r,
                              const std::vector<double>& sizes) {
    if (keys.rows() != tokens.rows()) {
        throw Error("keys and tokens disagree on token count");
    }
    for (int c : candidates) {
        if (c < 0 || c >= tokens.rows()) throw Error("candidate index out of range");
    }
    return apply_match(tokens, sizes, bipartite_match(keys, candidates, r));
}

MergeOutcome sim_tm(const TokenGrid& grid, const AttentionArtifacts& artifacts, const SpatialMergeParams& params,
                    const ProvenanceMap& provenance, const SpatialMergeOptions& options) {
    const int r = params.r_s;
    if (r < 0 || r >= grid.n_s) {
        throw Error("R_S must satisfy 0 <= R_S < n_s");
    }
    if (r == 0) {
        return {grid, provenance};
    }
    if (params.m < 1 || params.m * r > grid.n_s) {
        throw Error("m * R_S exceeds current n_s");
    }
    const auto& keys = artifacts.spatial_keys;
    if (keys.size() != static_cast<std::size_t>(grid.n_t)) {
        throw Error("spatial artifacts do not match grid");
    }
    for (const Matrix& k : keys) {
        if (k.rows() != grid.n_s) throw Error("spatial artifacts do not match grid");
    }

    const SegmentPartition partition = partition_frames(keys, params.segments);
    const int n_out = grid.n_s - r;

    // Per frame: the match to apply.
    std::vector<BipartiteMatch> frame_match(static_cast<std::size_t>(grid.n_t));
    for (const Segment& seg : partition.segments) {
        const std::vector<Matrix> seg_keys(keys.begin() + seg.begin, keys.begin() + seg.end);
        const std::vector<int> candidates = top_positions(static_scores(seg_keys), params.m * r);
        if (options.per_frame_matching) {
            for (int t = seg.begin; t < seg.end; ++t) {
                frame_match[static_cast<std::size_t>(t)] = bipartite_match(keys[static_cast<std::size_t>(t)], candidates, r);
            }
        } else {
            Matrix mean_keys = Matrix::Zero(grid.n_s, keys.front().cols());
            for (const Matrix& k : seg_keys) mean_keys += k;
            mean_keys /= static_cast<double>(seg.length());
            const BipartiteMatch shared = bipartite_match(mean_keys, candidates, r);
            for (int t = seg.begin; t < seg.end; ++t) frame_match[static_cast<std::size_t>(t)] = shared;
        }
    }

    MergeOutcome out;
    out.grid = TokenGrid(grid.n_t, n_out, grid.channels());
    out.grid.cls = grid.cls;
    std::vector<std::vector<Cell>> groups(static_cast<std::size_t>(grid.n_t) * n_out);
    parallel_for(grid.n_t, [&](int t) {
        std::vector<double> sizes(static_cast<std::size_t>(grid.n_s));
        for (int s = 0; s < grid.n_s; ++s) sizes[static_cast<std::size_t>(s)] = provenance.size(t, s);
        const MergedFrame merged = apply_match(Matrix(grid.frame(t)), sizes, frame_match[static_cast<std::size_t>(t)]);
        out.grid.frame(t) = merged.tokens;
        for (int s = 0; s < grid.n_s; ++s) {
            auto& g = groups[static_cast<std::size_t>(t) * n_out + merged.destination[static_cast<std::size_t>(s)]];
            const auto& src = provenance.group(t, s);
            g.insert(g.end(), src.begin(), src.end());
        }
        for (int s = 0; s < n_out; ++s) {
            auto& g = groups[static_cast<std::size_t>(t) * n_out + s];
            std::sort(g.begin(), g.end());
        }
    });
    out.provenance = ProvenanceMap(provenance.original_t(), provenance.original_s(), grid.n_t, n_out, std::move(groups));
    return out;
}

}  // namespace stim
