#include "stim/temporal_merge.hpp"

#include <algorithm>
#include <cmath>

#include "stim/kernels.hpp"
#include "stim/parallel.hpp"

namespace stim {

namespace {

constexpr double kStochasticTolerance = 1e-6;
constexpr double kZeroWeight = 1e-12;

void check_stochastic(const Matrix& attention) {
    if (attention.rows() == 0 || attention.rows() != attention.cols()) {
        throw Error("temporal attention must be a non-empty square matrix");
    }
    for (Eigen::Index r = 0; r < attention.rows(); ++r) {
        if ((attention.row(r).array() < 0.0).any() || std::abs(attention.row(r).sum() - 1.0) > kStochasticTolerance) {
            throw Error("temporal attention row " + std::to_string(r) + " is not stochastic");
        }
    }
}

// Pair weights as applied to values and keys.
std::pair<double, double> fusion_weights(double a, double b, bool renormalize) {
    if (!renormalize) {
        return {a, b};
    }
    const double total = a + b;
    if (a < kZeroWeight && b < kZeroWeight) {
        return {0.5, 0.5};
    }
    return {a / total, b / total};
}

// Working state for one spatial position.
struct Track {
    std::vector<RowVector> tokens;
    std::vector<RowVector> keys;
    std::vector<std::vector<Cell>> groups;
    Vector alpha;
    Matrix attention;
};

void erase_index(Vector& v, Eigen::Index i) {
    const Eigen::Index tail = v.size() - i - 1;
    v.segment(i, tail) = v.tail(tail).eval();
    v.conservativeResize(v.size() - 1);
}

// Folds row/column b into a: rows combine with the fusion weights, columns
// (probability mass) add, so rows stay stochastic.
void merge_attention(Matrix& a_mat, Eigen::Index a, Eigen::Index b, double wa, double wb) {
    const Eigen::Index n = a_mat.rows();
    Matrix rows = a_mat;
    rows.row(a) = (wa * a_mat.row(a) + wb * a_mat.row(b)) / (wa + wb);
    rows.col(a) += rows.col(b);
    Matrix out(n - 1, n - 1);
    for (Eigen::Index r = 0, rr = 0; r < n; ++r) {
        if (r == b) continue;
        for (Eigen::Index c = 0, cc = 0; c < n; ++c) {
            if (c == b) continue;
            out(rr, cc++) = rows(r, c);
        }
        ++rr;
    }
    a_mat = std::move(out);
}

}  // namespace

Vector adjacent_similarities(const Matrix& keys) {
    if (keys.rows() < 2) {
        throw Error("nothing to merge");
    }
    Vector sims(keys.rows() - 1);
    for (Eigen::Index t = 0; t + 1 < keys.rows(); ++t) {
        sims(t) = cosine_similarity(keys.row(t), keys.row(t + 1));
    }
    return sims;
}

int select_pair(const Vector& sims) {
    if (sims.size() == 0) {
        throw Error("select_pair: empty similarity vector");
    }
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < sims.size(); ++t) {
        if (sims(t) > sims(best)) best = t;
    }
    return static_cast<int>(best);
}

Vector saliency_weights(const Matrix& attention) {
    check_stochastic(attention);
    Vector neg_entropy(attention.rows());
    for (Eigen::Index r = 0; r < attention.rows(); ++r) {
        neg_entropy(r) = negative_entropy(attention.row(r));
    }
    return minmax_scale(neg_entropy);
}

RowVector merge_pair(const RowVector& first, const RowVector& second, double alpha_first, double alpha_second,
                     bool renormalize) {
    const auto [wa, wb] = fusion_weights(alpha_first, alpha_second, renormalize);
    if (renormalize && first == second) {
        return first;
    }
    return wa * first + wb * second;
}

MergeOutcome tim_tm(const TokenGrid& grid, const AttentionArtifacts& artifacts, int r_t,
                    const ProvenanceMap& provenance, const TemporalMergeOptions& options) {
    if (r_t < 0 || r_t >= grid.n_t) {
        throw Error("R_T must satisfy 0 <= R_T < n_t");
    }
    if (r_t == 0) {
        return {grid, provenance};
    }
    if (artifacts.temporal_keys.size() != static_cast<std::size_t>(grid.n_s) ||
        artifacts.temporal_attention.size() != static_cast<std::size_t>(grid.n_s)) {
        throw Error("temporal artifacts do not match grid");
    }
    const int n_out = grid.n_t - r_t;
    std::vector<Track> tracks(static_cast<std::size_t>(grid.n_s));

    parallel_for(grid.n_s, [&](int s) {
        const Matrix& keys = artifacts.temporal_keys[static_cast<std::size_t>(s)];
        const Matrix& attention = artifacts.temporal_attention[static_cast<std::size_t>(s)];
        if (keys.rows() != grid.n_t || attention.rows() != grid.n_t) {
            throw Error("temporal artifacts do not match grid");
        }
        Track& tr = tracks[static_cast<std::size_t>(s)];
        for (int t = 0; t < grid.n_t; ++t) {
            tr.tokens.emplace_back(grid.token(t, s));
            tr.keys.emplace_back(keys.row(t));
            tr.groups.push_back(provenance.group(t, s));
        }
        tr.alpha = saliency_weights(attention);
        if (options.recompute_saliency) tr.attention = attention;

        for (int iter = 0; iter < r_t; ++iter) {
            const Eigen::Index n = static_cast<Eigen::Index>(tr.tokens.size());
            Vector sims(n - 1);
            for (Eigen::Index t = 0; t + 1 < n; ++t) {
                sims(t) = cosine_similarity(tr.keys[static_cast<std::size_t>(t)], tr.keys[static_cast<std::size_t>(t + 1)]);
            }
            const auto a = static_cast<std::size_t>(select_pair(sims));
            const std::size_t b = a + 1;
            const double alpha_a = tr.alpha(static_cast<Eigen::Index>(a));
            const double alpha_b = tr.alpha(static_cast<Eigen::Index>(b));

            tr.tokens[a] = merge_pair(tr.tokens[a], tr.tokens[b], alpha_a, alpha_b, options.renormalize);
            tr.keys[a] = merge_pair(tr.keys[a], tr.keys[b], alpha_a, alpha_b, options.renormalize);
            auto& merged = tr.groups[a];
            merged.insert(merged.end(), tr.groups[b].begin(), tr.groups[b].end());
            std::sort(merged.begin(), merged.end());
            tr.tokens.erase(tr.tokens.begin() + static_cast<std::ptrdiff_t>(b));
            tr.keys.erase(tr.keys.begin() + static_cast<std::ptrdiff_t>(b));
            tr.groups.erase(tr.groups.begin() + static_cast<std::ptrdiff_t>(b));

            if (options.recompute_saliency) {
                const auto [wa, wb] = fusion_weights(alpha_a, alpha_b, true);
                merge_attention(tr.attention, static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b), wa, wb);
                tr.alpha = saliency_weights(tr.attention);
            } else {
                // Saliency stays fixed within the layer; the fused slot takes the pair mean.
                tr.alpha(static_cast<Eigen::Index>(a)) = 0.5 * (alpha_a + alpha_b);
                erase_index(tr.alpha, static_cast<Eigen::Index>(b));
            }
        }
    });

    MergeOutcome out;
    out.grid = TokenGrid(n_out, grid.n_s, grid.channels());
    out.grid.cls = grid.cls;
    std::vector<std::vector<Cell>> groups(static_cast<std::size_t>(n_out) * grid.n_s);
    for (int s = 0; s < grid.n_s; ++s) {
        Track& tr = tracks[static_cast<std::size_t>(s)];
        for (int t = 0; t < n_out; ++t) {
            out.grid.token(t, s) = tr.tokens[static_cast<std::size_t>(t)];
            groups[static_cast<std::size_t>(t) * grid.n_s + s] = std::move(tr.groups[static_cast<std::size_t>(t)]);
        }
    }
    out.provenance = ProvenanceMap(provenance.original_t(), provenance.original_s(), n_out, grid.n_s, std::move(groups));
    return out;
}

}  // namespace stim
