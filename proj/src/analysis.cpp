#include "stim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stim/kernels.hpp"

namespace stim {

namespace {

void check_frames(const std::vector<Matrix>& frame_keys) {
    if (frame_keys.empty()) {
        throw Error("no frames");
    }
    for (const Matrix& k : frame_keys) {
        if (k.rows() != frame_keys.front().rows() || k.cols() != frame_keys.front().cols()) {
            throw Error("frames disagree on key shape");
        }
    }
}

// Sample order used for every reduction, so results do not depend on input order.
std::vector<int> canonical_order(const IBInputs& in) {
    std::vector<int> order(in.labels.size());
    std::iota(order.begin(), order.end(), 0);
    auto less_rows = [](const Matrix& m, int a, int b) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
        }
        return false;
    };
    auto equal_rows = [](const Matrix& m, int a, int b) { return m.row(a) == m.row(b); };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (!equal_rows(in.raw, a, b)) return less_rows(in.raw, a, b);
        if (!equal_rows(in.merged, a, b)) return less_rows(in.merged, a, b);
        return in.labels[static_cast<std::size_t>(a)] < in.labels[static_cast<std::size_t>(b)];
    });
    return order;
}

Matrix take_rows(const Matrix& m, const std::vector<int>& order) {
    Matrix out(static_cast<Eigen::Index>(order.size()), m.cols());
    for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
    return out;
}

// Dense relabelling in order of first appearance.
std::vector<int> densify(const std::vector<int>& labels, int& count) {
    std::map<int, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(ids.try_emplace(l, static_cast<int>(ids.size())).first->second);
    count = static_cast<int>(ids.size());
    return out;
}

// H(G) - mean_z H(softmax(-|z - c_g|^2 / temperature)), c_g the Z centroid of group g.
double centroid_information(const Matrix& z, const std::vector<int>& groups, double temperature) {
    int count = 0;
    const std::vector<int> dense = densify(groups, count);
    Matrix centroids = Matrix::Zero(count, z.cols());
    std::vector<double> members(static_cast<std::size_t>(count), 0.0);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        centroids.row(dense[static_cast<std::size_t>(i)]) += z.row(i);
        members[static_cast<std::size_t>(dense[static_cast<std::size_t>(i)])] += 1.0;
    }
    for (int g = 0; g < count; ++g) centroids.row(g) /= members[static_cast<std::size_t>(g)];

    double conditional = 0.0;
    Vector logits(count);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (int g = 0; g < count; ++g) logits(g) = -(z.row(i) - centroids.row(g)).squaredNorm() / temperature;
        conditional -= negative_entropy(softmax_row(logits));
    }
    conditional /= static_cast<double>(z.rows());
    return std::max(0.0, label_entropy(dense) - conditional);
}

}  // namespace

SimilarityCurves temporal_similarity_study(const std::vector<Matrix>& frame_keys, int grid_w,
                                           const SimilarityStudyConfig& config) {
    check_frames(frame_keys);
    const int n_t = static_cast<int>(frame_keys.size());
    const int n_s = static_cast<int>(frame_keys.front().rows());
    if (grid_w <= 0 || n_s % grid_w != 0) {
        throw Error("positions do not form a grid of the given width");
    }
    if (config.max_distance < 1 || config.max_distance >= n_t) {
        throw Error("max_distance must satisfy 1 <= d_max < n_t");
    }
    if (config.window < 1 || config.window % 2 == 0) {
        throw Error("window must be odd and >= 1");
    }
    const int grid_h = n_s / grid_w;
    const int half = config.window / 2;

    SimilarityCurves curves;
    for (int d = 1; d <= config.max_distance; ++d) {
        double same = 0.0;
        double win = 0.0;
        long long same_pairs = 0;
        long long win_pairs = 0;
        for (int t = 0; t + d < n_t; ++t) {
            const Matrix& a = frame_keys[static_cast<std::size_t>(t)];
            const Matrix& b = frame_keys[static_cast<std::size_t>(t + d)];
            for (int i = 0; i < n_s; ++i) {
                same += cosine_similarity(a.row(i), b.row(i));
                ++same_pairs;
                const int y = i / grid_w;
                const int x = i % grid_w;
                for (int dy = -half; dy <= half; ++dy) {
                    for (int dx = -half; dx <= half; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        const int yy = y + dy;
                        const int xx = x + dx;
                        if (yy < 0 || yy >= grid_h || xx < 0 || xx >= grid_w) continue;
                        win += cosine_similarity(a.row(i), b.row(yy * grid_w + xx));
                        ++win_pairs;
                    }
                }
            }
        }
        curves.same_position.push_back(same / static_cast<double>(same_pairs));
        curves.same_position_pairs.push_back(same_pairs);
        if (win_pairs > 0) {
            curves.window.push_back(win / static_cast<double>(win_pairs));
            curves.window_pairs.push_back(win_pairs);
        }
    }
    return curves;
}

ClassSimilarity static_dynamic_similarity(const std::vector<Matrix>& frame_keys,
                                          const std::vector<std::vector<char>>& dynamic_mask) {
    check_frames(frame_keys);
    if (dynamic_mask.size() != frame_keys.size()) {
        throw Error("mask frame count does not match keys");
    }
    const Eigen::Index n_s = frame_keys.front().rows();
    double sums[2] = {0.0, 0.0};
    long long counts[2] = {0, 0};
    for (std::size_t t = 0; t < frame_keys.size(); ++t) {
        if (dynamic_mask[t].size() != static_cast<std::size_t>(n_s)) {
            throw Error("mask dims do not match n_s");
        }
        if (n_s < 2) continue;
        const Matrix& k = frame_keys[t];
        for (Eigen::Index i = 0; i < n_s; ++i) {
            double s = 0.0;
            for (Eigen::Index j = 0; j < n_s; ++j) {
                if (j != i) s += cosine_similarity(k.row(i), k.row(j));
            }
            const int cls = dynamic_mask[t][static_cast<std::size_t>(i)] ? 1 : 0;
            sums[cls] += s / static_cast<double>(n_s - 1);
            ++counts[cls];
        }
    }
    ClassSimilarity out;
    if (counts[0] > 0) out.static_mean = sums[0] / static_cast<double>(counts[0]);
    if (counts[1] > 0) out.dynamic_mean = sums[1] / static_cast<double>(counts[1]);
    return out;
}

double label_entropy(const std::vector<int>& labels) {
    std::map<int, double> freq;
    for (int l : labels) freq[l] += 1.0;
    double h = 0.0;
    for (const auto& [label, n] : freq) {
        const double p = n / static_cast<double>(labels.size());
        h -= p * std::log(p);
    }
    return h;
}

std::vector<int> kmeans_quantize(const Matrix& points, int clusters, int iterations) {
    const Eigen::Index n = points.rows();
    if (n == 0 || clusters < 1) {
        throw Error("kmeans: need points and at least one cluster");
    }
    std::vector<Eigen::Index> seeds{0};
    Vector nearest = (points.rowwise() - points.row(0)).rowwise().squaredNorm();
    while (static_cast<int>(seeds.size()) < clusters) {
        Eigen::Index far = 0;
        const double best = nearest.maxCoeff(&far);
        if (best <= 0.0) break;
        seeds.push_back(far);
        nearest = nearest.cwiseMin((points.rowwise() - points.row(far)).rowwise().squaredNorm());
    }
    Matrix centroids(static_cast<Eigen::Index>(seeds.size()), points.cols());
    for (std::size_t k = 0; k < seeds.size(); ++k) centroids.row(static_cast<Eigen::Index>(k)) = points.row(seeds[k]);

    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < std::max(iterations, 1); ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
                assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(centroids.rows(), centroids.cols());
        std::vector<double> counts(static_cast<std::size_t>(centroids.rows()), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
            counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1.0;
        }
        for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
            if (counts[static_cast<std::size_t>(k)] > 0) centroids.row(k) = sums.row(k) / counts[static_cast<std::size_t>(k)];
        }
    }
    int count = 0;
    return densify(assign, count);
}

IBScore ib_score(const IBInputs& inputs, const IBOptions& options) {
    const std::size_t n = inputs.labels.size();
    if (static_cast<std::size_t>(inputs.merged.rows()) != n || static_cast<std::size_t>(inputs.raw.rows()) != n) {
        throw Error("IB inputs disagree on sample count");
    }
    int classes = 0;
    densify(inputs.labels, classes);
    if (classes < 2) {
        throw Error("IB score needs at least two classes");
    }
    if (n < static_cast<std::size_t>(classes)) {
        throw Error("fewer samples than classes");
    }
    if (options.temperature <= 0.0) {
        throw Error("temperature must be positive");
    }
    const std::vector<int> order = canonical_order(inputs);
    const Matrix z = take_rows(inputs.merged, order);
    const Matrix x = take_rows(inputs.raw, order);
    std::vector<int> y;
    for (int i : order) y.push_back(inputs.labels[static_cast<std::size_t>(i)]);

    IBScore score;
    score.i_zy = centroid_information(z, y, options.temperature);
    score.i_zx = centroid_information(z, kmeans_quantize(x, options.raw_clusters, options.kmeans_iterations),
                                      options.temperature);
    score.ib = score.i_zx - score.i_zy;
    return score;
}

}  // namespace stim
