#pragma once

// Redundancy diagnostics on encoder keys, and an information-bottleneck score
// estimated from class centroids and softmax-normalized distances.

#include <optional>
#include <vector>

#include "stim/types.hpp"

namespace stim {

struct SimilarityStudyConfig {
    int max_distance = 4;  // d_max
    int window = 3;        // k, odd
    int probe_layer = 9;   // 1-based
};

struct SimilarityCurves {
    // Entry d - 1 holds inter-frame distance d.
    std::vector<double> same_position;
    std::vector<double> window;
    std::vector<long long> same_position_pairs;
    std::vector<long long> window_pairs;
};

// Mean key cosine between (i, t) and (i, t + d), and between (i, t) and every
// other position j of the k x k window around i at (j, t + d). Keys are the
// per-frame n_s x C matrices of one layer on a grid_h x grid_w patch layout.
SimilarityCurves temporal_similarity_study(const std::vector<Matrix>& frame_keys, int grid_w,
                                           const SimilarityStudyConfig& config);

struct ClassSimilarity {
    std::optional<double> static_mean;
    std::optional<double> dynamic_mean;
};

// Intra-frame similarity of a token is its mean cosine to every other token of
// the frame; returns the mean over static and over dynamic tokens. A class
// with no tokens (or frames with a single token) yields no value.
ClassSimilarity static_dynamic_similarity(const std::vector<Matrix>& frame_keys,
                                          const std::vector<std::vector<char>>& dynamic_mask);

struct IBInputs {
    Matrix merged;            // Z_m, one row per sample
    Matrix raw;               // X, one row per sample
    std::vector<int> labels;  // Y
};

struct IBOptions {
    int raw_clusters = 16;     // quantization levels for X
    double temperature = 1.0;  // softmax over -d^2 / temperature
    int kmeans_iterations = 50;
};

struct IBScore {
    double i_zx = 0.0;
    double i_zy = 0.0;
    double ib = 0.0;  // i_zx - i_zy, lower is better
};

// I(Z_m; Y) = H(Y) - E_z H(p(y|z)), with p(y|z) a softmax over negative
// squared distances to the Z_m centroid of every class. I(Z_m; X) uses the
// same construction with X quantized by k-means into `raw_clusters` groups
// and the Z_m centroid of each group. Both clamp at zero. Sample order does
// not affect the result.
IBScore ib_score(const IBInputs& inputs, const IBOptions& options = {});

// Nearest-centroid quantization of the rows of `points` (deterministic
// farthest-point initialisation, then Lloyd iterations). Empty clusters are
// dropped; returned labels are dense in [0, cluster count).
std::vector<int> kmeans_quantize(const Matrix& points, int clusters, int iterations);

// Entropy in nats of the empirical distribution of `labels`.
double label_entropy(const std::vector<int>& labels);

}  // namespace stim
