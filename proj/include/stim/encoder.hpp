#pragma once

// Deterministic divided space-time encoder. Each block runs temporal
// attention (per spatial position), an optional temporal merge hook, spatial
// attention (per frame, CLS included), an optional spatial merge hook and the
// MLP.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "stim/types.hpp"
#include "stim/video.hpp"

namespace stim {

struct AttentionWeights {
    Matrix wq, wk, wv, wo;  // C x C, applied as x * W
    RowVector norm_scale, norm_shift;
};

struct LayerWeights {
    AttentionWeights temporal;
    AttentionWeights spatial;
    Matrix mlp_in;   // C x 4C
    Matrix mlp_out;  // 4C x C
    RowVector mlp_norm_scale, mlp_norm_shift;
};

// Keys and attention rows produced by one block. Keys are head-averaged.
struct AttentionArtifacts {
    std::vector<Matrix> temporal_keys;       // [n_s] of n_t x C_head
    std::vector<Matrix> temporal_attention;  // [n_s] of n_t x n_t, row-stochastic
    std::vector<Matrix> spatial_keys;        // [n_t] of n_s x C_head, CLS excluded
};

struct MergeContext {
    int layer = 1;  // 1-based
    int num_layers = 1;
    LayerPlan plan;
};

struct MergeOutcome {
    TokenGrid grid;
    ProvenanceMap provenance;
};

using MergeHook =
    std::function<MergeOutcome(const TokenGrid&, const ProvenanceMap&, const AttentionArtifacts&, const MergeContext&)>;

struct MergeHooks {
    MergeHook temporal;
    MergeHook spatial;
};

struct ForwardResult {
    TokenGrid output;
    ProvenanceMap provenance;
    std::vector<AttentionArtifacts> artifacts;    // one per layer
    std::vector<ProvenanceMap> layer_provenance;  // after each layer
    std::vector<GridDims> layer_dims;             // after each layer
};

struct EncoderOptions {
    // Adds ln(size) of each key token to the attention logits.
    bool proportional_attention = false;
    bool record_artifacts = true;
};

class Encoder {
public:
    static Encoder build(const ModelConfig& config, std::uint64_t seed, EncoderOptions options = {});

    const ModelConfig& config() const { return m_config; }
    const EncoderOptions& options() const { return m_options; }
    const std::vector<LayerWeights>& layers() const { return m_layers; }
    const Matrix& patch_embedding() const { return m_patch_embedding; }

    // FNV-1a over every weight's bit pattern.
    std::uint64_t checksum() const;

    TokenGrid tokenize(const Video& video) const;

    // Fixed sinusoidal code added to token (t, s).
    RowVector position_code(int t, int s) const;

    ForwardResult forward(const TokenGrid& grid, const MergeSchedule& schedule, const MergeHooks& hooks = {}) const;

    // One .sttk file per named matrix.
    void export_weights(const std::filesystem::path& dir) const;
    void import_weights(const std::filesystem::path& dir);

private:
    Encoder() = default;

    void temporal_stage(TokenGrid& grid, const ProvenanceMap& prov, const AttentionWeights& w,
                        AttentionArtifacts& artifacts) const;
    void spatial_stage(TokenGrid& grid, const ProvenanceMap& prov, const AttentionWeights& w,
                       AttentionArtifacts& artifacts) const;
    void mlp_stage(TokenGrid& grid, const LayerWeights& w) const;

    template <typename Self, typename F>
    static void for_each_named_matrix(Self& self, F&& f);

    ModelConfig m_config;
    EncoderOptions m_options;
    std::vector<LayerWeights> m_layers;
    Matrix m_patch_embedding;  // (tubelet * P * P * 3) x C
    RowVector m_cls;
};

}  // namespace stim
