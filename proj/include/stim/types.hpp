#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stim/error.hpp"
#include "stim/kernels.hpp"

namespace stim {

// Video transformer geometry. Defaults describe a TimeSformer-base encoder on
// 16 frames of 224x224.
struct ModelConfig {
    int frames = 16;
    int height = 224;
    int width = 224;
    int patch_size = 16;
    int tubelet = 1;
    int channels = 768;
    int layers = 12;
    int heads = 12;
    bool cls_enabled = true;

    // Throws ConfigError naming the violated constraint.
    void validate() const;

    int grid_h() const { return height / patch_size; }
    int grid_w() const { return width / patch_size; }
    int spatial_tokens() const { return grid_h() * grid_w(); }
    int temporal_tokens() const { return frames / tubelet; }
    int total_tokens() const { return spatial_tokens() * temporal_tokens(); }
    int head_dim() const { return channels / heads; }
};

// Rectangular grid of token embeddings: n_t temporal slots by n_s spatial
// slots, row (t * n_s + s) of `data` holds token (t, s).
struct TokenGrid {
    int n_t = 0;
    int n_s = 0;
    Matrix data;
    std::optional<RowVector> cls;

    TokenGrid() = default;
    TokenGrid(int temporal, int spatial, int channels);

    int channels() const { return static_cast<int>(data.cols()); }
    Eigen::Index index(int t, int s) const { return static_cast<Eigen::Index>(t) * n_s + s; }
    auto token(int t, int s) { return data.row(index(t, s)); }
    auto token(int t, int s) const { return data.row(index(t, s)); }

    // All tokens of frame t as an n_s x C block.
    auto frame(int t) { return data.middleRows(index(t, 0), n_s); }
    auto frame(int t) const { return data.middleRows(index(t, 0), n_s); }

    bool all_finite() const;
};

// One cell of the original (pre-merge) token grid.
struct Cell {
    int t = 0;
    int s = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

// For every live token, the original cells it has absorbed. Groups always
// partition the original T0 x S0 grid.
class ProvenanceMap {
public:
    ProvenanceMap() = default;
    static ProvenanceMap identity(int original_t, int original_s);

    // Builds from explicit groups laid out row-major over (n_t, n_s).
    ProvenanceMap(int original_t, int original_s, int n_t, int n_s, std::vector<std::vector<Cell>> groups);

    int original_t() const { return m_original_t; }
    int original_s() const { return m_original_s; }
    int n_t() const { return m_n_t; }
    int n_s() const { return m_n_s; }

    const std::vector<Cell>& group(int t, int s) const { return m_groups[index(t, s)]; }
    int size(int t, int s) const { return static_cast<int>(group(t, s).size()); }
    const std::vector<std::vector<Cell>>& groups() const { return m_groups; }

    // Live-cell index (t * n_s + s) owning each original cell, row-major over (T0, S0).
    std::vector<int> owner_table() const;

    // Throws Error when the groups are not a disjoint, exhaustive cover.
    void validate_partition() const;
    bool is_identity() const;

    friend bool operator==(const ProvenanceMap&, const ProvenanceMap&) = default;

private:
    std::size_t index(int t, int s) const { return static_cast<std::size_t>(t) * m_n_s + s; }

    int m_original_t = 0;
    int m_original_s = 0;
    int m_n_t = 0;
    int m_n_s = 0;
    std::vector<std::vector<Cell>> m_groups;
};

enum class MergeKind { none, temporal, spatial, temporal_then_spatial };

std::string to_string(MergeKind kind);
MergeKind merge_kind_from_string(const std::string& name);

// Segment count rule for spatial merging: fixed K, or 1 in the first half of
// the encoder and 2 in the second half.
struct SegmentRule {
    bool hierarchical = true;
    int fixed_k = 1;

    int resolve(int layer, int num_layers) const;
    std::string to_string() const;
    static SegmentRule parse(const std::string& text);
};

struct LayerPlan {
    MergeKind kind = MergeKind::none;
    int r_t = 0;
    int r_s = 0;
    int m = 2;
    SegmentRule segments;

    bool merges_temporal() const { return kind == MergeKind::temporal || kind == MergeKind::temporal_then_spatial; }
    bool merges_spatial() const { return kind == MergeKind::spatial || kind == MergeKind::temporal_then_spatial; }
    int effective_r_t() const { return merges_temporal() ? r_t : 0; }
    int effective_r_s() const { return merges_spatial() ? r_s : 0; }
};

struct GridDims {
    int n_t = 0;
    int n_s = 0;
    friend bool operator==(const GridDims&, const GridDims&) = default;
};

// Inclusive 1-based block range; empty when first > last.
struct BlockRange {
    int first = 1;
    int last = 0;
    bool contains(int layer) const { return layer >= first && layer <= last; }
};

class MergeSchedule {
public:
    MergeSchedule() = default;
    explicit MergeSchedule(std::vector<LayerPlan> layers) : m_layers(std::move(layers)) {}

    static MergeSchedule none(int num_layers);

    // Temporal merging on `temporal` blocks and spatial merging on `spatial`
    // blocks; blocks in both ranges run temporal then spatial.
    static MergeSchedule from_blocks(int num_layers, BlockRange temporal, int r_t, BlockRange spatial, int r_s,
                                     int m = 2, SegmentRule segments = {});

    int num_layers() const { return static_cast<int>(m_layers.size()); }
    const LayerPlan& layer(int one_based) const { return m_layers.at(static_cast<std::size_t>(one_based - 1)); }
    LayerPlan& layer(int one_based) { return m_layers.at(static_cast<std::size_t>(one_based - 1)); }
    const std::vector<LayerPlan>& layers() const { return m_layers; }

    // Throws ConfigError naming the first violated constraint.
    void validate(int initial_t, int initial_s) const;

    // Dims after the temporal stage of `layer` and after the full layer.
    GridDims dims_after_temporal(int layer, int initial_t, int initial_s) const;
    GridDims dims_after(int layer, int initial_t, int initial_s) const;

    bool is_noop() const;

private:
    std::vector<LayerPlan> m_layers;
};

}  // namespace stim
