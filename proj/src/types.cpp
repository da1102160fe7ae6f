#include "stim/types.hpp"

#include <algorithm>

namespace stim {

void ModelConfig::validate() const {
    if (frames <= 0 || height <= 0 || width <= 0) {
        throw ConfigError("video dims must be positive");
    }
    if (patch_size <= 0 || tubelet <= 0) {
        throw ConfigError("patch_size and tubelet must be positive");
    }
    if (height % patch_size != 0) {
        throw ConfigError("H not divisible by patch_size");
    }
    if (width % patch_size != 0) {
        throw ConfigError("W not divisible by patch_size");
    }
    if (frames % tubelet != 0) {
        throw ConfigError("T not divisible by tubelet");
    }
    if (channels <= 0 || layers <= 0 || heads <= 0) {
        throw ConfigError("channels, layers and heads must be positive");
    }
    if (channels % heads != 0) {
        throw ConfigError("C not divisible by heads");
    }
}

TokenGrid::TokenGrid(int temporal, int spatial, int channels)
    : n_t(temporal), n_s(spatial), data(Matrix::Zero(static_cast<Eigen::Index>(temporal) * spatial, channels)) {}

bool TokenGrid::all_finite() const {
    return data.allFinite() && (!cls || cls->allFinite());
}

ProvenanceMap ProvenanceMap::identity(int original_t, int original_s) {
    std::vector<std::vector<Cell>> groups;
    groups.reserve(static_cast<std::size_t>(original_t) * original_s);
    for (int t = 0; t < original_t; ++t) {
        for (int s = 0; s < original_s; ++s) {
            groups.push_back({Cell{t, s}});
        }
    }
    return ProvenanceMap(original_t, original_s, original_t, original_s, std::move(groups));
}

ProvenanceMap::ProvenanceMap(int original_t, int original_s, int n_t, int n_s, std::vector<std::vector<Cell>> groups)
    : m_original_t(original_t), m_original_s(original_s), m_n_t(n_t), m_n_s(n_s), m_groups(std::move(groups)) {
    if (m_groups.size() != static_cast<std::size_t>(n_t) * n_s) {
        throw Error("provenance: group count does not match live dims");
    }
}

std::vector<int> ProvenanceMap::owner_table() const {
    std::vector<int> owner(static_cast<std::size_t>(m_original_t) * m_original_s, -1);
    for (std::size_t g = 0; g < m_groups.size(); ++g) {
        for (const Cell& c : m_groups[g]) {
            owner[static_cast<std::size_t>(c.t) * m_original_s + c.s] = static_cast<int>(g);
        }
    }
    return owner;
}

void ProvenanceMap::validate_partition() const {
    std::vector<char> seen(static_cast<std::size_t>(m_original_t) * m_original_s, 0);
    std::size_t covered = 0;
    for (const auto& group : m_groups) {
        if (group.empty()) {
            throw Error("provenance is not a partition: empty group");
        }
        for (const Cell& c : group) {
            if (c.t < 0 || c.t >= m_original_t || c.s < 0 || c.s >= m_original_s) {
                throw Error("provenance is not a partition: cell out of range");
            }
            char& flag = seen[static_cast<std::size_t>(c.t) * m_original_s + c.s];
            if (flag) {
                throw Error("provenance is not a partition: cell claimed twice");
            }
            flag = 1;
            ++covered;
        }
    }
    if (covered != seen.size()) {
        throw Error("provenance is not a partition: cells missing");
    }
}

bool ProvenanceMap::is_identity() const {
    if (m_n_t != m_original_t || m_n_s != m_original_s) {
        return false;
    }
    for (int t = 0; t < m_n_t; ++t) {
        for (int s = 0; s < m_n_s; ++s) {
            const auto& g = group(t, s);
            if (g.size() != 1 || g.front() != Cell{t, s}) {
                return false;
            }
        }
    }
    return true;
}

std::string to_string(MergeKind kind) {
    switch (kind) {
        case MergeKind::none: return "none";
        case MergeKind::temporal: return "temporal";
        case MergeKind::spatial: return "spatial";
        case MergeKind::temporal_then_spatial: return "temporal-then-spatial";
    }
    return "none";
}

MergeKind merge_kind_from_string(const std::string& name) {
    if (name == "none") return MergeKind::none;
    if (name == "temporal") return MergeKind::temporal;
    if (name == "spatial") return MergeKind::spatial;
    if (name == "temporal-then-spatial" || name == "both") return MergeKind::temporal_then_spatial;
    throw ConfigError("unknown merge kind '" + name + "'");
}

int SegmentRule::resolve(int layer, int num_layers) const {
    if (!hierarchical) {
        return fixed_k;
    }
    // K = 1 while layer <= L/2, else 2.
    return 2 * layer <= num_layers ? 1 : 2;
}

std::string SegmentRule::to_string() const {
    return hierarchical ? std::string("hierarchical") : std::to_string(fixed_k);
}

SegmentRule SegmentRule::parse(const std::string& text) {
    if (text == "hierarchical") {
        return SegmentRule{};
    }
    int k = 0;
    try {
        std::size_t used = 0;
        k = std::stoi(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        throw ConfigError("segment rule must be 'hierarchical' or a positive integer, got '" + text + "'");
    }
    if (k < 1) {
        throw ConfigError("K must be >= 1");
    }
    return SegmentRule{false, k};
}

MergeSchedule MergeSchedule::none(int num_layers) {
    return MergeSchedule(std::vector<LayerPlan>(static_cast<std::size_t>(num_layers)));
}

MergeSchedule MergeSchedule::from_blocks(int num_layers, BlockRange temporal, int r_t, BlockRange spatial, int r_s,
                                         int m, SegmentRule segments) {
    std::vector<LayerPlan> layers(static_cast<std::size_t>(num_layers));
    for (int l = 1; l <= num_layers; ++l) {
        LayerPlan& plan = layers[static_cast<std::size_t>(l - 1)];
        const bool t = temporal.contains(l) && r_t > 0;
        const bool s = spatial.contains(l) && r_s > 0;
        plan.kind = t && s ? MergeKind::temporal_then_spatial
                    : t    ? MergeKind::temporal
                    : s    ? MergeKind::spatial
                           : MergeKind::none;
        plan.r_t = t ? r_t : 0;
        plan.r_s = s ? r_s : 0;
        plan.m = m;
        plan.segments = segments;
    }
    return MergeSchedule(std::move(layers));
}

void MergeSchedule::validate(int initial_t, int initial_s) const {
    int n_t = initial_t;
    int n_s = initial_s;
    for (int l = 1; l <= num_layers(); ++l) {
        const LayerPlan& p = layer(l);
        const std::string where = "layer " + std::to_string(l) + ": ";
        if (p.r_t < 0 || p.r_s < 0) {
            throw ConfigError(where + "merge counts must be non-negative");
        }
        if (p.merges_temporal() && p.r_t >= n_t) {
            throw ConfigError(where + "cumulative temporal removals must leave at least one frame (R_T < n_t)");
        }
        n_t -= p.effective_r_t();
        if (p.merges_spatial()) {
            if (p.m < 1) {
                throw ConfigError(where + "m must be >= 1");
            }
            if (p.r_s >= n_s) {
                throw ConfigError(where + "cumulative spatial removals must leave at least one position (R_S < n_s)");
            }
            const int pool = p.m * p.r_s;
            if (pool > n_s) {
                throw ConfigError(where + "m * R_S exceeds current n_s");
            }
            if (p.r_s > 0 && (p.r_s > (pool + 1) / 2 || pool / 2 < 1)) {
                throw ConfigError(where + "candidate pool too small");
            }
            if (!p.segments.hierarchical && p.segments.fixed_k < 1) {
                throw ConfigError(where + "K must be >= 1");
            }
        }
        n_s -= p.effective_r_s();
    }
}

GridDims MergeSchedule::dims_after_temporal(int layer_index, int initial_t, int initial_s) const {
    GridDims d = layer_index > 1 ? dims_after(layer_index - 1, initial_t, initial_s) : GridDims{initial_t, initial_s};
    d.n_t -= layer(layer_index).effective_r_t();
    return d;
}

GridDims MergeSchedule::dims_after(int layer_index, int initial_t, int initial_s) const {
    GridDims d{initial_t, initial_s};
    for (int l = 1; l <= layer_index; ++l) {
        d.n_t -= layer(l).effective_r_t();
        d.n_s -= layer(l).effective_r_s();
    }
    return d;
}

bool MergeSchedule::is_noop() const {
    return std::all_of(m_layers.begin(), m_layers.end(),
                       [](const LayerPlan& p) { return p.effective_r_t() == 0 && p.effective_r_s() == 0; });
}

}  // namespace stim
