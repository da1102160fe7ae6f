#include "stim/cost_model.hpp"

namespace stim {

namespace {

constexpr Flops kFlopsPerMac = 2;

Flops projections(Flops tokens, Flops c) { return kFlopsPerMac * 4 * tokens * c * c; }

// QK^T and AV over `groups` independent sequences of `len` tokens.
Flops attention_core(Flops groups, Flops len, Flops c) { return kFlopsPerMac * 2 * groups * len * len * c; }

void check_dims(GridDims d) {
    if (d.n_t <= 0 || d.n_s <= 0) {
        throw Error("layer_flops: dims must be positive");
    }
}

}  // namespace

LayerFlops layer_flops(GridDims in, GridDims after_temporal, GridDims out, int channels, bool with_cls) {
    check_dims(in);
    check_dims(after_temporal);
    check_dims(out);
    if (channels <= 0) {
        throw Error("layer_flops: channels must be positive");
    }
    const Flops c = static_cast<Flops>(channels);
    const Flops cls = with_cls ? 1 : 0;

    const Flops t_tokens = static_cast<Flops>(in.n_t) * static_cast<Flops>(in.n_s);
    const Flops frame_len = static_cast<Flops>(after_temporal.n_s) + cls;
    const Flops s_tokens = static_cast<Flops>(after_temporal.n_t) * frame_len;
    const Flops mlp_tokens = static_cast<Flops>(out.n_t) * static_cast<Flops>(out.n_s) + cls;

    LayerFlops f;
    f.projection = projections(t_tokens, c) + projections(s_tokens, c);
    f.temporal_attention = attention_core(static_cast<Flops>(in.n_s), static_cast<Flops>(in.n_t), c);
    f.spatial_attention = attention_core(static_cast<Flops>(after_temporal.n_t), frame_len, c);
    f.mlp = kFlopsPerMac * 8 * mlp_tokens * c * c;
    return f;
}

LayerFlops layer_flops(int n_t, int n_s, int channels, bool with_cls) {
    const GridDims d{n_t, n_s};
    return layer_flops(d, d, d, channels, with_cls);
}

CostReport schedule_cost(const ModelConfig& config, const MergeSchedule& schedule) {
    config.validate();
    if (schedule.num_layers() != config.layers) {
        throw ConfigError("schedule has " + std::to_string(schedule.num_layers()) + " layers, model has " +
                          std::to_string(config.layers));
    }
    const int n_t0 = config.temporal_tokens();
    const int n_s0 = config.spatial_tokens();
    schedule.validate(n_t0, n_s0);

    CostReport report;
    GridDims current{n_t0, n_s0};
    for (int l = 1; l <= config.layers; ++l) {
        const LayerPlan& plan = schedule.layer(l);
        const GridDims mid{current.n_t - plan.effective_r_t(), current.n_s};
        const GridDims out{mid.n_t, mid.n_s - plan.effective_r_s()};
        LayerCost cost{l, current, out, layer_flops(current, mid, out, config.channels, config.cls_enabled)};
        report.total += cost.flops.total();
        report.baseline_total += layer_flops(n_t0, n_s0, config.channels, config.cls_enabled).total();
        report.layers.push_back(cost);
        current = out;
    }
    report.ratio = static_cast<double>(report.total) / static_cast<double>(report.baseline_total);
    return report;
}

}  // namespace stim
