#include "stim/encoder.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "stim/kernels.hpp"
#include "stim/parallel.hpp"
#include "stim/tensor_file.hpp"

namespace stim {

namespace {

// Keeps content, not layout, dominant in the embedding.
constexpr double kPositionScale = 0.3;

// splitmix64; portable, so weights are bit-identical across standard libraries.
class WeightStream {
public:
    WeightStream(std::uint64_t seed, std::uint64_t stream) : m_state(seed * 0x9E3779B97F4A7C15ull ^ (stream + 1) * 0xBF58476D1CE4E5B9ull) {}

    std::uint64_t next() {
        std::uint64_t z = (m_state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [-bound, bound).
    double uniform(double bound) {
        const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return (2.0 * u - 1.0) * bound;
    }

private:
    std::uint64_t m_state;
};

Matrix random_matrix(WeightStream& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(bound);
    return m;
}

AttentionWeights random_attention(WeightStream& rng, int channels) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    AttentionWeights w;
    w.wq = random_matrix(rng, channels, channels, bound);
    w.wk = random_matrix(rng, channels, channels, bound);
    w.wv = random_matrix(rng, channels, channels, bound);
    w.wo = random_matrix(rng, channels, channels, bound);
    w.norm_scale = RowVector::Ones(channels);
    w.norm_shift = RowVector::Zero(channels);
    return w;
}

Matrix layer_norm(const Matrix& x, const RowVector& scale, const RowVector& shift) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + 1e-6);
        out.row(r) = ((x.row(r).array() - mean) * inv).matrix().cwiseProduct(scale) + shift;
    }
    return out;
}

double gelu(double v) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
}

struct AttentionOutput {
    Matrix update;      // rows x C, already passed through the output projection
    Matrix keys;        // rows x C_head, head-averaged
    Matrix attention;   // rows x rows, head-averaged
};

// Multi-head self-attention over the rows of x (pre-norm applied here).
AttentionOutput attend(const Matrix& x, const AttentionWeights& w, int heads, const std::vector<double>* log_sizes) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = x.cols();
    const Eigen::Index d = c / heads;
    const Matrix y = layer_norm(x, w.norm_scale, w.norm_shift);
    const Matrix q = y * w.wq;
    const Matrix k = y * w.wk;
    const Matrix v = y * w.wv;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    AttentionOutput out;
    Matrix heads_out(n, c);
    out.keys = Matrix::Zero(n, d);
    out.attention = Matrix::Zero(n, n);
    for (int h = 0; h < heads; ++h) {
        const auto qh = q.middleCols(h * d, d);
        const auto kh = k.middleCols(h * d, d);
        const auto vh = v.middleCols(h * d, d);
        Matrix logits = (qh * kh.transpose()) * scale;
        if (log_sizes) {
            for (Eigen::Index j = 0; j < n; ++j) logits.col(j).array() += (*log_sizes)[static_cast<std::size_t>(j)];
        }
        Matrix probs(n, n);
        for (Eigen::Index r = 0; r < n; ++r) probs.row(r) = softmax_row(logits.row(r).transpose()).transpose();
        heads_out.middleCols(h * d, d) = probs * vh;
        out.keys += kh;
        out.attention += probs;
    }
    out.keys /= static_cast<double>(heads);
    out.attention /= static_cast<double>(heads);
    out.update = heads_out * w.wo;
    return out;
}

void check_outcome(const MergeOutcome& outcome, GridDims expected, int channels, bool has_cls) {
    const TokenGrid& g = outcome.grid;
    const ProvenanceMap& p = outcome.provenance;
    if (g.n_t != expected.n_t || g.n_s != expected.n_s || g.channels() != channels ||
        g.data.rows() != static_cast<Eigen::Index>(g.n_t) * g.n_s || p.n_t() != g.n_t || p.n_s() != g.n_s ||
        g.cls.has_value() != has_cls) {
        throw Error("merge contract violation");
    }
}

}  // namespace

Encoder Encoder::build(const ModelConfig& config, std::uint64_t seed, EncoderOptions options) {
    config.validate();
    Encoder enc;
    enc.m_config = config;
    enc.m_options = options;
    const int c = config.channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(c));
    enc.m_layers.reserve(static_cast<std::size_t>(config.layers));
    for (int l = 0; l < config.layers; ++l) {
        WeightStream rng(seed, static_cast<std::uint64_t>(l) + 1);
        LayerWeights lw;
        lw.temporal = random_attention(rng, c);
        lw.spatial = random_attention(rng, c);
        lw.mlp_in = random_matrix(rng, c, 4 * c, bound);
        lw.mlp_out = random_matrix(rng, 4 * c, c, bound);
        lw.mlp_norm_scale = RowVector::Ones(c);
        lw.mlp_norm_shift = RowVector::Zero(c);
        enc.m_layers.push_back(std::move(lw));
    }
    WeightStream embed_rng(seed, 0);
    const int patch_dim = config.tubelet * config.patch_size * config.patch_size * 3;
    enc.m_patch_embedding = random_matrix(embed_rng, patch_dim, c, 1.0 / std::sqrt(static_cast<double>(patch_dim)));
    enc.m_cls = random_matrix(embed_rng, 1, c, bound);
    return enc;
}

template <typename Self, typename F>
void Encoder::for_each_named_matrix(Self& self, F&& f) {
    f(std::string("patch_embedding"), self.m_patch_embedding);
    for (std::size_t l = 0; l < self.m_layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l + 1) + ".";
        auto& w = self.m_layers[l];
        for (auto [name, att] : {std::pair{"temporal", &w.temporal}, std::pair{"spatial", &w.spatial}}) {
            const std::string a = p + name + ".";
            f(a + "wq", att->wq);
            f(a + "wk", att->wk);
            f(a + "wv", att->wv);
            f(a + "wo", att->wo);
        }
        f(p + "mlp_in", w.mlp_in);
        f(p + "mlp_out", w.mlp_out);
    }
}

std::uint64_t Encoder::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xFFu;
                h *= 0x100000001b3ull;
            }
        }
    };
    mix(m_patch_embedding);
    mix(m_cls);
    for (const auto& w : m_layers) {
        for (const AttentionWeights* a : {&w.temporal, &w.spatial}) {
            mix(a->wq);
            mix(a->wk);
            mix(a->wv);
            mix(a->wo);
            mix(a->norm_scale);
            mix(a->norm_shift);
        }
        mix(w.mlp_in);
        mix(w.mlp_out);
        mix(w.mlp_norm_scale);
        mix(w.mlp_norm_shift);
    }
    return h;
}

RowVector Encoder::position_code(int t, int s) const {
    const int c = m_config.channels;
    const int half = c / 2;
    RowVector code(c);
    auto fill = [](RowVector& out, int begin, int count, int index, double top_freq) {
        for (int j = 0; j < count; ++j) {
            const double freq = top_freq * std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / std::max(count, 1));
            out(begin + j) = (j % 2 == 0) ? std::sin(index * freq) : std::cos(index * freq);
        }
    };
    fill(code, 0, half, s, 1.0);
    // Time uses frequencies below pi / (2 n_t) so code similarity falls monotonically with frame distance.
    fill(code, half, c - half, t, std::numbers::pi / (2.0 * m_config.temporal_tokens()));
    return kPositionScale * code;
}

TokenGrid Encoder::tokenize(const Video& video) const {
    const ModelConfig& cfg = m_config;
    if (video.frames != cfg.frames || video.height != cfg.height || video.width != cfg.width ||
        video.pixels.size() != static_cast<std::size_t>(video.frames) * video.height * video.width * 3) {
        throw Error("video dims do not match model config");
    }
    const int p = cfg.patch_size;
    const int gw = cfg.grid_w();
    TokenGrid grid(cfg.temporal_tokens(), cfg.spatial_tokens(), cfg.channels);
    const Eigen::Index patch_dim = m_patch_embedding.rows();
    parallel_for(grid.n_t, [&](int t) {
        RowVector patch(patch_dim);
        for (int s = 0; s < grid.n_s; ++s) {
            const int gy = s / gw;
            const int gx = s % gw;
            Eigen::Index k = 0;
            for (int dt = 0; dt < cfg.tubelet; ++dt)
                for (int y = 0; y < p; ++y)
                    for (int x = 0; x < p; ++x)
                        for (int ch = 0; ch < 3; ++ch)
                            patch(k++) = video.at(t * cfg.tubelet + dt, gy * p + y, gx * p + x, ch);
            grid.token(t, s) = patch * m_patch_embedding + position_code(t, s);
        }
    });
    if (cfg.cls_enabled) {
        grid.cls = m_cls;
    }
    return grid;
}

void Encoder::temporal_stage(TokenGrid& grid, const ProvenanceMap& prov, const AttentionWeights& w,
                             AttentionArtifacts& artifacts) const {
    const int heads = m_config.heads;
    artifacts.temporal_keys.assign(static_cast<std::size_t>(grid.n_s), Matrix());
    artifacts.temporal_attention.assign(static_cast<std::size_t>(grid.n_s), Matrix());
    Matrix updated = grid.data;
    parallel_for(grid.n_s, [&](int s) {
        Matrix track(grid.n_t, grid.channels());
        std::vector<double> log_sizes;
        for (int t = 0; t < grid.n_t; ++t) {
            track.row(t) = grid.token(t, s);
            if (m_options.proportional_attention) log_sizes.push_back(std::log(prov.size(t, s)));
        }
        AttentionOutput out = attend(track, w, heads, m_options.proportional_attention ? &log_sizes : nullptr);
        for (int t = 0; t < grid.n_t; ++t) updated.row(grid.index(t, s)) += out.update.row(t);
        artifacts.temporal_keys[static_cast<std::size_t>(s)] = std::move(out.keys);
        artifacts.temporal_attention[static_cast<std::size_t>(s)] = std::move(out.attention);
    });
    grid.data = std::move(updated);
}

void Encoder::spatial_stage(TokenGrid& grid, const ProvenanceMap& prov, const AttentionWeights& w,
                            AttentionArtifacts& artifacts) const {
    const int heads = m_config.heads;
    const bool has_cls = grid.cls.has_value();
    const int offset = has_cls ? 1 : 0;
    artifacts.spatial_keys.assign(static_cast<std::size_t>(grid.n_t), Matrix());
    std::vector<RowVector> cls_updates(static_cast<std::size_t>(grid.n_t));
    Matrix updated = grid.data;
    parallel_for(grid.n_t, [&](int t) {
        Matrix frame(grid.n_s + offset, grid.channels());
        std::vector<double> log_sizes;
        if (has_cls) {
            frame.row(0) = *grid.cls;
            log_sizes.push_back(0.0);
        }
        frame.bottomRows(grid.n_s) = grid.frame(t);
        if (m_options.proportional_attention) {
            for (int s = 0; s < grid.n_s; ++s) log_sizes.push_back(std::log(prov.size(t, s)));
        }
        AttentionOutput out = attend(frame, w, heads, m_options.proportional_attention ? &log_sizes : nullptr);
        updated.middleRows(grid.index(t, 0), grid.n_s) += out.update.bottomRows(grid.n_s);
        if (has_cls) cls_updates[static_cast<std::size_t>(t)] = out.update.row(0);
        artifacts.spatial_keys[static_cast<std::size_t>(t)] = out.keys.bottomRows(grid.n_s);
    });
    grid.data = std::move(updated);
    if (has_cls) {
        RowVector mean = RowVector::Zero(grid.channels());
        for (const auto& u : cls_updates) mean += u;
        *grid.cls += mean / static_cast<double>(grid.n_t);
    }
}

void Encoder::mlp_stage(TokenGrid& grid, const LayerWeights& w) const {
    auto apply = [&](const Matrix& x) {
        Matrix h = layer_norm(x, w.mlp_norm_scale, w.mlp_norm_shift) * w.mlp_in;
        h = h.unaryExpr([](double v) { return gelu(v); });
        return Matrix(h * w.mlp_out);
    };
    const int rows_per_chunk = std::max(1, grid.n_s);
    Matrix updated = grid.data;
    parallel_for(grid.n_t, [&](int t) {
        const Eigen::Index begin = grid.index(t, 0);
        updated.middleRows(begin, rows_per_chunk) += apply(grid.data.middleRows(begin, rows_per_chunk));
    });
    grid.data = std::move(updated);
    if (grid.cls) {
        *grid.cls += apply(Matrix(*grid.cls)).row(0);
    }
}

ForwardResult Encoder::forward(const TokenGrid& input, const MergeSchedule& schedule, const MergeHooks& hooks) const {
    if (schedule.num_layers() != m_config.layers) {
        throw ConfigError("schedule has " + std::to_string(schedule.num_layers()) + " layers, model has " +
                          std::to_string(m_config.layers));
    }
    if (input.channels() != m_config.channels || input.data.rows() != static_cast<Eigen::Index>(input.n_t) * input.n_s) {
        throw Error("token grid does not match model channels");
    }
    schedule.validate(input.n_t, input.n_s);

    ForwardResult result;
    result.output = input;
    result.provenance = ProvenanceMap::identity(input.n_t, input.n_s);
    TokenGrid& grid = result.output;
    ProvenanceMap& prov = result.provenance;
    const bool has_cls = grid.cls.has_value();

    for (int l = 1; l <= m_config.layers; ++l) {
        const LayerWeights& w = m_layers[static_cast<std::size_t>(l - 1)];
        const LayerPlan& plan = schedule.layer(l);
        const MergeContext ctx{l, m_config.layers, plan};
        AttentionArtifacts artifacts;

        temporal_stage(grid, prov, w.temporal, artifacts);
        if (plan.merges_temporal() && plan.r_t > 0) {
            if (!hooks.temporal) throw Error("schedule requests temporal merging but no temporal hook is set");
            MergeOutcome outcome = hooks.temporal(grid, prov, artifacts, ctx);
            check_outcome(outcome, GridDims{grid.n_t - plan.r_t, grid.n_s}, m_config.channels, has_cls);
            grid = std::move(outcome.grid);
            prov = std::move(outcome.provenance);
        }

        spatial_stage(grid, prov, w.spatial, artifacts);
        if (plan.merges_spatial() && plan.r_s > 0) {
            if (!hooks.spatial) throw Error("schedule requests spatial merging but no spatial hook is set");
            MergeOutcome outcome = hooks.spatial(grid, prov, artifacts, ctx);
            check_outcome(outcome, GridDims{grid.n_t, grid.n_s - plan.r_s}, m_config.channels, has_cls);
            grid = std::move(outcome.grid);
            prov = std::move(outcome.provenance);
        }

        mlp_stage(grid, w);

        if (m_options.record_artifacts) result.artifacts.push_back(std::move(artifacts));
        result.layer_provenance.push_back(prov);
        result.layer_dims.push_back(GridDims{grid.n_t, grid.n_s});
    }
    return result;
}

void Encoder::export_weights(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for_each_named_matrix(*this, [&](const std::string& name, const Matrix& m) { write_tensor(dir / (name + ".sttk"), to_tensor(m)); });
    write_tensor(dir / "cls.sttk", to_tensor(m_cls));
}

void Encoder::import_weights(const std::filesystem::path& dir) {
    for_each_named_matrix(*this, [&](const std::string& name, Matrix& m) {
        Matrix loaded = matrix_from_tensor(read_tensor(dir / (name + ".sttk")));
        if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
            throw Error("weight '" + name + "' has wrong shape");
        }
        m = std::move(loaded);
    });
    Matrix cls = matrix_from_tensor(read_tensor(dir / "cls.sttk"));
    if (cls.size() != m_cls.size()) throw Error("weight 'cls' has wrong shape");
    m_cls = cls.row(0);
}

}  // namespace stim
