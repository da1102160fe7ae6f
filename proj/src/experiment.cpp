#include "stim/experiment.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stim/tensor_file.hpp"
#include "stim/tome.hpp"

namespace stim {

using nlohmann::json;

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

BlockRange parse_blocks(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return BlockRange{1, 0};
    const json& v = j.at(key);
    if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer()) {
        return BlockRange{v[0].get<int>(), v[1].get<int>()};
    }
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        const auto dash = s.find('-');
        try {
            if (dash == std::string::npos) {
                const int b = std::stoi(s);
                return BlockRange{b, b};
            }
            return BlockRange{std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
        } catch (const std::exception&) {
        }
    }
    throw ConfigError(std::string("'") + key + "' must be [first, last] or \"first-last\"");
}

SegmentRule parse_segments(const json& j) {
    if (!j.contains("segments")) return SegmentRule{};
    const json& v = j.at("segments");
    if (v.is_number_integer()) return SegmentRule::parse(std::to_string(v.get<int>()));
    if (v.is_string()) return SegmentRule::parse(v.get<std::string>());
    throw ConfigError("'segments' must be \"hierarchical\" or an integer");
}

json model_to_json(const ModelConfig& m) {
    return json{{"frames", m.frames},     {"height", m.height}, {"width", m.width},
                {"patch_size", m.patch_size}, {"tubelet", m.tubelet}, {"channels", m.channels},
                {"layers", m.layers},     {"heads", m.heads},   {"cls", m.cls_enabled}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    read_if(j, "frames", m.frames);
    read_if(j, "height", m.height);
    read_if(j, "width", m.width);
    read_if(j, "patch_size", m.patch_size);
    read_if(j, "tubelet", m.tubelet);
    read_if(j, "channels", m.channels);
    read_if(j, "layers", m.layers);
    read_if(j, "heads", m.heads);
    read_if(j, "cls", m.cls_enabled);
    return m;
}

SyntheticVideoSpec synthetic_from_json(const json& j, const ModelConfig& model) {
    SyntheticVideoSpec s;
    s.frames = model.frames;
    s.height = model.height;
    s.width = model.width;
    s.patch_size = model.patch_size;
    read_if(j, "texture_seed", s.texture_seed);
    read_if(j, "object_size", s.object_size);
    read_if(j, "start_x", s.start_x);
    read_if(j, "start_y", s.start_y);
    read_if(j, "velocity_x", s.velocity_x);
    read_if(j, "velocity_y", s.velocity_y);
    read_if(j, "period", s.period);
    read_if(j, "noise", s.noise);
    if (j.contains("trajectory")) s.trajectory = trajectory_from_string(j.at("trajectory").get<std::string>());
    return s;
}

json synthetic_to_json(const SyntheticVideoSpec& s) {
    return json{{"texture_seed", s.texture_seed}, {"object_size", s.object_size}, {"start_x", s.start_x},
                {"start_y", s.start_y},           {"velocity_x", s.velocity_x},   {"velocity_y", s.velocity_y},
                {"trajectory", to_string(s.trajectory)}, {"period", s.period}, {"noise", s.noise}};
}

double round9(double v) {
    if (!std::isfinite(v)) return v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

void round_numbers(json& j) {
    if (j.is_number_float()) {
        j = round9(j.get<double>());
    } else if (j.is_structured()) {
        for (auto& child : j) round_numbers(child);
    }
}

json flops_to_json(const LayerFlops& f) {
    return json{{"projection", f.projection},
                {"temporal_attention", f.temporal_attention},
                {"spatial_attention", f.spatial_attention},
                {"mlp", f.mlp},
                {"total", f.total()}};
}

json cost_to_json(const CostReport& cost) {
    json layers = json::array();
    for (const LayerCost& l : cost.layers) {
        layers.push_back(json{{"layer", l.layer},
                              {"input", {{"n_t", l.input.n_t}, {"n_s", l.input.n_s}}},
                              {"output", {{"n_t", l.output.n_t}, {"n_s", l.output.n_s}}},
                              {"flops", flops_to_json(l.flops)}});
    }
    return json{{"layers", layers},
                {"total_flops", cost.total},
                {"baseline_flops", cost.baseline_total},
                {"total_gflops", cost.gflops()},
                {"baseline_gflops", cost.baseline_gflops()},
                {"ratio", cost.ratio}};
}

json config_echo(const ExperimentConfig& c) {
    json j{{"model", model_to_json(c.model)},
           {"seed", c.seed},
           {"merger", c.merger},
           {"flags",
            {{"raw_eq6", c.flags.raw_eq6},
             {"per_frame_matching", c.flags.per_frame_matching},
             {"proportional_attention", c.flags.proportional_attention},
             {"recompute_saliency", c.flags.recompute_saliency}}},
           {"schedule", schedule_to_json(c.schedule)}};
    if (c.input_path.empty()) {
        j["input"] = json{{"kind", "synthetic"}, {"synthetic", synthetic_to_json(c.synthetic)}};
    } else {
        j["input"] = json{{"kind", "file"}, {"path", c.input_path.generic_string()}};
    }
    return j;
}

MergeHooks hooks_for(const ExperimentConfig& c) {
    if (c.merger == "random") {
        return random_hooks(c.seed);
    }
    StimOptions opts;
    opts.temporal.renormalize = !c.flags.raw_eq6;
    opts.temporal.recompute_saliency = c.flags.recompute_saliency;
    opts.spatial.per_frame_matching = c.flags.per_frame_matching;
    return stim_hooks(opts);
}

Encoder encoder_for(const ExperimentConfig& c) {
    EncoderOptions opts;
    opts.proportional_attention = c.flags.proportional_attention;
    return Encoder::build(c.model, c.seed, opts);
}

// Per-token mask [n_t][n_s] from a per-frame mask, OR-ed over each tubelet.
std::vector<std::vector<char>> token_mask(const std::vector<std::vector<char>>& frame_mask, int tubelet) {
    std::vector<std::vector<char>> out(frame_mask.size() / static_cast<std::size_t>(tubelet));
    for (std::size_t t = 0; t < out.size(); ++t) {
        out[t] = frame_mask[t * static_cast<std::size_t>(tubelet)];
        for (int k = 1; k < tubelet; ++k) {
            const auto& m = frame_mask[t * static_cast<std::size_t>(tubelet) + static_cast<std::size_t>(k)];
            for (std::size_t p = 0; p < m.size(); ++p) out[t][p] = out[t][p] || m[p];
        }
    }
    return out;
}

RowVector pooled(const TokenGrid& grid) {
    return grid.data.colwise().mean();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t grid_checksum(const TokenGrid& g) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (Eigen::Index i = 0; i < g.data.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(g.data.data()[i]);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFFu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    if (schedule.num_layers() != model.layers) {
        throw ConfigError("schedule has " + std::to_string(schedule.num_layers()) + " layers, model has " +
                          std::to_string(model.layers));
    }
    schedule.validate(model.temporal_tokens(), model.spatial_tokens());
    if (merger != "stim" && merger != "random") {
        throw ConfigError("merger must be 'stim' or 'random'");
    }
    if (analysis.enabled) {
        if (analysis.study.probe_layer < 1 || analysis.study.probe_layer > model.layers) {
            throw ConfigError("probe_layer out of range");
        }
        if (analysis.study.max_distance < 1 || analysis.study.max_distance >= model.temporal_tokens()) {
            throw ConfigError("max_distance must satisfy 1 <= d_max < n_t");
        }
        if (analysis.study.window < 1 || analysis.study.window % 2 == 0) {
            throw ConfigError("window must be odd and >= 1");
        }
    }
    if (ib.enabled && ib.samples < 2) {
        throw ConfigError("ib.samples must be >= 2");
    }
}

nlohmann::json schedule_to_json(const MergeSchedule& schedule) {
    json layers = json::array();
    for (int l = 1; l <= schedule.num_layers(); ++l) {
        const LayerPlan& p = schedule.layer(l);
        layers.push_back(json{{"layer", l},
                              {"kind", to_string(p.kind)},
                              {"r_t", p.effective_r_t()},
                              {"r_s", p.effective_r_s()},
                              {"m", p.m},
                              {"segments", p.segments.to_string()}});
    }
    return json{{"layers", layers}};
}

MergeSchedule schedule_from_json(const json& j, int num_layers) {
    if (j.is_null()) {
        return MergeSchedule::none(num_layers);
    }
    if (!j.is_object()) {
        throw ConfigError("schedule must be an object");
    }
    if (j.contains("layers")) {
        const json& arr = j.at("layers");
        if (!arr.is_array() || static_cast<int>(arr.size()) != num_layers) {
            throw ConfigError("schedule.layers must list exactly " + std::to_string(num_layers) + " layers");
        }
        std::vector<LayerPlan> plans;
        for (const json& e : arr) {
            LayerPlan p;
            if (e.contains("kind")) p.kind = merge_kind_from_string(e.at("kind").get<std::string>());
            read_if(e, "r_t", p.r_t);
            read_if(e, "r_s", p.r_s);
            read_if(e, "m", p.m);
            p.segments = parse_segments(e);
            plans.push_back(p);
        }
        return MergeSchedule(std::move(plans));
    }
    int r_t = 0;
    int r_s = 0;
    int m = 2;
    read_if(j, "r_t", r_t);
    read_if(j, "r_s", r_s);
    read_if(j, "m", m);
    return MergeSchedule::from_blocks(num_layers, parse_blocks(j, "temporal_blocks"), r_t,
                                      parse_blocks(j, "spatial_blocks"), r_s, m, parse_segments(j));
}

ExperimentConfig parse_experiment_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    ExperimentConfig c;
    if (doc.contains("model")) c.model = model_from_json(doc.at("model"));
    read_if(doc, "seed", c.seed);
    read_if(doc, "merger", c.merger);
    c.schedule = schedule_from_json(doc.contains("schedule") ? doc.at("schedule") : json(), c.model.layers);
    if (doc.contains("flags")) {
        const json& f = doc.at("flags");
        read_if(f, "raw_eq6", c.flags.raw_eq6);
        read_if(f, "per_frame_matching", c.flags.per_frame_matching);
        read_if(f, "proportional_attention", c.flags.proportional_attention);
        read_if(f, "recompute_saliency", c.flags.recompute_saliency);
    }
    const json input = doc.value("input", json::object());
    const std::string kind = input.value("kind", std::string("synthetic"));
    if (kind == "file") {
        c.input_path = input.value("path", std::string());
        if (c.input_path.empty()) throw ConfigError("input.path is required for file input");
    } else if (kind != "synthetic") {
        throw ConfigError("input.kind must be 'synthetic' or 'file'");
    }
    c.synthetic = synthetic_from_json(input.value("synthetic", json::object()), c.model);
    if (doc.contains("analysis")) {
        const json& a = doc.at("analysis");
        c.analysis.enabled = a.value("enabled", true);
        read_if(a, "max_distance", c.analysis.study.max_distance);
        read_if(a, "window", c.analysis.study.window);
        read_if(a, "probe_layer", c.analysis.study.probe_layer);
    }
    if (doc.contains("ib")) {
        const json& b = doc.at("ib");
        c.ib.enabled = b.value("enabled", true);
        read_if(b, "samples", c.ib.samples);
        read_if(b, "raw_clusters", c.ib.options.raw_clusters);
        read_if(b, "temperature", c.ib.options.temperature);
    }
    if (doc.contains("outputs")) {
        const json& o = doc.at("outputs");
        c.report_path = o.value("report", std::string());
        c.csv_dir = o.value("csv_dir", std::string());
        c.maps_dir = o.value("maps_dir", std::string());
    }
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value, got '" + assignment + "'");
    }
    std::string pointer;
    std::stringstream path(assignment.substr(0, eq));
    for (std::string part; std::getline(path, part, '.');) {
        if (part.empty()) throw ConfigError("empty key segment in '" + assignment + "'");
        pointer += "/" + part;
    }
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    doc[json::json_pointer(pointer)] = value;
}

MergeMap merge_map(const ProvenanceMap& provenance, int layer) {
    return MergeMap{layer, GridDims{provenance.original_t(), provenance.original_s()},
                    GridDims{provenance.n_t(), provenance.n_s()}, provenance.owner_table()};
}

std::string merge_map_csv(const MergeMap& map) {
    std::string out = "frame,position,group\n";
    for (int t = 0; t < map.original.n_t; ++t) {
        for (int s = 0; s < map.original.n_s; ++s) {
            out += std::to_string(t) + "," + std::to_string(s) + "," +
                   std::to_string(map.group_of_cell[static_cast<std::size_t>(t) * map.original.n_s + s]) + "\n";
        }
    }
    return out;
}

RetentionStats retention_by_mask(const ProvenanceMap& provenance, const std::vector<std::vector<char>>& mask) {
    if (mask.size() != static_cast<std::size_t>(provenance.original_t())) {
        throw Error("mask frame count does not match provenance");
    }
    const std::vector<int> owner = provenance.owner_table();
    std::vector<int> group_size(static_cast<std::size_t>(provenance.n_t()) * provenance.n_s(), 0);
    for (int g : owner) ++group_size[static_cast<std::size_t>(g)];
    long long unmerged[2] = {0, 0};
    long long total[2] = {0, 0};
    for (int t = 0; t < provenance.original_t(); ++t) {
        if (mask[static_cast<std::size_t>(t)].size() != static_cast<std::size_t>(provenance.original_s())) {
            throw Error("mask dims do not match n_s");
        }
        for (int s = 0; s < provenance.original_s(); ++s) {
            const int cls = mask[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] ? 1 : 0;
            ++total[cls];
            const int g = owner[static_cast<std::size_t>(t) * provenance.original_s() + s];
            if (group_size[static_cast<std::size_t>(g)] == 1) ++unmerged[cls];
        }
    }
    RetentionStats r;
    r.dynamic_cells = total[1];
    r.static_cells = total[0];
    r.dynamic_unmerged = total[1] ? static_cast<double>(unmerged[1]) / static_cast<double>(total[1]) : 0.0;
    r.static_unmerged = total[0] ? static_cast<double>(unmerged[0]) / static_cast<double>(total[0]) : 0.0;
    return r;
}

std::string format_number(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

SyntheticVideoSpec corpus_spec(const ExperimentConfig& config, int sample, int& label) {
    SyntheticVideoSpec s = config.synthetic;
    label = sample % 2;
    const double speed = std::max(1.0, std::hypot(s.velocity_x, s.velocity_y));
    const int travel = static_cast<int>(std::ceil(speed * (s.frames - 1)));
    s.trajectory = Trajectory::linear;
    s.texture_seed = config.synthetic.texture_seed * 7919ull + static_cast<std::uint64_t>(sample) + 1;
    s.velocity_x = label == 0 ? speed : 0.0;
    s.velocity_y = label == 0 ? 0.0 : speed;
    const int free_x = s.width - s.object_size - (label == 0 ? travel : 0);
    const int free_y = s.height - s.object_size - (label == 0 ? 0 : travel);
    if (free_x <= 0 || free_y <= 0) {
        throw ConfigError("synthetic object too large or too fast for the IB corpus");
    }
    const std::uint64_t h = (static_cast<std::uint64_t>(sample) + 1) * 0x9E3779B97F4A7C15ull ^ config.seed;
    s.start_x = static_cast<int>((h >> 8) % static_cast<std::uint64_t>(free_x));
    s.start_y = static_cast<int>((h >> 32) % static_cast<std::uint64_t>(free_y));
    return s;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const Encoder encoder = encoder_for(config);
    const MergeHooks hooks = hooks_for(config);

    std::optional<SyntheticVideo> synth;
    Video video;
    if (config.input_path.empty()) {
        synth = synth_generate(config.synthetic, config.seed);
        video = synth->video;
    } else {
        video = video_from_tensor(read_tensor(config.input_path));
    }
    const TokenGrid tokens = encoder.tokenize(video);
    const ForwardResult fwd = encoder.forward(tokens, config.schedule, hooks);
    const CostReport cost = schedule_cost(config.model, config.schedule);

    ExperimentResult result;
    json& report = result.report;
    report["schema"] = kReportSchema;
    report["status"] = "ok";
    report["config"] = config_echo(config);
    report["encoder_checksum"] = hex64(encoder.checksum());
    report["cost"] = cost_to_json(cost);

    json dims = json::array();
    for (std::size_t l = 0; l < fwd.layer_dims.size(); ++l) {
        dims.push_back(json{{"layer", l + 1}, {"n_t", fwd.layer_dims[l].n_t}, {"n_s", fwd.layer_dims[l].n_s}});
    }
    report["layer_dims"] = dims;

    json maps = json::array();
    for (std::size_t l = 0; l < fwd.layer_provenance.size(); ++l) {
        const int layer = static_cast<int>(l) + 1;
        const LayerPlan& plan = config.schedule.layer(layer);
        if (plan.effective_r_t() == 0 && plan.effective_r_s() == 0) continue;
        const ProvenanceMap& prov = fwd.layer_provenance[l];
        int largest = 0;
        for (const auto& g : prov.groups()) largest = std::max(largest, static_cast<int>(g.size()));
        maps.push_back(json{{"layer", layer},
                            {"n_t", prov.n_t()},
                            {"n_s", prov.n_s()},
                            {"groups", prov.groups().size()},
                            {"largest_group", largest}});
        result.maps.push_back(merge_map(prov, layer));
    }
    report["merge_maps"] = maps;

    const RowVector out_pool = pooled(fwd.output);
    report["output"] = json{{"n_t", fwd.output.n_t},
                            {"n_s", fwd.output.n_s},
                            {"checksum", hex64(grid_checksum(fwd.output))},
                            {"pooled_norm", out_pool.norm()}};

    if (synth) {
        const RetentionStats r = retention_by_mask(fwd.provenance, token_mask(synth->dynamic_mask, config.model.tubelet));
        report["retention"] = json{{"dynamic_unmerged", r.dynamic_unmerged},
                                   {"static_unmerged", r.static_unmerged},
                                   {"dynamic_cells", r.dynamic_cells},
                                   {"static_cells", r.static_cells}};
    }

    if (config.analysis.enabled) {
        // Redundancy diagnostics probe the unmerged encoder.
        const ForwardResult base = config.schedule.is_noop() ? fwd : encoder.forward(tokens, MergeSchedule::none(config.model.layers));
        const auto& probe = base.artifacts[static_cast<std::size_t>(config.analysis.study.probe_layer - 1)];
        const SimilarityCurves curves =
            temporal_similarity_study(probe.spatial_keys, config.model.grid_w(), config.analysis.study);
        std::string csv = "distance,same_position_mean,window_mean\n";
        json jc = json::array();
        for (std::size_t d = 0; d < curves.same_position.size(); ++d) {
            const double win = d < curves.window.size() ? curves.window[d] : std::nan("");
            csv += std::to_string(d + 1) + "," + format_number(curves.same_position[d]) + "," + format_number(win) + "\n";
            json row{{"distance", d + 1}, {"same_position_mean", curves.same_position[d]}};
            row["window_mean"] = std::isfinite(win) ? json(win) : json();
            jc.push_back(row);
        }
        result.similarity_csv = csv;
        report["analysis"]["similarity_curve"] = jc;
        if (synth) {
            const auto mask = token_mask(synth->dynamic_mask, config.model.tubelet);
            std::string sd = "layer,static_mean,dynamic_mean\n";
            json js = json::array();
            for (std::size_t l = 0; l < base.artifacts.size(); ++l) {
                const ClassSimilarity cs = static_dynamic_similarity(base.artifacts[l].spatial_keys, mask);
                const double st = cs.static_mean.value_or(std::nan(""));
                const double dy = cs.dynamic_mean.value_or(std::nan(""));
                sd += std::to_string(l + 1) + "," + format_number(st) + "," + format_number(dy) + "\n";
                json row{{"layer", l + 1}};
                row["static_mean"] = cs.static_mean ? json(*cs.static_mean) : json();
                row["dynamic_mean"] = cs.dynamic_mean ? json(*cs.dynamic_mean) : json();
                js.push_back(row);
            }
            result.static_dynamic_csv = sd;
            report["analysis"]["static_dynamic"] = js;
        }
    }

    if (config.ib.enabled) {
        IBInputs in;
        in.merged.resize(config.ib.samples, config.model.channels);
        in.raw.resize(config.ib.samples, config.model.channels);
        for (int i = 0; i < config.ib.samples; ++i) {
            int label = 0;
            const SyntheticVideo sv = synth_generate(corpus_spec(config, i, label), config.seed + static_cast<std::uint64_t>(i));
            const TokenGrid g = encoder.tokenize(sv.video);
            const ForwardResult f = encoder.forward(g, config.schedule, hooks);
            in.raw.row(i) = pooled(g);
            in.merged.row(i) = pooled(f.output);
            in.labels.push_back(label);
        }
        const IBScore s = ib_score(in, config.ib.options);
        report["ib"] = json{{"samples", config.ib.samples}, {"i_zx", s.i_zx}, {"i_zy", s.i_zy}, {"ib", s.ib}};
    }
    round_numbers(report);
    return result;
}

json cost_report(const ExperimentConfig& config) {
    config.validate();
    json report;
    report["schema"] = kReportSchema;
    report["status"] = "ok";
    report["config"] = config_echo(config);
    report["cost"] = cost_to_json(schedule_cost(config.model, config.schedule));
    round_numbers(report);
    return report;
}

std::string dump_report(const json& report) {
    json copy = report;
    round_numbers(copy);
    return copy.dump(2) + "\n";
}

void write_outputs(const ExperimentConfig& config, const ExperimentResult& result) {
    auto write_text = [](const std::filesystem::path& p, const std::string& text) {
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("cannot write " + p.string());
        out << text;
    };
    if (!config.report_path.empty()) write_text(config.report_path, dump_report(result.report));
    if (!config.csv_dir.empty()) {
        if (!result.similarity_csv.empty()) write_text(config.csv_dir / "similarity_curve.csv", result.similarity_csv);
        if (!result.static_dynamic_csv.empty()) write_text(config.csv_dir / "static_dynamic.csv", result.static_dynamic_csv);
    }
    if (!config.maps_dir.empty()) {
        std::filesystem::create_directories(config.maps_dir);
        for (const MergeMap& m : result.maps) {
            char name[32];
            std::snprintf(name, sizeof name, "layer_%02d.csv", m.layer);
            write_text(config.maps_dir / name, merge_map_csv(m));
        }
    }
}

}  // namespace stim
