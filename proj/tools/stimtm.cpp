// stimtm: command-line driver for token-merging experiments.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stim/experiment.hpp"
#include "stim/tensor_file.hpp"

namespace {

using nlohmann::json;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string report_path;
};

json load_document(const CommonArgs& args) {
    json doc = json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw stim::ConfigError("cannot open config " + args.config_path);
        doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw stim::ConfigError("config is not valid JSON: " + args.config_path);
    }
    for (const std::string& o : args.overrides) stim::apply_override(doc, o);
    if (!args.report_path.empty()) doc["outputs"]["report"] = args.report_path;
    return doc;
}

void emit(const json& report, const std::filesystem::path& path) {
    const std::string text = stim::dump_report(report);
    if (path.empty()) {
        std::cout << text;
        return;
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw stim::Error("cannot write " + path.string());
    out << text;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)");
    cmd->add_option("--set", args.overrides, "override a config key, e.g. schedule.r_s=8")->take_all();
    cmd->add_option("-r,--report", args.report_path, "report path (stdout when omitted)");
}

int run_command(const std::string& name, const CommonArgs& args, const std::function<void(stim::ExperimentConfig&)>& body) {
    std::filesystem::path report_path = args.report_path;
    auto fail = [&](const char* kind, const std::string& message, int code) {
        std::cerr << "stimtm " << name << ": " << kind << " error: " << message << "\n";
        json stub{{"schema", stim::kReportSchema}, {"status", "error"}, {"command", name},
                  {"error", {{"kind", kind}, {"message", message}}}};
        try {
            if (!report_path.empty()) emit(stub, report_path);
        } catch (const std::exception&) {
        }
        return code;
    };
    try {
        json doc = load_document(args);
        stim::ExperimentConfig config = stim::parse_experiment_config(doc);
        report_path = config.report_path;
        config.validate();
        body(config);
        return 0;
    } catch (const stim::ConfigError& e) {
        return fail("config", e.what(), kExitConfig);
    } catch (const json::exception& e) {
        return fail("config", e.what(), kExitConfig);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), kExitRuntime);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatiotemporal token merging experiments"};
    app.require_subcommand(1);

    CommonArgs synth_args, run_args, cost_args, analyze_args, maps_args;
    std::string video_out, mask_out, maps_out, csv_out;

    auto* synth = app.add_subcommand("synth", "generate a synthetic video tensor and its dynamic mask");
    add_common(synth, synth_args);
    synth->add_option("-o,--out", video_out, "output .sttk video")->required();
    synth->add_option("--mask", mask_out, "output CSV of the dynamic patch mask");

    auto* run = app.add_subcommand("run", "forward pass with merging, cost model and requested analyses");
    add_common(run, run_args);
    run->add_option("--csv-dir", csv_out, "directory for analysis CSVs");
    run->add_option("--maps-dir", maps_out, "directory for per-layer merge maps");

    auto* cost = app.add_subcommand("cost", "analytic FLOPs of a schedule, no forward pass");
    add_common(cost, cost_args);

    auto* analyze = app.add_subcommand("analyze", "run with similarity and IB analyses enabled");
    add_common(analyze, analyze_args);
    analyze->add_option("--csv-dir", csv_out, "directory for analysis CSVs");

    auto* maps = app.add_subcommand("export-maps", "write per-layer merge maps as CSV");
    add_common(maps, maps_args);
    maps->add_option("-o,--out-dir", maps_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (*synth) {
        return run_command("synth", synth_args, [&](stim::ExperimentConfig& c) {
            const stim::SyntheticVideo v = stim::synth_generate(c.synthetic, c.seed);
            stim::write_tensor(video_out, stim::to_tensor(v.video));
            if (!mask_out.empty()) {
                std::string csv = "frame,position,dynamic\n";
                for (std::size_t t = 0; t < v.dynamic_mask.size(); ++t) {
                    for (std::size_t p = 0; p < v.dynamic_mask[t].size(); ++p) {
                        csv += std::to_string(t) + "," + std::to_string(p) + "," + (v.dynamic_mask[t][p] ? "1" : "0") + "\n";
                    }
                }
                std::ofstream out(mask_out, std::ios::binary);
                if (!out) throw stim::Error("cannot write " + mask_out);
                out << csv;
            }
        });
    }
    if (*run) {
        return run_command("run", run_args, [&](stim::ExperimentConfig& c) {
            if (!csv_out.empty()) c.csv_dir = csv_out;
            if (!maps_out.empty()) c.maps_dir = maps_out;
            const stim::ExperimentResult r = stim::run_experiment(c);
            stim::write_outputs(c, r);
            if (c.report_path.empty()) emit(r.report, {});
        });
    }
    if (*cost) {
        return run_command("cost", cost_args, [&](stim::ExperimentConfig& c) { emit(stim::cost_report(c), c.report_path); });
    }
    if (*analyze) {
        return run_command("analyze", analyze_args, [&](stim::ExperimentConfig& c) {
            c.analysis.enabled = true;
            if (!csv_out.empty()) c.csv_dir = csv_out;
            const stim::ExperimentResult r = stim::run_experiment(c);
            stim::write_outputs(c, r);
            if (c.report_path.empty()) emit(r.report, {});
        });
    }
    return run_command("export-maps", maps_args, [&](stim::ExperimentConfig& c) {
        c.maps_dir = maps_out;
        const stim::ExperimentResult r = stim::run_experiment(c);
        stim::write_outputs(c, r);
        if (c.report_path.empty()) emit(r.report, {});
    });
}
