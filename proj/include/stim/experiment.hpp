#pragma once

// Experiment configuration (one JSON document), the end-to-end runner and the
// report / CSV writers used by the command-line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stim/analysis.hpp"
#include "stim/cost_model.hpp"
#include "stim/encoder.hpp"
#include "stim/pipeline.hpp"
#include "stim/synthetic.hpp"

namespace stim {

inline constexpr int kReportSchema = 1;

struct ExperimentFlags {
    bool raw_eq6 = false;
    bool per_frame_matching = false;
    bool proportional_attention = false;
    bool recompute_saliency = false;
};

struct AnalysisRequest {
    bool enabled = false;
    SimilarityStudyConfig study;
};

// Labeled synthetic corpus for the information-bottleneck score: class 0
// moves horizontally, class 1 vertically.
struct IBRequest {
    bool enabled = false;
    int samples = 16;
    IBOptions options;
};

struct ExperimentConfig {
    ModelConfig model;
    MergeSchedule schedule;
    std::uint64_t seed = 0;
    std::string merger = "stim";  // "stim" or "random"
    ExperimentFlags flags;

    // Input: a .sttk video, or the synthetic spec when empty.
    std::filesystem::path input_path;
    SyntheticVideoSpec synthetic;

    AnalysisRequest analysis;
    IBRequest ib;

    std::filesystem::path report_path;
    std::filesystem::path csv_dir;
    std::filesystem::path maps_dir;

    // Throws ConfigError naming the violated constraint.
    void validate() const;
};

// Parses a config document; missing keys keep their defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);

// Applies `a.b.c=value` overrides to a config document. Values parse as JSON
// when possible and as strings otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json schedule_to_json(const MergeSchedule& schedule);
MergeSchedule schedule_from_json(const nlohmann::json& j, int num_layers);

// Dense per-layer merge map: group id of every original cell.
struct MergeMap {
    int layer = 0;
    GridDims original;
    GridDims live;
    std::vector<int> group_of_cell;  // row-major over (T0, S0)
};

MergeMap merge_map(const ProvenanceMap& provenance, int layer);

// CSV with header "frame,position,group", one row per original cell.
std::string merge_map_csv(const MergeMap& map);

// Fractions of unmerged cells (group size 1) inside and outside a mask of
// original cells [T0][S0].
struct RetentionStats {
    double dynamic_unmerged = 0.0;
    double static_unmerged = 0.0;
    long long dynamic_cells = 0;
    long long static_cells = 0;
};

RetentionStats retention_by_mask(const ProvenanceMap& provenance, const std::vector<std::vector<char>>& mask);

struct ExperimentResult {
    nlohmann::json report;
    std::vector<MergeMap> maps;
    std::string similarity_csv;      // empty unless analysis ran
    std::string static_dynamic_csv;  // empty unless analysis ran with a mask
};

// tokenize -> forward with merging -> cost model -> requested analyses.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Cost model only; no forward pass.
nlohmann::json cost_report(const ExperimentConfig& config);

// Dumps JSON with every float rounded to 9 significant digits.
std::string dump_report(const nlohmann::json& report);

// Writes report / CSVs / maps to the paths named in the config.
void write_outputs(const ExperimentConfig& config, const ExperimentResult& result);

// Fixed-width writer shared by all CSV emitters.
std::string format_number(double v);

// Builds the labeled corpus video for sample i.
SyntheticVideoSpec corpus_spec(const ExperimentConfig& config, int sample, int& label);

}  // namespace stim
