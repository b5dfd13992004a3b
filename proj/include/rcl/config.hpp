#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rcl/analysis.hpp"
#include "rcl/evaluation.hpp"
#include "rcl/training.hpp"

namespace rcl {

enum class DataSource { synthetic, idx, csv };
std::string to_string(DataSource source);

struct DatasetConfig {
    DataSource source = DataSource::synthetic;
    SyntheticKind kind = SyntheticKind::two_gaussians;
    std::size_t n = 1000;
    std::size_t dim = 20;
    std::size_t classes = 2;
    double separation = 8.0;
    std::uint64_t data_seed = 0;
    std::string images;  // idx
    std::string labels;  // idx
    std::string csv;     // csv
};

struct EvaluationConfig {
    std::vector<ThreatModel> threat_models{ThreatModel::I, ThreatModel::II};
    std::vector<double> epsilons{2.0 / 255.0, 4.0 / 255.0, 6.0 / 255.0, 8.0 / 255.0};
    std::size_t steps = 20;
    std::size_t threat_model_ii_steps = 40;
    bool random_start = true;
    // Unset means 2.5 * epsilon / steps.
    std::optional<double> step_size;
    // Unset means [0, 1] for image data and no clamp otherwise.
    std::optional<ClampRange> clamp;
    std::size_t batch_size = 128;
    std::uint64_t attack_seed = 0;
};

struct AnalysisConfig {
    bool cka = true;
    std::size_t n_samples = 512;
    std::vector<std::size_t> probe_layers;  // empty: every layer and the input
    std::size_t probe_epochs = 30;
    double probe_lr = 1e-3;
    std::size_t probe_batch_size = 32;
    std::vector<double> epsilon_sweep;
    // CE attack used by every analysis; random start, step size, clamp and
    // seed follow [evaluation].
    double attack_epsilon = 8.0 / 255.0;
    std::size_t attack_steps = 20;
};

struct SweepGridConfig {
    std::vector<Scenario> scenarios{Scenario::ST, Scenario::AT, Scenario::PartialAT, Scenario::FullAT};
    std::vector<Scheme> schemes{Scheme::CL, Scheme::SCL, Scheme::SL};
    std::vector<std::uint64_t> seeds{0};
    bool record_runtime = false;
};

/// Fully explicit experiment description. Every field has a value after
/// loading; the canonical text lists all of them.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    DatasetConfig dataset;
    ScenarioSpec run;
    EvaluationConfig evaluation;
    AnalysisConfig analysis;
    SweepGridConfig sweep;
    // Directory that relative data paths are resolved against.
    std::filesystem::path base_dir = ".";

    bool operator==(const ExperimentConfig& other) const;
};

/// Parses the sectioned `key = value` format. Values are integers, floats
/// (fractions such as 8/255 allowed), booleans, "quoted strings" or
/// [lists]. Throws ConfigError carrying "<origin>:<line>: ..." diagnostics.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies one "section.key=value" override (top-level keys have no section).
void apply_override(ExperimentConfig& config, const std::string& assignment);

// Every key in a fixed order; parse_config(canonical_config(c)) == c.
std::string canonical_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

Dataset load_dataset(const ExperimentConfig& config);
std::vector<EvalAttack> evaluation_attacks(const ExperimentConfig& config);
AttackSpec analysis_attack(const ExperimentConfig& config);

}  // namespace rcl
