#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rcl/attacks.hpp"
#include "rcl/data.hpp"
#include "rcl/losses.hpp"
#include "rcl/models.hpp"
#include "rcl/training.hpp"

namespace rcl {

struct EvalAttack {
    ThreatModel threat_model = ThreatModel::I;
    AttackSpec spec = evaluation_attack_defaults();
};

// Threat Model-I always attacks with CE. Threat Model-II uses the scheme's
// pretraining loss (CL for CL and the CL combinations, SCL for SCL and
// SL+SCL) and does not apply to SL.
std::optional<DrivingLoss> threat_model_ii_loss(Scheme scheme);

struct RobustAccuracy {
    ThreatModel threat_model = ThreatModel::I;
    double epsilon = 0.0;
    std::size_t steps = 0;
    std::optional<DrivingLoss> driving_loss;
    std::optional<double> accuracy;  // empty: not applicable
};

struct EvalReport {
    std::string model_id;
    Scenario scenario = Scenario::ST;
    Scheme scheme = Scheme::CL;
    double clean_accuracy = 0.0;
    std::vector<RobustAccuracy> robust;
    std::size_t n_test = 0;
    // Gradient queries of the Threat Model-II attacks and how many of them
    // touched the classifier.
    AttackAudit threat_model_ii_audit;

    const RobustAccuracy* find(ThreatModel tm, double epsilon, std::size_t steps) const;
};

double accuracy(const ModelBundle& model, const Dataset& data);

/// Clean accuracy plus one robust accuracy per attack, attacking the test
/// set in fixed-order chunks of `batch_size`.
EvalReport evaluate(const ModelBundle& model, const Dataset& test, const std::vector<EvalAttack>& attacks,
                    Scheme scheme, Scenario scenario = Scenario::ST, const LossConfig& loss = {},
                    std::size_t batch_size = 128, const std::string& model_id = "model");

struct SweepConfig {
    ScenarioSpec base;
    std::vector<Scenario> scenarios;
    std::vector<Scheme> schemes;
    std::vector<EvalAttack> attacks;
    std::vector<std::uint64_t> seeds{0};
    std::size_t eval_batch_size = 128;
    // Write measured runtimes into results.csv (otherwise "NA", keeping the
    // file byte-reproducible).
    bool record_runtime = false;
    // Keep every cell's trained model and each seed's pretraining cache in
    // the result.
    bool keep_models = false;
};

struct SweepCell {
    Scenario scenario = Scenario::ST;
    Scheme scheme = Scheme::CL;
    std::uint64_t seed = 0;
    std::optional<EvalReport> report;
    std::optional<ModelBundle> model;
    double runtime_s = 0.0;
    std::string error;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    // Test split shared by every cell of a seed, in seed order.
    std::vector<Dataset> test_sets;
    std::vector<PretrainCache> caches;  // with keep_models, in seed order
    std::vector<std::string> files;

    const SweepCell* find(Scenario scenario, Scheme scheme, std::uint64_t seed) const;
};

/// Trains and evaluates every scenario x scheme cell for each seed. Cells of
/// one seed share the dataset split and the evaluation attacks; a failing
/// cell is recorded and the sweep continues. With an output directory,
/// writes results.csv and one accuracy-vs-epsilon CSV per curve.
SweepResult scenario_sweep(const Dataset& data, const SweepConfig& config,
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// "scenario,scheme,threat_model,epsilon,steps,clean_acc,robust_acc,seed,runtime_s"
void write_results_csv(const SweepResult& result, bool record_runtime, const std::filesystem::path& path);

}  // namespace rcl
