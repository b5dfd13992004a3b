#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rcl/attacks.hpp"
#include "rcl/data.hpp"
#include "rcl/losses.hpp"
#include "rcl/models.hpp"
#include "rcl/optim.hpp"

namespace rcl {

// Training scenarios: pretraining phase / fine-tuning phase.
//   ST         standard / standard, encoder fixed
//   AT         adversarial / standard, encoder fixed
//   PartialAT  adversarial / partial adversarial, encoder fixed
//   FullAT     adversarial / full adversarial, encoder readjusted
enum class Scenario { ST, AT, PartialAT, FullAT };

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& text);
bool adversarial_pretraining(Scenario s);
FinetuneMode finetune_mode(Scenario s);

struct ScenarioSpec {
    Scenario scenario = Scenario::ST;
    LossConfig loss;
    EncoderConfig encoder;
    std::size_t head_dim = 16;
    // D_p, D_f, test. A zero D_f fraction reuses D_p for fine-tuning.
    std::array<double, 3> split{0.8, 0.0, 0.2};
    std::size_t pretrain_epochs = 50;
    std::size_t finetune_epochs = 30;
    std::size_t batch_size = 128;
    std::size_t adv_batch_size = 256;
    AdamConfig pretrain_optimizer;
    AdamConfig finetune_optimizer;
    AttackSpec train_attack = training_attack_defaults();
    AugmentSpec augment;
    std::uint64_t seed = 0;

    // With require_budget, adversarial scenarios must carry epsilon > 0.
    // Individual phases accept epsilon = 0 so degenerate attacks can be studied.
    void validate(bool require_budget = true) const;
};

// Stable text form of every field; the basis for hashes and cache keys.
std::string canonical_text(const ScenarioSpec& spec);

struct PhaseRecord {
    std::string phase;  // "pretrain", "supervised" or "finetune"
    bool executed = false;
    std::vector<double> epoch_losses;
    std::vector<double> step_losses;
    std::size_t attack_calls = 0;
    // Largest |x_adv - x| seen over all generated adversarial batches.
    double max_perturbation = 0.0;
    // Loss that drove the phase's attacks, when any were generated.
    std::optional<DrivingLoss> attack_loss;
};

struct Manifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    double wall_clock_s = 0.0;
    std::string dataset_fingerprint;
    std::vector<std::string> files;
};

struct RunRecord {
    std::vector<PhaseRecord> phases;
    ModelBundle model;
    SplitResult splits;
    Manifest manifest;

    std::size_t executed_phases() const;
};

/// Pretraining on D_p with the scheme's contrastive objective. Under ST
/// the objective is the clean-view term alone; under adversarial scenarios
/// x_adv is regenerated from the current parameters for every batch.
/// Returns a non-executed record for SL.
PhaseRecord pretrain(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec);

/// Single-phase end-to-end cross-entropy training used by SL; adversarial
/// scenarios add the CE-driven x_adv term.
PhaseRecord train_supervised(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec);

/// Supervised fine-tuning on D_f with a fresh classifier. Returns a
/// non-executed record for SL.
PhaseRecord finetune(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec);

// Pretrained models keyed by everything that determines pretraining.
using PretrainCache = std::map<std::string, std::pair<ModelBundle, PhaseRecord>>;

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;
    PretrainCache* cache = nullptr;
    // Callers that write their own manifest turn this off.
    bool write_manifest = true;
};

/// split -> pretrain -> finetune (or the single SL phase). With an output
/// directory, writes pretrain.rrlb (phase boundary), model.rrlb, loss.csv
/// and manifest.json.
RunRecord run_scenario(const Dataset& data, const ScenarioSpec& spec, const RunOptions& options = {});

// "epoch,phase,loss" rows.
void write_loss_csv(const RunRecord& record, const std::filesystem::path& path);
std::string hex64(std::uint64_t v);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace rcl
