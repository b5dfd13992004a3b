#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rcl/attacks.hpp"
#include "rcl/data.hpp"
#include "rcl/models.hpp"
#include "rcl/optim.hpp"
#include "rcl/training.hpp"

namespace rcl {

/// Linear CKA of two activation matrices with the same number of rows:
/// ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F) after column centring.
/// Throws NumericError when either centred matrix is zero (constant layer)
/// and ShapeError for mismatched rows or fewer than 3 samples.
double linear_cka(const Tensor& x, const Tensor& y);

enum class CkaCondition { clean_clean, clean_adv, adv_adv };
std::string to_string(CkaCondition condition);

/// Layer-by-layer similarity grid. Rows come from the first model, columns
/// from the second. Degenerate cells are masked rather than given a value.
struct CKAMatrix {
    std::vector<LayerId> rows;
    std::vector<LayerId> cols;
    std::vector<double> values;  // row-major, 0 where masked
    std::vector<bool> masked;
    std::vector<std::string> diagnostics;
    std::size_t n_samples = 0;
    CkaCondition condition = CkaCondition::clean_clean;
    std::pair<std::string, std::string> model_ids;

    double at(std::size_t r, std::size_t c) const { return values[r * cols.size() + c]; }
    bool is_masked(std::size_t r, std::size_t c) const { return masked[r * cols.size() + c]; }
    std::size_t masked_count() const;
};

CKAMatrix cka_grid(const std::vector<ActivationRecord>& a, const std::vector<ActivationRecord>& b);

// Fixed evaluation sample: the first n items of a seeded permutation, or
// the whole set when it is smaller.
Dataset analysis_sample(const Dataset& data, std::size_t n, std::uint64_t seed);

// Adversarial copy of every input in `data` under `attack` (labels are used
// for CE and SCL driving losses).
Tensor adversarial_inputs(const ModelBundle& model, const Dataset& data, const AttackSpec& attack,
                          const LossConfig& loss = {});

/// All-layer CKA grid of one model. Without an attack the grid is
/// clean-clean; with one, rows use clean activations and columns use the
/// activations of the attacked inputs.
CKAMatrix cka_heatmap(const ModelBundle& model, const Dataset& sample, const std::optional<AttackSpec>& attack,
                      const std::string& model_id = "model");

struct CkaCurve {
    std::vector<LayerId> layers;
    std::vector<double> values;
    std::vector<bool> masked;
};

// Same-layer clean-vs-adversarial CKA: the diagonal of the clean-adv heatmap.
CkaCurve divergence_curve(const ModelBundle& model, const Dataset& sample, const AttackSpec& attack);
CkaCurve diagonal(const CKAMatrix& matrix);

/// Rows from model A, columns from model B. With an attack, each model sees
/// adversarial inputs crafted against itself (adv-adv).
CKAMatrix cross_model_cka(const ModelBundle& a, const ModelBundle& b, const Dataset& sample,
                          const std::optional<AttackSpec>& attack, const std::string& id_a = "A",
                          const std::string& id_b = "B");

struct EpsilonSweepEntry {
    double train_epsilon = 0.0;
    ModelBundle model;
    CkaCurve curve;
    CKAMatrix heatmap;
    std::optional<std::filesystem::path> checkpoint;
};

/// Trains one model per training epsilon from `family` (epsilon 0 runs the
/// family under ST) and analyses each with the same evaluation attack on
/// the same sample drawn from the run's test split. With an output
/// directory, one checkpoint per epsilon is written there. A cache shares
/// pretrained encoders with other runs on the same data.
std::vector<EpsilonSweepEntry> epsilon_sweep(const ScenarioSpec& family, const Dataset& data,
                                             const std::vector<double>& eps_list, const AttackSpec& eval_attack,
                                             std::size_t n_samples,
                                             const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                             PretrainCache* cache = nullptr);

struct ProbeConfig {
    std::size_t epochs = 30;
    AdamConfig optimizer{1e-3, 0.9, 0.999, 1e-8};
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    LayerId layer;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t n_samples = 0;
};

// Activations of one layer; ordinal 0 is the raw input.
Tensor layer_activations(const ModelBundle& model, const Tensor& x, std::size_t layer_ordinal);

/// Fits a fresh linear classifier (CE, Adam) on frozen activations of the
/// given layer and reports train/test accuracy. The model is not touched.
ProbeResult linear_probe(const ModelBundle& model, const Dataset& train, const Dataset& test,
                         std::size_t layer_ordinal, const ProbeConfig& config = {});

// "model_id,layer_ordinal,layer,train_acc,test_acc,n_samples"; the header is
// written when the file is new.
void append_probe_csv(const std::filesystem::path& path, const std::string& model_id, const ProbeResult& result);

// "label,e0,...,ek" rows of final-layer representations.
void export_embeddings(const ModelBundle& model, const Dataset& data, const std::filesystem::path& path);
std::pair<Tensor, std::vector<int>> load_embeddings(const std::filesystem::path& path);

// Square grid with a layer-id header row and column; masked cells are "NA".
void write_cka_csv(const CKAMatrix& matrix, const std::filesystem::path& path);

}  // namespace rcl
