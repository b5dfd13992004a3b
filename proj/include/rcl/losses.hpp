#pragma once

#include <span>
#include <string>
#include <vector>

#include "rcl/data.hpp"
#include "rcl/models.hpp"
#include "rcl/tape.hpp"

namespace rcl {

enum class Scheme { CL, SCL, SL, SL_CL, CL_SCL, SL_SCL };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& text);
bool uses_labels_in_pretraining(Scheme scheme);
bool is_combination(Scheme scheme);
bool has_cl(Scheme scheme);
bool has_scl(Scheme scheme);
bool has_sl(Scheme scheme);

struct LossConfig {
    Scheme scheme = Scheme::CL;
    double cl_temperature = 0.5;
    double scl_temperature = 0.1;
    // Weights of the clean-view and adversarial terms; kept equal by default.
    double alpha = 0.5;
    double beta = 0.5;
    // Per-constituent weights for the combined schemes.
    double weight_sl = 1.0;
    double weight_cl = 1.0;
    double weight_scl = 1.0;

    void validate() const;
};

enum class FinetuneMode { standard, partial_at, full_at };
std::string to_string(FinetuneMode mode);

// NT-Xent over the 2n rows of [z_a; z_b]; row i pairs with row i + n.
// Rows must already be unit length (within 1e-6).
Var nt_xent(Var z_a, Var z_b, double temperature);
// Supervised contrastive loss; anchors without positives are skipped.
Var supcon(Var z, std::span<const int> labels, double temperature);
// Mean of -log softmax(logits)[y].
Var cross_entropy(Var logits, std::span<const int> labels);

double nt_xent(const Tensor& z_a, const Tensor& z_b, double temperature);
double supcon(const Tensor& z, std::span<const int> labels, double temperature);
double cross_entropy(const Tensor& logits, std::span<const int> labels);

// Normalised projection of a batch: l2_normalize_rows(project(encode(x))).
Var embed(const BoundModel& model, Var x);

// alpha * L(x', x'') + beta * L(x, x_adv) with L = NT-Xent (CL) or SupCon
// (SCL). Zero-weight terms are skipped; a zero total is a constant.
Var pretrain_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg);

// standard: CE(x) on the classifier; partial_at: alpha CE(x) + beta CE(x_adv)
// with a frozen encoder; full_at: the same sum with a trainable encoder.
// Throws ConfigError if the encoder tracking contradicts the mode.
Var finetune_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg, FinetuneMode mode);

// Weighted sum of the constituents of a combined scheme: CE through the
// classifier on x, NT-Xent / SupCon through the shared head on (x', x'').
Var combined_scheme_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg);

// Cross-entropy through encoder and classifier on clean x; with an x_adv and
// beta > 0, alpha CE(x) + beta CE(x_adv).
Var supervised_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg);

}  // namespace rcl
