#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "rcl/data.hpp"
#include "rcl/losses.hpp"
#include "rcl/models.hpp"

namespace rcl {

enum class DrivingLoss { CE, CL, SCL };
std::string to_string(DrivingLoss loss);
DrivingLoss parse_driving_loss(const std::string& text);

// Threat Model-I: end-to-end CE through encoder and classifier.
// Threat Model-II: contrastive loss through encoder and head only.
enum class ThreatModel { I, II };
std::string to_string(ThreatModel tm);
ThreatModel parse_threat_model(const std::string& text);

struct ClampRange {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const ClampRange&) const = default;
};

/// l-infinity PGD settings.
struct AttackSpec {
    double epsilon = 8.0 / 255.0;
    // Unset means 2.5 * epsilon / steps.
    std::optional<double> step_size;
    std::size_t steps = 5;
    bool random_start = false;
    DrivingLoss driving_loss = DrivingLoss::CE;
    std::optional<ClampRange> clamp;
    std::uint64_t seed = 0;

    double effective_step_size() const;
    void validate() const;
};

// Budget used during adversarial training: 5 steps at 8/255, no random start.
AttackSpec training_attack_defaults();
// Evaluation budget: 20 steps at 8/255 with random start.
AttackSpec evaluation_attack_defaults();
// Threat Model-II tables use 40 steps.
AttackSpec threat_model_ii_defaults();

// Counts gradient queries by the parts of the model they touched.
struct AttackAudit {
    std::size_t gradient_queries = 0;
    std::size_t classifier_queries = 0;
};

/// Componentwise clip of x into [x0 - eps, x0 + eps], then into the clamp
/// range. Idempotent.
Tensor project_linf(const Tensor& x0, const Tensor& x, double epsilon, const std::optional<ClampRange>& clamp);

// Returns (loss value, d loss / d x) at a candidate input.
using LossGradientFn = std::function<std::pair<double, Tensor>(const Tensor&)>;

/// Generic signed-gradient ascent with projection:
/// x_{t+1} = Proj(x_t + step * sign(grad)), sign(0) = 0.
Tensor pgd_linf(const Tensor& x0, const LossGradientFn& loss_grad, const AttackSpec& spec);

/// PGD against `model` driven by spec.driving_loss:
///   CE  - cross-entropy of classify(encode(x_adv)) against batch.y;
///   CL  - NT-Xent between embeddings of clean x and x_adv;
///   SCL - SupCon over [z(x); z(x_adv)] with labels [y; y].
/// Only batch.x and batch.y are read.
Tensor pgd(const ModelBundle& model, const ViewBatch& batch, const AttackSpec& spec,
           const LossConfig& loss = {}, AttackAudit* audit = nullptr);

// Value of the driving loss at a candidate input (no gradient).
double driving_loss_value(const ModelBundle& model, const ViewBatch& batch, const Tensor& candidate,
                          DrivingLoss driving, const LossConfig& loss = {});

/// Attack against the pretraining components only (encoder + head); the
/// classifier is never queried. Requires a CL or SCL driving loss.
Tensor threat_model_II_attack(const ModelBundle& model, const ViewBatch& batch, const AttackSpec& spec,
                              const LossConfig& loss = {}, AttackAudit* audit = nullptr);

}  // namespace rcl
