#include "rcl/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "rcl/error.hpp"
#include "rcl/ops.hpp"
#include "rcl/rng.hpp"

namespace rcl {

std::string to_string(DrivingLoss loss) {
    switch (loss) {
        case DrivingLoss::CE: return "CE";
        case DrivingLoss::CL: return "CL";
        case DrivingLoss::SCL: return "SCL";
    }
    return "?";
}

DrivingLoss parse_driving_loss(const std::string& text) {
    if (text == "CE") return DrivingLoss::CE;
    if (text == "CL") return DrivingLoss::CL;
    if (text == "SCL") return DrivingLoss::SCL;
    throw ConfigError("unknown driving loss '" + text + "' (expected CE, CL or SCL)");
}

std::string to_string(ThreatModel tm) { return tm == ThreatModel::I ? "I" : "II"; }

ThreatModel parse_threat_model(const std::string& text) {
    if (text == "I") return ThreatModel::I;
    if (text == "II") return ThreatModel::II;
    throw ConfigError("unknown threat model '" + text + "' (expected I or II)");
}

double AttackSpec::effective_step_size() const {
    if (step_size) return *step_size;
    return steps == 0 ? 0.0 : 2.5 * epsilon / static_cast<double>(steps);
}

void AttackSpec::validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("attack epsilon must be >= 0");
    if (step_size && !(*step_size > 0.0)) throw ConfigError("attack step size must be > 0");
    if (clamp && !(clamp->lo <= clamp->hi)) throw ConfigError("attack clamp range is empty");
}

AttackSpec training_attack_defaults() { return AttackSpec{}; }

AttackSpec evaluation_attack_defaults() {
    AttackSpec s;
    s.steps = 20;
    s.random_start = true;
    return s;
}

AttackSpec threat_model_ii_defaults() {
    AttackSpec s = evaluation_attack_defaults();
    s.steps = 40;
    s.driving_loss = DrivingLoss::CL;
    return s;
}

Tensor project_linf(const Tensor& x0, const Tensor& x, double epsilon, const std::optional<ClampRange>& clamp) {
    if (x0.shape() != x.shape()) {
        throw ShapeError("project_linf: shape mismatch " + shape_str(x0.shape()) + " vs " + shape_str(x.shape()));
    }
    Tensor out = x;
    auto o = out.data();
    const auto c = x0.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        double v = std::clamp(o[i], c[i] - epsilon, c[i] + epsilon);
        if (clamp) v = std::clamp(v, clamp->lo, clamp->hi);
        o[i] = v;
    }
    return out;
}

Tensor pgd_linf(const Tensor& x0, const LossGradientFn& loss_grad, const AttackSpec& spec) {
    spec.validate();
    if (spec.epsilon == 0.0) return project_linf(x0, x0, 0.0, spec.clamp);

    Tensor x = x0;
    if (spec.random_start) {
        Rng rng(spec.seed);
        for (auto& v : x.data()) v += rng.uniform(-spec.epsilon, spec.epsilon);
        x = project_linf(x0, x, spec.epsilon, spec.clamp);
    }
    const double step = spec.effective_step_size();
    for (std::size_t t = 0; t < spec.steps; ++t) {
        auto [value, grad] = loss_grad(x);
        if (!grad.all_finite() || !std::isfinite(value)) throw NumericError("PGD: non-finite loss gradient");
        if (grad.shape() != x.shape()) throw ShapeError("PGD: gradient shape does not match the input");
        auto xv = x.data();
        const auto g = grad.data();
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
            xv[i] += step * s;
        }
        x = project_linf(x0, x, spec.epsilon, spec.clamp);
    }
    return x;
}

namespace {

struct DrivingContext {
    const ModelBundle& model;
    const ViewBatch& batch;
    DrivingLoss driving;
    const LossConfig& loss;
    Tensor clean_embedding;  // CL / SCL only
    std::vector<int> doubled_labels;

    DrivingContext(const ModelBundle& m, const ViewBatch& b, DrivingLoss d, const LossConfig& l)
        : model(m), batch(b), driving(d), loss(l) {
        if ((d == DrivingLoss::CE || d == DrivingLoss::SCL) && !b.y) {
            throw ConfigError(to_string(d) + "-driven attack requires labels");
        }
        if (b.y && b.y->size() != b.x.rows()) throw ShapeError("attack labels do not match the batch");
        if (d != DrivingLoss::CE) {
            Tape tape;
            BoundModel bound(model, tape, {});
            clean_embedding = embed(bound, tape.constant(b.x)).value();
        }
        if (d == DrivingLoss::SCL) {
            doubled_labels = *b.y;
            doubled_labels.insert(doubled_labels.end(), b.y->begin(), b.y->end());
        }
    }

    Var loss_on(const BoundModel& bound, Var candidate) const {
        Tape& tape = bound.tape();
        switch (driving) {
            case DrivingLoss::CE:
                return cross_entropy(bound.classify(bound.encode(candidate)), *batch.y);
            case DrivingLoss::CL:
                return nt_xent(tape.constant(clean_embedding), embed(bound, candidate), loss.cl_temperature);
            case DrivingLoss::SCL: {
                const std::array parts{tape.constant(clean_embedding), embed(bound, candidate)};
                return supcon(ops::concat_rows(parts), doubled_labels, loss.scl_temperature);
            }
        }
        throw ConfigError("unhandled driving loss");
    }
};

}  // namespace

Tensor pgd(const ModelBundle& model, const ViewBatch& batch, const AttackSpec& spec, const LossConfig& loss,
           AttackAudit* audit) {
    spec.validate();
    if (spec.epsilon == 0.0) return project_linf(batch.x, batch.x, 0.0, spec.clamp);
    const DrivingContext ctx(model, batch, spec.driving_loss, loss);
    auto loss_grad = [&](const Tensor& candidate) {
        Tape tape;
        BoundModel bound(model, tape, {});
        Var xv = tape.variable(candidate);
        Var l = ctx.loss_on(bound, xv);
        Gradients g = tape.backward(l);
        if (audit) {
            ++audit->gradient_queries;
            if (bound.classifier_calls() > 0) ++audit->classifier_queries;
        }
        auto it = g.find(xv.id());
        return std::pair<double, Tensor>(l.value().item(),
                                         it == g.end() ? Tensor::zeros(candidate.shape()) : std::move(it->second));
    };
    return pgd_linf(batch.x, loss_grad, spec);
}

double driving_loss_value(const ModelBundle& model, const ViewBatch& batch, const Tensor& candidate,
                          DrivingLoss driving, const LossConfig& loss) {
    const DrivingContext ctx(model, batch, driving, loss);
    Tape tape;
    BoundModel bound(model, tape, {});
    return ctx.loss_on(bound, tape.constant(candidate)).value().item();
}

Tensor threat_model_II_attack(const ModelBundle& model, const ViewBatch& batch, const AttackSpec& spec,
                              const LossConfig& loss, AttackAudit* audit) {
    if (spec.driving_loss == DrivingLoss::CE) {
        throw ConfigError("Threat Model-II attacks are driven by the pretraining loss (CL or SCL), not CE");
    }
    return pgd(model, batch, spec, loss, audit);
}

}  // namespace rcl
