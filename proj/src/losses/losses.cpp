#include "rcl/losses.hpp"

#include <cmath>

#include "rcl/error.hpp"
#include "rcl/ops.hpp"

namespace rcl {

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::CL: return "CL";
        case Scheme::SCL: return "SCL";
        case Scheme::SL: return "SL";
        case Scheme::SL_CL: return "SL+CL";
        case Scheme::CL_SCL: return "CL+SCL";
        case Scheme::SL_SCL: return "SL+SCL";
    }
    return "?";
}

Scheme parse_scheme(const std::string& text) {
    for (Scheme s : {Scheme::CL, Scheme::SCL, Scheme::SL, Scheme::SL_CL, Scheme::CL_SCL, Scheme::SL_SCL})
        if (to_string(s) == text) return s;
    throw ConfigError("unknown scheme '" + text + "' (expected CL, SCL, SL, SL+CL, CL+SCL or SL+SCL)");
}

bool has_cl(Scheme s) { return s == Scheme::CL || s == Scheme::SL_CL || s == Scheme::CL_SCL; }
bool has_scl(Scheme s) { return s == Scheme::SCL || s == Scheme::CL_SCL || s == Scheme::SL_SCL; }
bool has_sl(Scheme s) { return s == Scheme::SL || s == Scheme::SL_CL || s == Scheme::SL_SCL; }
bool is_combination(Scheme s) { return s == Scheme::SL_CL || s == Scheme::CL_SCL || s == Scheme::SL_SCL; }
bool uses_labels_in_pretraining(Scheme s) { return has_scl(s) || has_sl(s); }

std::string to_string(FinetuneMode mode) {
    switch (mode) {
        case FinetuneMode::standard: return "standard";
        case FinetuneMode::partial_at: return "partial_at";
        case FinetuneMode::full_at: return "full_at";
    }
    return "?";
}

void LossConfig::validate() const {
    if (!(cl_temperature > 0.0) || !(scl_temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be >= 0");
    if (!(weight_sl >= 0.0) || !(weight_cl >= 0.0) || !(weight_scl >= 0.0)) {
        throw ConfigError("scheme weights must be >= 0");
    }
}

namespace {

void require_temperature(double t) {
    if (!(t > 0.0)) throw ConfigError("temperature must be > 0");
}

void require_unit_rows(const Tensor& z, const char* what) {
    const std::size_t n = z.rows(), d = z.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += z.at(i, j) * z.at(i, j);
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
            throw ConfigError(std::string(what) + ": row " + std::to_string(i) + " is not l2-normalised");
        }
    }
}

// -sum(L .* W) where W carries the per-entry averaging weights.
Var weighted_pick(Var log_probs, Tensor weights) {
    Var w = log_probs.tape().constant(std::move(weights));
    return ops::sum(ops::mul(log_probs, w));
}

Tensor off_diagonal_mask(std::size_t m) {
    Tensor mask = Tensor::full({m, m}, 1.0);
    for (std::size_t i = 0; i < m; ++i) mask.at(i, i) = 0.0;
    return mask;
}

Var similarity_log_probs(Var z, double temperature) {
    const std::size_t m = z.shape()[0];
    Var s = ops::scale(ops::matmul(z, ops::transpose(z)), 1.0 / temperature);
    return ops::log_softmax_rows(s, off_diagonal_mask(m));
}

Var weighted(Var v, double w) { return w == 1.0 ? v : ops::scale(v, w); }

Var zero_loss(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

Var accumulate(std::optional<Var>& total, Var term) {
    total = total ? ops::add(*total, term) : term;
    return *total;
}

const std::vector<int>& require_labels(const ViewBatch& batch, const char* what) {
    if (!batch.y) throw ConfigError(std::string(what) + " requires labels");
    return *batch.y;
}

std::vector<int> twice(const std::vector<int>& y) {
    std::vector<int> out = y;
    out.insert(out.end(), y.begin(), y.end());
    return out;
}

Var contrastive_term(const BoundModel& model, Scheme scheme, const Tensor& a, const Tensor& b,
                     const ViewBatch& batch, const LossConfig& cfg) {
    Tape& tape = model.tape();
    Var za = embed(model, tape.constant(a));
    Var zb = embed(model, tape.constant(b));
    if (scheme == Scheme::CL) return nt_xent(za, zb, cfg.cl_temperature);
    const std::array parts{za, zb};
    return supcon(ops::concat_rows(parts), twice(require_labels(batch, "SCL")), cfg.scl_temperature);
}

}  // namespace

Var nt_xent(Var z_a, Var z_b, double temperature) {
    require_temperature(temperature);
    if (z_a.shape().size() != 2 || z_a.shape() != z_b.shape()) {
        throw ShapeError("nt_xent: views must be matching (n, d) matrices, got " + shape_str(z_a.shape()) + " and " +
                         shape_str(z_b.shape()));
    }
    const std::size_t n = z_a.shape()[0];
    if (n == 0) throw ShapeError("nt_xent: empty batch");
    require_unit_rows(z_a.value(), "nt_xent");
    require_unit_rows(z_b.value(), "nt_xent");

    const std::array parts{z_a, z_b};
    Var lp = similarity_log_probs(ops::concat_rows(parts), temperature);
    const std::size_t m = 2 * n;
    Tensor w({m, m});
    const double inv = -1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) {
        w.at(i, i + n) = inv;
        w.at(i + n, i) = inv;
    }
    return weighted_pick(lp, std::move(w));
}

Var supcon(Var z, std::span<const int> labels, double temperature) {
    require_temperature(temperature);
    if (z.shape().size() != 2) throw ShapeError("supcon: embeddings must be (m, d), got " + shape_str(z.shape()));
    const std::size_t m = z.shape()[0];
    if (m < 2) throw ShapeError("supcon needs at least 2 embeddings");
    if (labels.size() != m) throw ShapeError("supcon: label count does not match embeddings");
    require_unit_rows(z.value(), "supcon");

    std::vector<std::size_t> positives(m, 0);
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < m; ++p)
            if (p != i && labels[p] == labels[i]) ++positives[i];
        if (positives[i]) ++anchors;
    }
    if (anchors == 0) throw ConfigError("supcon: no anchor has a positive in this batch");

    Var lp = similarity_log_probs(z, temperature);
    Tensor w({m, m});
    for (std::size_t i = 0; i < m; ++i) {
        if (!positives[i]) continue;
        const double wi = -1.0 / (static_cast<double>(positives[i]) * static_cast<double>(anchors));
        for (std::size_t p = 0; p < m; ++p)
            if (p != i && labels[p] == labels[i]) w.at(i, p) = wi;
    }
    return weighted_pick(lp, std::move(w));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    if (logits.shape().size() != 2) throw ShapeError("cross_entropy: logits must be (n, C)");
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (c < 2) throw ShapeError("cross_entropy needs at least 2 classes");
    if (n == 0) throw ShapeError("cross_entropy: empty batch");
    if (labels.size() != n) throw ShapeError("cross_entropy: label count does not match logits");
    Tensor w({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw ConfigError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                              std::to_string(c) + ")");
        }
        w.at(i, static_cast<std::size_t>(labels[i])) = -1.0 / static_cast<double>(n);
    }
    return weighted_pick(ops::log_softmax_rows(logits), std::move(w));
}

double nt_xent(const Tensor& z_a, const Tensor& z_b, double temperature) {
    Tape tape;
    return nt_xent(tape.constant(z_a), tape.constant(z_b), temperature).value().item();
}

double supcon(const Tensor& z, std::span<const int> labels, double temperature) {
    Tape tape;
    return supcon(tape.constant(z), labels, temperature).value().item();
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
    Tape tape;
    return cross_entropy(tape.constant(logits), labels).value().item();
}

Var embed(const BoundModel& model, Var x) { return ops::l2_normalize_rows(model.project(model.encode(x))); }

Var pretrain_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    batch.validate();
    if (cfg.scheme != Scheme::CL && cfg.scheme != Scheme::SCL) {
        throw ConfigError("pretrain_loss handles CL and SCL; use combined_scheme_loss for " + to_string(cfg.scheme));
    }
    if (cfg.beta > 0.0 && !batch.x_adv) throw ConfigError("pretrain_loss: beta > 0 requires x_adv");
    if (cfg.scheme == Scheme::SCL) require_labels(batch, "SCL pretraining");

    std::optional<Var> total;
    if (cfg.alpha > 0.0) {
        accumulate(total, weighted(contrastive_term(model, cfg.scheme, batch.x_prime, batch.x_double_prime, batch, cfg),
                                   cfg.alpha));
    }
    if (cfg.beta > 0.0) {
        accumulate(total, weighted(contrastive_term(model, cfg.scheme, batch.x, *batch.x_adv, batch, cfg), cfg.beta));
    }
    return total ? *total : zero_loss(model.tape());
}

Var finetune_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg, FinetuneMode mode) {
    cfg.validate();
    batch.validate();
    const auto& y = require_labels(batch, "fine-tuning");
    const bool encoder_trainable = model.tracked().encoder;
    if (mode == FinetuneMode::full_at) {
        if (!encoder_trainable || model.model().freeze_encoder) {
            throw ConfigError("full_at fine-tuning needs a trainable encoder, but the encoder is frozen");
        }
    } else if (encoder_trainable) {
        throw ConfigError(to_string(mode) + " fine-tuning keeps the encoder fixed, but it is tracked");
    }
    Tape& tape = model.tape();
    auto ce = [&](const Tensor& x) { return cross_entropy(model.classify(model.encode(tape.constant(x))), y); };

    if (mode == FinetuneMode::standard) return ce(batch.x);
    if (!batch.x_adv) throw ConfigError(to_string(mode) + " fine-tuning requires x_adv");
    std::optional<Var> total;
    if (cfg.alpha > 0.0) accumulate(total, weighted(ce(batch.x), cfg.alpha));
    if (cfg.beta > 0.0) accumulate(total, weighted(ce(*batch.x_adv), cfg.beta));
    return total ? *total : zero_loss(tape);
}

Var combined_scheme_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    batch.validate();
    if (!is_combination(cfg.scheme)) {
        throw ConfigError("combined_scheme_loss needs a combined scheme, got " + to_string(cfg.scheme));
    }
    Tape& tape = model.tape();
    std::optional<Var> total;

    if (has_sl(cfg.scheme) && cfg.weight_sl > 0.0) {
        const auto& y = require_labels(batch, "the SL constituent");
        Var logits = model.classify(model.encode(tape.constant(batch.x)));
        accumulate(total, weighted(cross_entropy(logits, y), cfg.weight_sl));
    }

    const bool want_cl = has_cl(cfg.scheme) && cfg.weight_cl > 0.0;
    const bool want_scl = has_scl(cfg.scheme) && cfg.weight_scl > 0.0;
    if (want_cl || want_scl) {
        if (batch.x_prime.shape() != batch.x.shape() || batch.x_double_prime.shape() != batch.x.shape()) {
            throw ConfigError("combined scheme " + to_string(cfg.scheme) + " requires both augmented views");
        }
        Var za = embed(model, tape.constant(batch.x_prime));
        Var zb = embed(model, tape.constant(batch.x_double_prime));
        if (want_cl) accumulate(total, weighted(nt_xent(za, zb, cfg.cl_temperature), cfg.weight_cl));
        if (want_scl) {
            const std::array parts{za, zb};
            accumulate(total, weighted(supcon(ops::concat_rows(parts), twice(require_labels(batch, "the SCL constituent")),
                                              cfg.scl_temperature),
                                       cfg.weight_scl));
        }
    }
    return total ? *total : zero_loss(tape);
}

Var supervised_loss(const BoundModel& model, const ViewBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    batch.validate();
    const auto& y = require_labels(batch, "supervised training");
    Tape& tape = model.tape();
    auto ce = [&](const Tensor& x) { return cross_entropy(model.classify(model.encode(tape.constant(x))), y); };
    if (!batch.x_adv || cfg.beta == 0.0) return ce(batch.x);
    std::optional<Var> total;
    if (cfg.alpha > 0.0) accumulate(total, weighted(ce(batch.x), cfg.alpha));
    accumulate(total, weighted(ce(*batch.x_adv), cfg.beta));
    return *total;
}

}  // namespace rcl
