#include "rcl/training.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rcl/checkpoint.hpp"
#include "rcl/error.hpp"
#include "rcl/rng.hpp"

namespace rcl {

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::ST: return "ST";
        case Scenario::AT: return "AT";
        case Scenario::PartialAT: return "Partial-AT";
        case Scenario::FullAT: return "Full-AT";
    }
    return "?";
}

Scenario parse_scenario(const std::string& text) {
    for (Scenario s : {Scenario::ST, Scenario::AT, Scenario::PartialAT, Scenario::FullAT})
        if (to_string(s) == text) return s;
    throw ConfigError("unknown scenario '" + text + "' (expected ST, AT, Partial-AT or Full-AT)");
}

bool adversarial_pretraining(Scenario s) { return s != Scenario::ST; }

FinetuneMode finetune_mode(Scenario s) {
    switch (s) {
        case Scenario::ST:
        case Scenario::AT: return FinetuneMode::standard;
        case Scenario::PartialAT: return FinetuneMode::partial_at;
        case Scenario::FullAT: return FinetuneMode::full_at;
    }
    return FinetuneMode::standard;
}

void ScenarioSpec::validate(bool require_budget) const {
    loss.validate();
    encoder.validate();
    augment.validate();
    train_attack.validate();
    pretrain_optimizer.validate();
    finetune_optimizer.validate();
    if (head_dim == 0) throw ConfigError("head_dim must be >= 1");
    if (batch_size == 0 || adv_batch_size == 0) throw ConfigError("batch sizes must be >= 1");
    if (require_budget && adversarial_pretraining(scenario) && !(train_attack.epsilon > 0.0)) {
        throw ConfigError(to_string(scenario) + " requires a training attack with epsilon > 0");
    }
    if (adversarial_pretraining(scenario) && is_combination(loss.scheme)) {
        throw ConfigError("combined scheme " + to_string(loss.scheme) + " is only defined under ST");
    }
}

std::string canonical_text(const ScenarioSpec& s) {
    std::ostringstream os;
    os.precision(17);
    os << "scenario=" << to_string(s.scenario) << ";scheme=" << to_string(s.loss.scheme)
       << ";cl_t=" << s.loss.cl_temperature << ";scl_t=" << s.loss.scl_temperature << ";alpha=" << s.loss.alpha
       << ";beta=" << s.loss.beta << ";w=" << s.loss.weight_sl << ',' << s.loss.weight_cl << ','
       << s.loss.weight_scl << ";encoder=" << to_string(s.encoder.kind) << ':';
    for (auto w : s.encoder.widths) os << w << ',';
    os << ":in=" << shape_str(s.encoder.input_shape) << ";head=" << s.head_dim << ";split=" << s.split[0] << ','
       << s.split[1] << ',' << s.split[2] << ";epochs=" << s.pretrain_epochs << ',' << s.finetune_epochs
       << ";batch=" << s.batch_size << ',' << s.adv_batch_size;
    auto adam = [&os](const AdamConfig& a) { os << a.lr << ',' << a.beta1 << ',' << a.beta2 << ',' << a.eps; };
    os << ";opt_p=";
    adam(s.pretrain_optimizer);
    os << ";opt_f=";
    adam(s.finetune_optimizer);
    const AttackSpec& a = s.train_attack;
    os << ";attack=" << a.epsilon << ',' << a.effective_step_size() << ',' << a.steps << ',' << a.random_start << ','
       << to_string(a.driving_loss) << ',';
    if (a.clamp) os << a.clamp->lo << ':' << a.clamp->hi;
    else os << "none";
    os << ',' << a.seed;
    const AugmentSpec& g = s.augment;
    os << ";augment=" << g.gaussian_noise_sigma << ',' << g.feature_dropout_prob << ',' << g.crop_shift_max_pixels
       << ',' << g.horizontal_flip_prob << ',' << g.erase_patch_prob << ',' << g.seed << ";seed=" << s.seed;
    return os.str();
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::size_t RunRecord::executed_phases() const {
    std::size_t n = 0;
    for (const auto& p : phases) n += p.executed ? 1 : 0;
    return n;
}

namespace {

std::vector<int> gather_labels(const Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (auto i : idx) y.push_back(data.labels[i]);
    return y;
}

// Contrastive phases drop the trailing partial batch; a dataset smaller
// than one batch trains on a single full-data batch.
std::vector<std::vector<std::size_t>> training_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                       bool drop_last) {
    auto batches = minibatches(n, batch_size, seed);
    if (drop_last && batches.size() > 1 && batches.back().size() < batch_size) batches.pop_back();
    return batches;
}

std::optional<ClampRange> default_clamp(const Dataset& data, const AttackSpec& spec) {
    if (spec.clamp) return spec.clamp;
    return data.image ? std::optional<ClampRange>(ClampRange{}) : std::nullopt;
}

template <typename LossFn>
double optimisation_step(ModelBundle& model, PartMask mask, Adam& opt, LossFn&& loss_fn) {
    Tape tape;
    BoundModel bound(model, tape, mask);
    Var loss = loss_fn(bound);
    Gradients grads = tape.backward(loss);

    std::vector<Tensor*> params;
    std::vector<const Tensor*> gs;
    Tensor zero;
    auto collect = [&](bool on, std::vector<Tensor>& ps, const std::vector<Var>& vars) {
        if (!on) return;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            params.push_back(&ps[i]);
            auto it = grads.find(vars[i].id());
            if (it == grads.end()) throw Error("missing gradient for a tracked parameter");
            gs.push_back(&it->second);
        }
    };
    collect(mask.encoder, model.encoder, bound.encoder_params());
    collect(mask.head, model.head, bound.head_params());
    collect(mask.classifier, model.classifier, bound.classifier_params());
    opt.step(params, gs);
    return loss.value().item();
}

void finish_epoch(PhaseRecord& rec, std::size_t first_step) {
    double s = 0.0;
    const std::size_t n = rec.step_losses.size() - first_step;
    for (std::size_t i = first_step; i < rec.step_losses.size(); ++i) s += rec.step_losses[i];
    rec.epoch_losses.push_back(n ? s / static_cast<double>(n) : 0.0);
}

template <typename Body>
void guarded(const char* phase, std::size_t epoch, std::size_t step, Body&& body) {
    try {
        body();
    } catch (const NumericError& e) {
        throw NumericError(std::string(phase) + " diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ": " + e.what());
    }
}

AttackSpec phase_attack(const ScenarioSpec& spec, const Dataset& data, DrivingLoss driving, std::uint64_t seed) {
    AttackSpec a = spec.train_attack;
    a.driving_loss = driving;
    a.clamp = default_clamp(data, spec.train_attack);
    a.seed = derive_seed(spec.train_attack.seed, seed);
    return a;
}

}  // namespace

PhaseRecord pretrain(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec) {
    spec.validate(false);
    PhaseRecord rec;
    rec.phase = "pretrain";
    if (spec.loss.scheme == Scheme::SL) return rec;
    rec.executed = true;

    const bool adversarial = adversarial_pretraining(spec.scenario);
    const bool combined = is_combination(spec.loss.scheme);
    LossConfig cfg = spec.loss;
    if (!adversarial && !combined) {
        cfg.alpha = 1.0;
        cfg.beta = 0.0;
    }
    const DrivingLoss driving = spec.loss.scheme == Scheme::SCL ? DrivingLoss::SCL : DrivingLoss::CL;
    const PartMask mask{true, true, has_sl(spec.loss.scheme)};
    const std::size_t bsz = adversarial ? spec.adv_batch_size : spec.batch_size;

    model.freeze_encoder = false;
    Adam opt(spec.pretrain_optimizer);
    for (std::size_t epoch = 0; epoch < spec.pretrain_epochs; ++epoch) {
        const std::size_t first = rec.step_losses.size();
        const auto batches = training_batches(data.size(), bsz, derive_seed(spec.seed, 11, epoch), true);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            guarded("pretraining", epoch, b, [&] {
                ViewBatch batch;
                batch.x = data.inputs.gather_rows(batches[b]);
                batch.y = gather_labels(data, batches[b]);
                std::tie(batch.x_prime, batch.x_double_prime) =
                    make_views(batch.x, data.image, spec.augment, derive_seed(spec.augment.seed, spec.seed, epoch, b));
                if (adversarial) {
                    const AttackSpec attack = phase_attack(spec, data, driving, derive_seed(spec.seed, 13, epoch, b));
                    batch.x_adv = pgd(model, batch, attack, cfg);
                    rec.attack_loss = driving;
                    ++rec.attack_calls;
                    rec.max_perturbation = std::max(rec.max_perturbation, max_abs_diff(*batch.x_adv, batch.x));
                }
                rec.step_losses.push_back(optimisation_step(model, mask, opt, [&](const BoundModel& bound) {
                    return combined ? combined_scheme_loss(bound, batch, cfg) : pretrain_loss(bound, batch, cfg);
                }));
            });
        }
        finish_epoch(rec, first);
    }
    return rec;
}

PhaseRecord train_supervised(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec) {
    spec.validate(false);
    PhaseRecord rec;
    rec.phase = "supervised";
    rec.executed = true;
    const bool adversarial = adversarial_pretraining(spec.scenario);
    const std::size_t bsz = adversarial ? spec.adv_batch_size : spec.batch_size;
    const PartMask mask{true, false, true};

    model.freeze_encoder = false;
    Adam opt(spec.pretrain_optimizer);
    for (std::size_t epoch = 0; epoch < spec.pretrain_epochs; ++epoch) {
        const std::size_t first = rec.step_losses.size();
        const auto batches = training_batches(data.size(), bsz, derive_seed(spec.seed, 11, epoch), false);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            guarded("supervised training", epoch, b, [&] {
                ViewBatch batch;
                batch.x = data.inputs.gather_rows(batches[b]);
                batch.y = gather_labels(data, batches[b]);
                if (adversarial) {
                    const AttackSpec attack =
                        phase_attack(spec, data, DrivingLoss::CE, derive_seed(spec.seed, 13, epoch, b));
                    batch.x_adv = pgd(model, batch, attack, spec.loss);
                    rec.attack_loss = DrivingLoss::CE;
                    ++rec.attack_calls;
                    rec.max_perturbation = std::max(rec.max_perturbation, max_abs_diff(*batch.x_adv, batch.x));
                }
                rec.step_losses.push_back(optimisation_step(model, mask, opt, [&](const BoundModel& bound) {
                    return supervised_loss(bound, batch, spec.loss);
                }));
            });
        }
        finish_epoch(rec, first);
    }
    return rec;
}

PhaseRecord finetune(ModelBundle& model, const Dataset& data, const ScenarioSpec& spec) {
    spec.validate(false);
    PhaseRecord rec;
    rec.phase = "finetune";
    if (spec.loss.scheme == Scheme::SL) return rec;
    rec.executed = true;

    const FinetuneMode mode = finetune_mode(spec.scenario);
    const bool adversarial = mode != FinetuneMode::standard;
    model.freeze_encoder = mode != FinetuneMode::full_at;
    reset_classifier(model, derive_seed(spec.seed, 21));
    const PartMask mask{!model.freeze_encoder, false, true};
    const std::size_t bsz = adversarial ? spec.adv_batch_size : spec.batch_size;

    Adam opt(spec.finetune_optimizer);
    for (std::size_t epoch = 0; epoch < spec.finetune_epochs; ++epoch) {
        const std::size_t first = rec.step_losses.size();
        const auto batches = training_batches(data.size(), bsz, derive_seed(spec.seed, 22, epoch), false);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            guarded("fine-tuning", epoch, b, [&] {
                ViewBatch batch;
                batch.x = data.inputs.gather_rows(batches[b]);
                batch.y = gather_labels(data, batches[b]);
                if (adversarial) {
                    const AttackSpec attack =
                        phase_attack(spec, data, DrivingLoss::CE, derive_seed(spec.seed, 23, epoch, b));
                    batch.x_adv = pgd(model, batch, attack, spec.loss);
                    rec.attack_loss = DrivingLoss::CE;
                    ++rec.attack_calls;
                    rec.max_perturbation = std::max(rec.max_perturbation, max_abs_diff(*batch.x_adv, batch.x));
                }
                rec.step_losses.push_back(optimisation_step(model, mask, opt, [&](const BoundModel& bound) {
                    return finetune_loss(bound, batch, spec.loss, mode);
                }));
            });
        }
        finish_epoch(rec, first);
    }
    return rec;
}

namespace {

std::string pretrain_cache_key(const Dataset& data, const ScenarioSpec& spec) {
    ScenarioSpec key = spec;
    // Scenarios with the same kind of pretraining share it.
    key.scenario = adversarial_pretraining(spec.scenario) ? Scenario::AT : Scenario::ST;
    key.finetune_epochs = 0;
    key.finetune_optimizer = AdamConfig{};
    if (!adversarial_pretraining(spec.scenario)) key.train_attack = AttackSpec{};
    return canonical_text(key) + ";data=" + hex64(fingerprint(data));
}

}  // namespace

RunRecord run_scenario(const Dataset& data, const ScenarioSpec& spec_in, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    data.validate();
    ScenarioSpec spec = spec_in;
    const Shape item = data.item_shape();
    spec.encoder.input_shape = spec.encoder.kind == EncoderKind::dense ? Shape{shape_size(item)} : item;
    if (spec.encoder.kind == EncoderKind::conv_small && item.size() == 2) spec.encoder.input_shape = {1, item[0], item[1]};
    spec.validate();

    RunRecord run;
    run.splits = split(data, spec.split, derive_seed(spec.seed, 1));
    const Dataset& dp = run.splits.pretrain;
    const Dataset& df = run.splits.finetune;

    if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
    auto out_path = [&](const char* name) { return *options.out_dir / name; };

    if (spec.loss.scheme == Scheme::SL) {
        run.model = init_model(spec.encoder, data.n_classes, spec.head_dim, spec.seed);
        run.phases.push_back(train_supervised(run.model, dp, spec));
    } else {
        const std::string key = options.cache ? pretrain_cache_key(dp, spec) : std::string();
        auto hit = options.cache ? options.cache->find(key) : PretrainCache::iterator{};
        if (options.cache && hit != options.cache->end()) {
            run.model = hit->second.first;
            run.phases.push_back(hit->second.second);
        } else {
            run.model = init_model(spec.encoder, data.n_classes, spec.head_dim, spec.seed);
            run.phases.push_back(pretrain(run.model, dp, spec));
            if (options.cache) options.cache->emplace(key, std::make_pair(run.model, run.phases.back()));
        }
        if (options.out_dir) {
            save_checkpoint(run.model, out_path("pretrain.rrlb"));
            run.manifest.files.push_back("pretrain.rrlb");
        }
        run.phases.push_back(finetune(run.model, df, spec));
    }

    run.manifest.config_hash = hex64(fnv1a64(canonical_text(spec)));
    run.manifest.seed = spec.seed;
    run.manifest.dataset_fingerprint = hex64(fingerprint(data));
    run.manifest.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (options.out_dir) {
        save_checkpoint(run.model, out_path("model.rrlb"));
        write_loss_csv(run, out_path("loss.csv"));
        run.manifest.files.push_back("model.rrlb");
        run.manifest.files.push_back("loss.csv");
    }
    if (options.out_dir && options.write_manifest) {
        nlohmann::ordered_json j;
        j["command"] = "train";
        j["config_hash"] = run.manifest.config_hash;
        j["canonical_spec"] = canonical_text(spec);
        j["seed"] = run.manifest.seed;
        j["dataset_fingerprint"] = run.manifest.dataset_fingerprint;
        j["wall_clock_s"] = run.manifest.wall_clock_s;
        j["files"] = run.manifest.files;
        std::ofstream(out_path("manifest.json")) << j.dump(2) << '\n';
    }
    return run;
}

void write_loss_csv(const RunRecord& record, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,phase,loss\n";
    char buf[40];
    for (const auto& phase : record.phases) {
        if (!phase.executed) continue;
        for (std::size_t e = 0; e < phase.epoch_losses.size(); ++e) {
            std::snprintf(buf, sizeof buf, "%.17g", phase.epoch_losses[e]);
            out << e << ',' << phase.phase << ',' << buf << '\n';
        }
    }
}

}  // namespace rcl
