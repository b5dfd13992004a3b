#include "rcl/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "rcl/error.hpp"
#include "rcl/rng.hpp"

namespace rcl {

std::optional<DrivingLoss> threat_model_ii_loss(Scheme scheme) {
    switch (scheme) {
        case Scheme::SL: return std::nullopt;
        case Scheme::CL:
        case Scheme::SL_CL:
        case Scheme::CL_SCL: return DrivingLoss::CL;
        case Scheme::SCL:
        case Scheme::SL_SCL: return DrivingLoss::SCL;
    }
    return std::nullopt;
}

const RobustAccuracy* EvalReport::find(ThreatModel tm, double epsilon, std::size_t steps) const {
    for (const auto& r : robust)
        if (r.threat_model == tm && std::abs(r.epsilon - epsilon) < 1e-12 && r.steps == steps) return &r;
    return nullptr;
}

double accuracy(const ModelBundle& model, const Dataset& data) {
    const auto pred = predict(model, data.inputs);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.labels[i];
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

EvalReport evaluate(const ModelBundle& model, const Dataset& test, const std::vector<EvalAttack>& attacks,
                    Scheme scheme, Scenario scenario, const LossConfig& loss, std::size_t batch_size,
                    const std::string& model_id) {
    test.validate();
    if (batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
    EvalReport report;
    report.model_id = model_id;
    report.scenario = scenario;
    report.scheme = scheme;
    report.n_test = test.size();
    report.clean_accuracy = accuracy(model, test);

    const auto batches = minibatches(test.size(), batch_size, 0, false);
    for (const auto& attack : attacks) {
        RobustAccuracy r;
        r.threat_model = attack.threat_model;
        r.epsilon = attack.spec.epsilon;
        r.steps = attack.spec.steps;
        AttackSpec spec = attack.spec;
        if (!spec.clamp && test.image) spec.clamp = ClampRange{};
        if (attack.threat_model == ThreatModel::I) {
            spec.driving_loss = DrivingLoss::CE;
        } else {
            const auto driving = threat_model_ii_loss(scheme);
            if (!driving) {
                report.robust.push_back(r);
                continue;
            }
            spec.driving_loss = *driving;
        }
        r.driving_loss = spec.driving_loss;

        std::size_t correct = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            ViewBatch batch;
            batch.x = test.inputs.gather_rows(batches[b]);
            std::vector<int> y;
            for (auto i : batches[b]) y.push_back(test.labels[i]);
            batch.y = y;
            AttackSpec s = spec;
            s.seed = derive_seed(spec.seed, b);
            const Tensor adv = attack.threat_model == ThreatModel::I
                                   ? pgd(model, batch, s, loss)
                                   : threat_model_II_attack(model, batch, s, loss, &report.threat_model_ii_audit);
            const auto pred = predict(model, adv);
            for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
        }
        r.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
        report.robust.push_back(r);
    }
    return report;
}

const SweepCell* SweepResult::find(Scenario scenario, Scheme scheme, std::uint64_t seed) const {
    for (const auto& c : cells)
        if (c.scenario == scenario && c.scheme == scheme && c.seed == seed) return &c;
    return nullptr;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string safe(std::string s) {
    for (auto& ch : s)
        if (ch == '+') ch = '_';
    return s;
}

}  // namespace

SweepResult scenario_sweep(const Dataset& data, const SweepConfig& config,
                           const std::optional<std::filesystem::path>& out_dir) {
    if (config.scenarios.empty() || config.schemes.empty()) throw ConfigError("sweep grid is empty");
    if (config.seeds.empty()) throw ConfigError("sweep needs at least one seed");
    SweepResult result;
    for (std::uint64_t seed : config.seeds) {
        ScenarioSpec base = config.base;
        base.seed = seed;
        result.test_sets.push_back(split(data, base.split, derive_seed(seed, 1)).test);
        PretrainCache cache;
        for (Scheme scheme : config.schemes) {
            for (Scenario scenario : config.scenarios) {
                SweepCell cell;
                cell.scenario = scenario;
                cell.scheme = scheme;
                cell.seed = seed;
                const auto start = std::chrono::steady_clock::now();
                try {
                    ScenarioSpec spec = base;
                    spec.scenario = scenario;
                    spec.loss.scheme = scheme;
                    RunRecord run = run_scenario(data, spec, RunOptions{std::nullopt, &cache});
                    const std::string id = to_string(scenario) + "/" + to_string(scheme) + "/seed" + std::to_string(seed);
                    cell.report = evaluate(run.model, run.splits.test, config.attacks, scheme, scenario, spec.loss,
                                           config.eval_batch_size, id);
                    if (config.keep_models) cell.model = std::move(run.model);
                } catch (const Error& e) {
                    cell.error = e.what();
                }
                cell.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                result.cells.push_back(std::move(cell));
            }
        }
        if (config.keep_models) result.caches.push_back(std::move(cache));
    }

    if (out_dir) {
        std::filesystem::create_directories(*out_dir / "curves");
        write_results_csv(result, config.record_runtime, *out_dir / "results.csv");
        result.files.push_back("results.csv");
        for (const auto& cell : result.cells) {
            if (!cell.report) continue;
            for (ThreatModel tm : {ThreatModel::I, ThreatModel::II}) {
                // One curve per (threat model, steps) with accuracies sorted by epsilon.
                std::map<std::size_t, std::map<double, std::optional<double>>> curves;
                for (const auto& r : cell.report->robust)
                    if (r.threat_model == tm) curves[r.steps][r.epsilon] = r.accuracy;
                for (const auto& [steps, points] : curves) {
                    const std::string name = "curves/curve_" + safe(to_string(cell.scenario)) + "_" +
                                             safe(to_string(cell.scheme)) + "_tm" + to_string(tm) + "_" +
                                             std::to_string(steps) + "steps_seed" + std::to_string(cell.seed) + ".csv";
                    std::ofstream out(*out_dir / name);
                    if (!out) throw IoError("cannot write " + (*out_dir / name).string());
                    out << "epsilon,robust_acc\n";
                    for (const auto& [eps, acc] : points) out << fmt(eps) << ',' << (acc ? fmt(*acc) : "NA") << '\n';
                    result.files.push_back(name);
                }
            }
        }
        bool any_failed = false;
        for (const auto& c : result.cells) any_failed = any_failed || !c.error.empty();
        if (any_failed) {
            std::ofstream out(*out_dir / "failures.csv");
            out << "scenario,scheme,seed,error\n";
            for (const auto& c : result.cells) {
                if (c.error.empty()) continue;
                std::string msg = c.error;
                for (auto& ch : msg)
                    if (ch == ',' || ch == '\n') ch = ';';
                out << to_string(c.scenario) << ',' << to_string(c.scheme) << ',' << c.seed << ',' << msg << '\n';
            }
            result.files.push_back("failures.csv");
        }
    }
    return result;
}

void write_results_csv(const SweepResult& result, bool record_runtime, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "scenario,scheme,threat_model,epsilon,steps,clean_acc,robust_acc,seed,runtime_s\n";
    for (const auto& cell : result.cells) {
        if (!cell.report) continue;
        const std::string runtime = record_runtime ? fmt(cell.runtime_s) : "NA";
        for (const auto& r : cell.report->robust) {
            out << to_string(cell.scenario) << ',' << to_string(cell.scheme) << ',' << to_string(r.threat_model) << ','
                << fmt(r.epsilon) << ',' << r.steps << ',' << fmt(cell.report->clean_accuracy) << ','
                << (r.accuracy ? fmt(*r.accuracy) : "NA") << ',' << cell.seed << ',' << runtime << '\n';
        }
    }
}

}  // namespace rcl
