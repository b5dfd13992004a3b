#include "rcl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rcl/analysis.hpp"
#include "rcl/checkpoint.hpp"
#include "rcl/config.hpp"
#include "rcl/error.hpp"
#include "rcl/evaluation.hpp"
#include "rcl/report.hpp"
#include "rcl/rng.hpp"

namespace fs = std::filesystem;

namespace rcl {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string safe(std::string s) {
    for (auto& ch : s)
        if (ch == '+' || ch == '/' || ch == '~') ch = '_';
    return s;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << contents;
    if (!out) throw IoError("write failed for " + path.string());
}

// Options shared by every command.
struct CommonArgs {
    std::string config_path;
    std::string manifest_path;
    std::vector<std::string> overrides;
};

/// State of one command invocation: the resolved config, the output
/// directory and every file written so far (relative to the directory).
struct Context {
    std::string command;
    ExperimentConfig config;
    fs::path out_dir;
    std::vector<std::string> files;
    std::optional<Dataset> data;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::ostream* out = nullptr;

    fs::path path(const std::string& rel) const { return out_dir / rel; }
    void add(const std::string& rel) {
        if (std::find(files.begin(), files.end(), rel) == files.end()) files.push_back(rel);
    }
    void add(const fs::path& absolute) { add(fs::relative(absolute, out_dir).generic_string()); }
    const Dataset& dataset() {
        if (!data) data = load_dataset(config);
        return *data;
    }
};

ExperimentConfig config_from_manifest(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": not a manifest (" + e.what() + ")");
    }
    if (!j.contains("config") || !j["config"].is_string())
        throw ConfigError(path.string() + ": manifest has no embedded config");
    ExperimentConfig config = parse_config(j["config"].get<std::string>(), path.string() + " (embedded config)");
    if (j.contains("config_dir") && j["config_dir"].is_string()) config.base_dir = j["config_dir"].get<std::string>();
    return config;
}

Context make_context(const std::string& command, const CommonArgs& args, std::ostream& out) {
    Context ctx;
    ctx.command = command;
    ctx.out = &out;
    if (!args.manifest_path.empty()) {
        ctx.config = config_from_manifest(args.manifest_path);
    } else if (!args.config_path.empty()) {
        ctx.config = load_config(args.config_path);
    } else {
        throw ConfigError("either --config or --from-manifest is required");
    }
    for (const auto& o : args.overrides) apply_override(ctx.config, o);
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) ctx.config.output_dir = env;
    ctx.config.base_dir = fs::absolute(ctx.config.base_dir).lexically_normal();
    ctx.out_dir = ctx.config.output_dir;
    fs::create_directories(ctx.out_dir);
    return ctx;
}

void write_manifest(Context& ctx, const std::optional<std::uint64_t>& fingerprint_value) {
    const std::string name = ctx.command + "_manifest.json";
    nlohmann::ordered_json j;
    j["command"] = ctx.command;
    j["config_hash"] = config_hash(ctx.config);
    j["config"] = canonical_config(ctx.config);
    j["config_dir"] = ctx.config.base_dir.generic_string();
    j["seed"] = ctx.config.seed;
    j["dataset_fingerprint"] = fingerprint_value ? hex64(*fingerprint_value) : std::string("none");
    j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count();
    j["files"] = ctx.files;
    write_file(ctx.path(name), j.dump(2) + "\n");
    *ctx.out << "wrote " << ctx.files.size() << " files and " << (ctx.out_dir / name).string() << "\n";
}

SplitResult config_splits(Context& ctx) {
    return split(ctx.dataset(), ctx.config.run.split, derive_seed(ctx.config.run.seed, 1));
}

ModelBundle load_model(const std::string& checkpoint) {
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
    return load_checkpoint(checkpoint);
}

std::string default_checkpoint(const Context& ctx, const std::string& given) {
    return given.empty() ? ctx.path("model.rrlb").string() : given;
}

std::string run_id(const ExperimentConfig& c) {
    return to_string(c.run.scenario) + "/" + to_string(c.run.loss.scheme) + "/seed" + std::to_string(c.seed);
}

// Writes csv + pgm + svg for one matrix under <stem>.
void emit_heatmap(Context& ctx, const CKAMatrix& m, const std::string& stem, const std::string& title) {
    fs::create_directories(ctx.path(stem).parent_path());
    write_cka_csv(m, ctx.path(stem + ".csv"));
    ctx.add(stem + ".csv");
    for (const auto& p : render_heatmap(m, ctx.path(stem), title)) ctx.add(p);
}

void emit_curve_rows(std::ostream& out, const std::string& prefix, const CkaCurve& curve) {
    for (std::size_t i = 0; i < curve.layers.size(); ++i)
        out << prefix << curve.layers[i].ordinal << ',' << curve.layers[i].label << ','
            << (curve.masked[i] ? std::string("NA") : fmt(curve.values[i])) << '\n';
}

std::optional<double> final_value(const CkaCurve& curve) {
    if (curve.values.empty() || curve.masked.back()) return std::nullopt;
    return curve.values.back();
}

// ---------------------------------------------------------------- commands

void cmd_gen_data(Context& ctx) {
    const Dataset& d = ctx.dataset();
    fs::create_directories(ctx.path("data"));
    if (d.image) {
        save_idx(d, ctx.path("data/images.idx"), ctx.path("data/labels.idx"));
        ctx.add(std::string("data/images.idx"));
        ctx.add(std::string("data/labels.idx"));
    } else {
        save_csv(d, ctx.path("data/dataset.csv"));
        ctx.add(std::string("data/dataset.csv"));
    }
    *ctx.out << d.name << ": " << d.size() << " samples, " << d.n_classes << " classes\n";
    write_manifest(ctx, fingerprint(d));
}

void cmd_train(Context& ctx) {
    const Dataset& d = ctx.dataset();
    RunOptions options;
    options.out_dir = ctx.out_dir;
    options.write_manifest = false;
    RunRecord run = run_scenario(d, ctx.config.run, options);
    for (const auto& f : run.manifest.files) ctx.add(f);
    for (const auto& p : run.phases) {
        if (!p.executed) continue;
        *ctx.out << p.phase << ": " << p.epoch_losses.size() << " epochs, final loss "
                 << (p.epoch_losses.empty() ? std::string("NA") : fixed(p.epoch_losses.back(), 6)) << ", "
                 << p.attack_calls << " attack calls\n";
    }
    write_manifest(ctx, fingerprint(d));
}

void cmd_evaluate(Context& ctx, const std::string& checkpoint) {
    const std::string path = default_checkpoint(ctx, checkpoint);
    ModelBundle model = load_model(path);
    SplitResult s = config_splits(ctx);
    SweepResult single;
    SweepCell cell;
    cell.scenario = ctx.config.run.scenario;
    cell.scheme = ctx.config.run.loss.scheme;
    cell.seed = ctx.config.seed;
    cell.report = evaluate(model, s.test, evaluation_attacks(ctx.config), cell.scheme, cell.scenario,
                           ctx.config.run.loss, ctx.config.evaluation.batch_size, run_id(ctx.config));
    *ctx.out << "clean accuracy " << fixed(cell.report->clean_accuracy, 4) << " on " << cell.report->n_test
             << " test samples\n";
    for (const auto& r : cell.report->robust)
        *ctx.out << "TM-" << to_string(r.threat_model) << " eps " << fixed(r.epsilon, 5) << " steps " << r.steps
                 << ": " << (r.accuracy ? fixed(*r.accuracy, 4) : std::string("NA")) << "\n";
    single.cells.push_back(std::move(cell));
    write_results_csv(single, false, ctx.path("eval.csv"));
    ctx.add(std::string("eval.csv"));
    write_manifest(ctx, fingerprint(ctx.dataset()));
}

void cmd_cka(Context& ctx, const std::string& checkpoint, const std::string& other) {
    const std::string path = default_checkpoint(ctx, checkpoint);
    ModelBundle model = load_model(path);
    std::optional<ModelBundle> second;
    if (!other.empty()) second = load_model(other);
    SplitResult s = config_splits(ctx);
    const auto& cfg = ctx.config;
    const Dataset sample = analysis_sample(s.test, cfg.analysis.n_samples, derive_seed(cfg.seed, 31));
    const AttackSpec attack = analysis_attack(cfg);
    const std::string id = fs::path(path).stem().string();

    emit_heatmap(ctx, cka_heatmap(model, sample, std::nullopt, id), "cka/clean_clean", id + " clean-clean");
    CKAMatrix adv = cka_heatmap(model, sample, attack, id);
    emit_heatmap(ctx, adv, "cka/clean_adv", id + " clean-adv");
    {
        std::ostringstream rows;
        rows << "layer_ordinal,layer,cka\n";
        emit_curve_rows(rows, "", diagonal(adv));
        write_file(ctx.path("cka/divergence.csv"), rows.str());
        ctx.add(std::string("cka/divergence.csv"));
    }
    if (second) {
        const std::string id2 = fs::path(other).stem().string();
        CKAMatrix clean = cross_model_cka(model, *second, sample, std::nullopt, id, id2);
        CKAMatrix both = cross_model_cka(model, *second, sample, attack, id, id2);
        emit_heatmap(ctx, clean, "cka/cross_clean", id + " vs " + id2 + " clean");
        emit_heatmap(ctx, both, "cka/cross_adv", id + " vs " + id2 + " adv-adv");
        auto u = upper_third_mean(clean);
        *ctx.out << "upper-third cross-model CKA " << (u ? fixed(*u, 4) : std::string("NA")) << "\n";
    }
    if (!cfg.analysis.epsilon_sweep.empty()) {
        auto entries = epsilon_sweep(cfg.run, ctx.dataset(), cfg.analysis.epsilon_sweep, attack,
                                     cfg.analysis.n_samples, ctx.path("cka/epsilon_sweep"));
        std::ostringstream rows;
        rows << "train_epsilon,layer_ordinal,layer,cka\n";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            emit_curve_rows(rows, fmt(entries[i].train_epsilon) + ",", entries[i].curve);
            emit_heatmap(ctx, entries[i].heatmap, "cka/epsilon_sweep/eps_" + std::to_string(i) + "/clean_adv",
                         "train eps " + fixed(entries[i].train_epsilon, 4) + " clean-adv");
        }
        write_file(ctx.path("cka/epsilon_sweep.csv"), rows.str());
        ctx.add(std::string("cka/epsilon_sweep.csv"));
        for (const auto& e : fs::recursive_directory_iterator(ctx.path("cka/epsilon_sweep")))
            if (e.is_regular_file()) ctx.add(e.path());
        std::sort(ctx.files.begin(), ctx.files.end());
    }
    write_manifest(ctx, fingerprint(ctx.dataset()));
}

void cmd_probe(Context& ctx, const std::string& checkpoint) {
    const std::string path = default_checkpoint(ctx, checkpoint);
    ModelBundle model = load_model(path);
    SplitResult s = config_splits(ctx);
    const auto& a = ctx.config.analysis;
    std::vector<std::size_t> layers = a.probe_layers;
    if (layers.empty())
        for (std::size_t l = 0; l <= model.config.layer_count(); ++l) layers.push_back(l);
    ProbeConfig pc;
    pc.epochs = a.probe_epochs;
    pc.optimizer.lr = a.probe_lr;
    pc.batch_size = a.probe_batch_size;
    pc.seed = derive_seed(ctx.config.seed, 41);
    const fs::path csv = ctx.path("probes.csv");
    fs::remove(csv);
    const std::string id = run_id(ctx.config);
    for (std::size_t layer : layers) {
        try {
            ProbeResult r = linear_probe(model, s.finetune, s.test, layer, pc);
            append_probe_csv(csv, id, r);
            *ctx.out << "layer " << layer << " (" << r.layer.label << "): train " << fixed(r.train_accuracy, 4)
                     << " test " << fixed(r.test_accuracy, 4) << "\n";
        } catch (const NumericError& e) {
            // Constant activations carry no decodable information; recorded as NA.
            std::ofstream row(csv, std::ios::app);
            if (fs::file_size(csv) == 0) row << "model_id,layer_ordinal,layer,train_acc,test_acc,n_samples\n";
            row << id << ',' << layer << ",layer" << layer << ",NA,NA," << s.test.size() << '\n';
            *ctx.out << "layer " << layer << ": " << e.what() << "\n";
        }
    }
    ctx.add(std::string("probes.csv"));
    write_manifest(ctx, fingerprint(ctx.dataset()));
}

void cmd_sweep(Context& ctx) {
    const auto& cfg = ctx.config;
    const Dataset& d = ctx.dataset();
    SweepConfig sc;
    sc.base = cfg.run;
    sc.scenarios = cfg.sweep.scenarios;
    sc.schemes = cfg.sweep.schemes;
    sc.attacks = evaluation_attacks(cfg);
    sc.seeds = cfg.sweep.seeds;
    sc.eval_batch_size = cfg.evaluation.batch_size;
    sc.record_runtime = cfg.sweep.record_runtime;
    sc.keep_models = cfg.analysis.cka;
    SweepResult result = scenario_sweep(d, sc, ctx.out_dir);
    for (const auto& f : result.files) ctx.add(f);
    for (const auto& c : result.cells) {
        *ctx.out << to_string(c.scenario) << " " << to_string(c.scheme) << " seed " << c.seed << ": ";
        if (c.report) *ctx.out << "clean " << fixed(c.report->clean_accuracy, 4) << "\n";
        else *ctx.out << "failed (" << c.error << ")\n";
    }

    if (cfg.analysis.cka) {
        const AttackSpec attack = analysis_attack(cfg);
        std::vector<CkaSummaryRow> summary;
        for (std::size_t si = 0; si < sc.seeds.size(); ++si) {
            const std::uint64_t seed = sc.seeds[si];
            const bool render = si == 0;  // images for the first seed only
            const Dataset sample = analysis_sample(result.test_sets[si], cfg.analysis.n_samples, derive_seed(seed, 31));
            std::ostringstream curves;
            curves << "scenario,scheme,layer_ordinal,layer,cka\n";
            for (const auto& c : result.cells) {
                if (c.seed != seed || !c.model) continue;
                const std::string subject = to_string(c.scenario) + "/" + to_string(c.scheme);
                CKAMatrix m = cka_heatmap(*c.model, sample, attack, subject);
                CkaCurve curve = diagonal(m);
                emit_curve_rows(curves, to_string(c.scenario) + "," + to_string(c.scheme) + ",", curve);
                summary.push_back({seed, "divergence_final", subject, final_value(curve)});
                if (render)
                    emit_heatmap(ctx, m,
                                 "cka/clean_adv_" + safe(to_string(c.scenario)) + "_" + safe(to_string(c.scheme)) +
                                     "_seed" + std::to_string(seed),
                                 subject + " clean-adv");
            }
            const std::string curves_name = "cka/divergence_seed" + std::to_string(seed) + ".csv";
            write_file(ctx.path(curves_name), curves.str());
            ctx.add(curves_name);

            for (Scenario scenario : sc.scenarios) {
                for (std::size_t i = 0; i < sc.schemes.size(); ++i) {
                    for (std::size_t j = i + 1; j < sc.schemes.size(); ++j) {
                        const SweepCell* a = result.find(scenario, sc.schemes[i], seed);
                        const SweepCell* b = result.find(scenario, sc.schemes[j], seed);
                        if (!a || !b || !a->model || !b->model) continue;
                        const std::string ia = to_string(scenario) + "/" + to_string(sc.schemes[i]);
                        const std::string ib = to_string(scenario) + "/" + to_string(sc.schemes[j]);
                        const std::string pair = to_string(scenario) + "/" + to_string(sc.schemes[i]) + "~" +
                                                 to_string(sc.schemes[j]);
                        const std::string stem = "cka/cross_" + safe(to_string(scenario)) + "_" +
                                                 safe(to_string(sc.schemes[i])) + "_vs_" +
                                                 safe(to_string(sc.schemes[j])) + "_seed" + std::to_string(seed);
                        CKAMatrix adv = cross_model_cka(*a->model, *b->model, sample, attack, ia, ib);
                        CKAMatrix clean = cross_model_cka(*a->model, *b->model, sample, std::nullopt, ia, ib);
                        summary.push_back({seed, "cross_upper_third", pair, upper_third_mean(adv)});
                        summary.push_back({seed, "cross_upper_third_clean", pair, upper_third_mean(clean)});
                        if (render) {
                            emit_heatmap(ctx, adv, stem + "_adv", ia + " vs " + ib + " adv-adv");
                            emit_heatmap(ctx, clean, stem + "_clean", ia + " vs " + ib + " clean");
                        }
                    }
                }
            }

            // Training-epsilon sweep of the CL family, sharing pretraining with the grid.
            const bool has_cl = std::find(sc.schemes.begin(), sc.schemes.end(), Scheme::CL) != sc.schemes.end();
            if (!cfg.analysis.epsilon_sweep.empty() && has_cl) {
                ScenarioSpec family = cfg.run;
                family.seed = seed;
                family.scenario = Scenario::AT;
                family.loss.scheme = Scheme::CL;
                auto entries = epsilon_sweep(family, d, cfg.analysis.epsilon_sweep, attack, cfg.analysis.n_samples,
                                             std::nullopt, &result.caches[si]);
                for (const auto& e : entries)
                    summary.push_back({seed, "epsilon_sweep", "CL@" + fmt(e.train_epsilon), final_value(e.curve)});
            }
        }
        write_cka_summary(summary, ctx.path("cka_summary.csv"));
        ctx.add(std::string("cka_summary.csv"));
        for (const auto& r : summary)
            *ctx.out << "seed " << r.seed << " " << r.measure << " " << r.subject << ": "
                     << (r.value ? fixed(*r.value, 4) : std::string("NA")) << "\n";
    }
    write_manifest(ctx, fingerprint(d));
}

// ------------------------------------------------------------------ report

struct Aggregate {
    std::vector<double> clean;
    std::vector<double> robust;
    std::size_t na = 0;
};

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void cmd_report(Context& ctx) {
    const fs::path results_path = ctx.path("results.csv");
    if (!fs::exists(results_path)) throw ConfigError("report needs " + results_path.string() + " (run sweep first)");
    const auto rows = read_results_csv(results_path);
    std::vector<CkaSummaryRow> cka;
    if (fs::exists(ctx.path("cka_summary.csv"))) cka = read_cka_summary(ctx.path("cka_summary.csv"));
    const double eps = ctx.config.analysis.attack_epsilon;
    const auto outcomes = check_directional(rows, cka, eps);

    std::ostringstream md, html;
    md << "# Robust contrastive learning sweep\n\n";
    md << "Config hash `" << config_hash(ctx.config) << "`, " << rows.size() << " result rows.\n\n";
    html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Sweep report</title>\n<style>"
            "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}td,th{border:1px solid #ccc;"
            "padding:2px 6px;text-align:right}.pass{background:#2e7d32;color:#fff;padding:1px 6px}"
            ".fail{background:#c62828;color:#fff;padding:1px 6px}</style></head><body>\n";
    html << "<h1>Robust contrastive learning sweep</h1>\n<p>Config hash <code>" << config_hash(ctx.config)
         << "</code>, " << rows.size() << " result rows.</p>\n";

    // Directional checks.
    md << "## Directional checks (evaluation epsilon " << fixed(eps, 4) << ")\n\n";
    md << "| # | status | claim | per seed |\n|---|---|---|---|\n";
    html << "<h2>Directional checks (evaluation epsilon " << fixed(eps, 4) << ")</h2>\n<table><tr><th>#</th>"
            "<th>status</th><th>claim</th><th>per seed</th></tr>\n";
    for (const auto& o : outcomes) {
        std::string seeds_md, seeds_html;
        for (std::size_t i = 0; i < o.seeds.size(); ++i) {
            const std::string line = "seed " + std::to_string(o.seeds[i]) + " " + (o.seed_pass[i] ? "ok" : "no") +
                                     ": " + o.seed_detail[i];
            seeds_md += (i ? "<br>" : "") + line;
            seeds_html += (i ? "<br>" : "") + html_escape(line);
        }
        const std::string status = o.pass ? "PASS" : "FAIL";
        std::string claim_md;
        for (char ch : o.claim) claim_md += ch == '|' ? std::string("\\|") : std::string(1, ch);
        md << "| " << o.id << " | **" << status << "** | " << claim_md << " | " << seeds_md << " |\n";
        html << "<tr><td>" << o.id << "</td><td><span class=\"" << (o.pass ? "pass" : "fail") << "\">" << status
             << "</span></td><td style=\"text-align:left\">" << html_escape(o.claim)
             << "</td><td style=\"text-align:left\">" << seeds_html << "</td></tr>\n";
    }
    html << "</table>\n";
    md << "\nA claim passes when it holds for at least two thirds of the seeds.\n\n";

    // Mean accuracies per cell and attack.
    std::map<std::tuple<int, int, int, double, std::size_t>, Aggregate> agg;
    std::vector<std::tuple<int, int, int, double, std::size_t>> order;
    for (const auto& r : rows) {
        auto key = std::make_tuple(static_cast<int>(r.scheme), static_cast<int>(r.scenario),
                                   static_cast<int>(r.threat_model), r.epsilon, r.steps);
        if (!agg.count(key)) order.push_back(key);
        auto& a = agg[key];
        a.clean.push_back(r.clean_accuracy);
        if (r.robust_accuracy) a.robust.push_back(*r.robust_accuracy);
        else ++a.na;
    }
    std::sort(order.begin(), order.end());
    md << "## Accuracy (mean over seeds)\n\n| scheme | scenario | threat model | epsilon | steps | clean | robust |\n"
          "|---|---|---|---|---|---|---|\n";
    html << "<h2>Accuracy (mean over seeds)</h2>\n<table><tr><th>scheme</th><th>scenario</th><th>threat model</th>"
            "<th>epsilon</th><th>steps</th><th>clean</th><th>robust</th></tr>\n";
    for (const auto& key : order) {
        const auto& a = agg[key];
        const auto [scheme, scenario, tm, e, steps] = key;
        const std::string robust = a.robust.empty() ? "NA" : fixed(100.0 * mean(a.robust), 2);
        const std::string cells[7] = {to_string(static_cast<Scheme>(scheme)), to_string(static_cast<Scenario>(scenario)),
                                      to_string(static_cast<ThreatModel>(tm)), fixed(e, 4), std::to_string(steps),
                                      fixed(100.0 * mean(a.clean), 2), robust};
        md << "|";
        html << "<tr>";
        for (const auto& c : cells) {
            md << ' ' << c << " |";
            html << "<td>" << html_escape(c) << "</td>";
        }
        md << "\n";
        html << "</tr>\n";
    }
    html << "</table>\n";

    // Robust accuracy against epsilon, one chart per scheme and threat model.
    md << "\n## Robust accuracy against epsilon\n\n";
    html << "<h2>Robust accuracy against epsilon</h2>\n";
    std::set<std::pair<int, int>> charts;
    for (const auto& key : order) charts.insert({std::get<0>(key), std::get<2>(key)});
    for (const auto& [scheme, tm] : charts) {
        std::vector<Series> series;
        for (const auto& key : order) {
            if (std::get<0>(key) != scheme || std::get<2>(key) != tm) continue;
            const std::string name = to_string(static_cast<Scenario>(std::get<1>(key)));
            auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.name == name; });
            if (it == series.end()) {
                series.push_back({name, {}, {}});
                it = series.end() - 1;
            }
            const auto& a = agg[key];
            it->x.push_back(std::get<3>(key));
            it->y.push_back(a.robust.empty() ? std::nullopt : std::optional<double>(mean(a.robust)));
        }
        const std::string title = to_string(static_cast<Scheme>(scheme)) + ", Threat Model-" +
                                  to_string(static_cast<ThreatModel>(tm));
        const std::string svg = line_chart_svg(series, title, "epsilon", "robust accuracy");
        const std::string name = "report_assets/robust_" + safe(to_string(static_cast<Scheme>(scheme))) + "_tm" +
                                 to_string(static_cast<ThreatModel>(tm)) + ".svg";
        write_file(ctx.path(name), svg);
        ctx.add(name);
        md << "![" << title << "](" << name << ")\n\n";
        html << svg;
    }

    // CKA heatmaps written by the sweep.
    std::vector<std::string> heatmaps;
    if (fs::exists(ctx.path("cka")))
        for (const auto& e : fs::directory_iterator(ctx.path("cka")))
            if (e.is_regular_file() && e.path().extension() == ".svg")
                heatmaps.push_back(fs::relative(e.path(), ctx.out_dir).generic_string());
    std::sort(heatmaps.begin(), heatmaps.end());
    if (!heatmaps.empty()) {
        md << "## CKA heatmaps\n\n";
        html << "<h2>CKA heatmaps</h2>\n";
        for (const auto& h : heatmaps) {
            md << "![" << h << "](" << h << ")\n\n";
            html << "<div>" << read_file(ctx.path(h)) << "</div>\n";
        }
    }
    if (!cka.empty()) {
        md << "## CKA summaries\n\n| seed | measure | subject | value |\n|---|---|---|---|\n";
        html << "<h2>CKA summaries</h2>\n<table><tr><th>seed</th><th>measure</th><th>subject</th><th>value</th></tr>\n";
        for (const auto& r : cka) {
            const std::string v = r.value ? fixed(*r.value, 4) : "NA";
            md << "| " << r.seed << " | " << r.measure << " | " << r.subject << " | " << v << " |\n";
            html << "<tr><td>" << r.seed << "</td><td>" << r.measure << "</td><td>" << html_escape(r.subject)
                 << "</td><td>" << v << "</td></tr>\n";
        }
        html << "</table>\n";
    }
    html << "</body></html>\n";
    write_file(ctx.path("report.md"), md.str());
    write_file(ctx.path("report.html"), html.str());
    ctx.add(std::string("report.md"));
    ctx.add(std::string("report.html"));
    for (const auto& o : outcomes) *ctx.out << "criterion " << o.id << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
    write_manifest(ctx, std::nullopt);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust contrastive learning laboratory", "rcl"};
    app.require_subcommand(1);
    CommonArgs common;
    std::string checkpoint, other;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config_path, "experiment config file");
        sub->add_option("--from-manifest", common.manifest_path, "rerun with the config embedded in a manifest");
        sub->add_option("--set", common.overrides, "override one key: section.key=value")->take_all();
    };
    auto* gen = app.add_subcommand("gen-data", "write the configured dataset to files");
    auto* train = app.add_subcommand("train", "run one training scenario");
    auto* eval = app.add_subcommand("evaluate", "clean and robust accuracy of a checkpoint");
    auto* cka = app.add_subcommand("cka", "CKA heatmaps, divergence curves and epsilon sweeps");
    auto* probe = app.add_subcommand("probe", "per-layer linear probes of a checkpoint");
    auto* sweep = app.add_subcommand("sweep", "scenario x scheme x seed grid with CKA summaries");
    auto* report = app.add_subcommand("report", "Markdown and HTML summary of a sweep");
    for (auto* sub : {gen, train, eval, cka, probe, sweep, report}) add_common(sub);
    for (auto* sub : {eval, cka, probe})
        sub->add_option("--checkpoint", checkpoint, "model checkpoint (default <output_dir>/model.rrlb)");
    cka->add_option("--other", other, "second checkpoint for cross-model CKA");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    CLI::App* chosen = app.get_subcommands().front();
    const std::string command = chosen->get_name();
    try {
        Context ctx = make_context(command, common, out);
        if (command == "gen-data") cmd_gen_data(ctx);
        else if (command == "train") cmd_train(ctx);
        else if (command == "evaluate") cmd_evaluate(ctx, checkpoint);
        else if (command == "cka") cmd_cka(ctx, checkpoint, other);
        else if (command == "probe") cmd_probe(ctx, checkpoint);
        else if (command == "sweep") cmd_sweep(ctx);
        else if (command == "report") cmd_report(ctx);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "rcl " << command << ": invalid: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        err << "rcl " << command << ": failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace rcl
