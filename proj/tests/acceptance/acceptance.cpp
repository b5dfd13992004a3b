// Acceptance run: one PASS/FAIL line per criterion. Criteria 1 to 5 are
// exact property suites; 6 to 10 are directional checks over a three-seed
// sweep on the digits fixture; 11 reruns that sweep from its manifest.
//
// Usage: acceptance [criterion ...]   (default: all of 1..11)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rcl/analysis.hpp"
#include "rcl/attacks.hpp"
#include "rcl/checkpoint.hpp"
#include "rcl/cli.hpp"
#include "rcl/error.hpp"
#include "rcl/evaluation.hpp"
#include "rcl/gradcheck.hpp"
#include "rcl/losses.hpp"
#include "rcl/ops.hpp"
#include "rcl/report.hpp"
#include "rcl/rng.hpp"
#include "rcl/training.hpp"

using namespace rcl;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = RCL_SOURCE_DIR;
const fs::path kWork = fs::path(RCL_BINARY_DIR) / "acceptance_work";

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 3) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, d});
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

Tensor unit_rows(std::size_t n, std::size_t d, Rng& rng) {
    Tensor t({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) {
            t.at(r, c) = rng.normal();
            s += t.at(r, c) * t.at(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) t.at(r, c) /= std::sqrt(s);
    }
    return t;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int cli(std::vector<std::string> args, const fs::path& out_dir, std::ostream& log) {
    ::setenv(kOutputDirEnv, out_dir.c_str(), 1);
    args.insert(args.begin(), "rcl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), log, log);
    ::unsetenv(kOutputDirEnv);
    return rc;
}

// ------------------------------------------------------------ criterion 1

enum class LossKind { nt_xent, supcon, ce };

// Loss of a batch through encoder + head (contrastive) or encoder +
// classifier (CE); `x` is the first view, `x2` the fixed second view.
Var network_loss(const BoundModel& bm, Var x, const Tensor& x2, const std::vector<int>& y, LossKind kind) {
    Tape& t = bm.tape();
    switch (kind) {
        case LossKind::nt_xent: return nt_xent(embed(bm, x), embed(bm, t.constant(x2)), 0.5);
        case LossKind::supcon: return supcon(embed(bm, x), y, 0.2);
        case LossKind::ce: return cross_entropy(bm.classify(bm.encode(x)), y);
    }
    throw ConfigError("unknown loss");
}

Outcome criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    const double h = 1e-6;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(derive_seed(2024, s));
        EncoderConfig cfg;
        cfg.input_shape = {3 + rng.below(3)};
        cfg.widths = {3 + rng.below(4), 3 + rng.below(4)};
        ModelBundle model = init_model(cfg, 3, 3, derive_seed(2025, s));
        const std::size_t n = 4;
        const Tensor x = random_tensor({n, cfg.input_shape[0]}, rng);
        const Tensor x2 = random_tensor({n, cfg.input_shape[0]}, rng);
        std::vector<int> y{0, 1, 0, 1};
        const LossKind kind = static_cast<LossKind>(s % 3);

        // Gradient with respect to the input.
        ScalarFn fx = [&](Tape& t, Var v) {
            BoundModel bm(model, t, PartMask{});
            return network_loss(bm, v, x2, y, kind);
        };
        worst = std::max(worst, finite_diff_check(fx, x, h));

        // Gradient with respect to the first encoder weight and the head or
        // classifier weight, against central differences on the bundle.
        Tape tape;
        BoundModel bm(model, tape, PartMask{true, true, true});
        Gradients g = tape.backward(network_loss(bm, tape.constant(x), x2, y, kind));
        auto value_at = [&](const ModelBundle& m) {
            Tape t;
            BoundModel b(m, t, PartMask{});
            return network_loss(b, t.constant(x), x2, y, kind).value()[0];
        };
        const bool contrastive = kind != LossKind::ce;
        std::vector<std::pair<std::vector<Tensor> ModelBundle::*, Var>> targets = {
            {&ModelBundle::encoder, bm.encoder_params()[0]},
            {contrastive ? &ModelBundle::head : &ModelBundle::classifier,
             contrastive ? bm.head_params()[0] : bm.classifier_params()[0]}};
        for (const auto& [part, var] : targets) {
            const Tensor& auto_grad = g.at(var.id());
            for (std::size_t i = 0; i < auto_grad.size(); ++i) {
                ModelBundle plus = model, minus = model;
                (plus.*part)[0][i] += h;
                (minus.*part)[0][i] -= h;
                const double fd = (value_at(plus) - value_at(minus)) / (2 * h);
                worst = std::max(worst, std::abs(auto_grad[i] - fd) / std::max(1.0, std::abs(fd)));
            }
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {worst < 1e-4 && secs < 60.0, "max relative error " + num(worst) + " over 100 networks, " +
                                             num(secs, 2) + " s"};
}

// ------------------------------------------------------------ criterion 2

double dot(const Tensor& z, std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += z.at(i, c) * z.at(j, c);
    return s;
}

double nt_xent_brute(const Tensor& a, const Tensor& b, double tau) {
    const std::size_t n = a.rows();
    auto row = [&](std::size_t i) { return i < n ? std::pair{&a, i} : std::pair{&b, i - n}; };
    auto sim = [&](std::size_t i, std::size_t k) {
        auto [zi, ri] = row(i);
        auto [zk, rk] = row(k);
        double s = 0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += zi->at(ri, c) * zk->at(rk, c);
        return s / tau;
    };
    double total = 0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
        double denom = 0;
        for (std::size_t k = 0; k < 2 * n; ++k)
            if (k != i) denom += std::exp(sim(i, k));
        total -= sim(i, (i + n) % (2 * n)) - std::log(denom);
    }
    return total / static_cast<double>(2 * n);
}

double supcon_brute(const Tensor& z, const std::vector<int>& y, double tau) {
    double total = 0;
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double denom = 0;
        for (std::size_t a = 0; a < z.rows(); ++a)
            if (a != i) denom += std::exp(dot(z, i, a) / tau);
        double acc = 0;
        std::size_t pos = 0;
        for (std::size_t p = 0; p < z.rows(); ++p)
            if (p != i && y[p] == y[i]) {
                acc += std::log(std::exp(dot(z, i, p) / tau) / denom);
                ++pos;
            }
        if (pos == 0) continue;
        total += -acc / static_cast<double>(pos);
        ++anchors;
    }
    return total / static_cast<double>(anchors);
}

Outcome criterion_2() {
    double worst_nt = 0, worst_sc = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        Rng rng(derive_seed(31337, s));
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 2 + rng.below(6);
        const double tau = rng.uniform(0.05, 1.0);
        Tensor a = unit_rows(n, d, rng), b = unit_rows(n, d, rng);
        worst_nt = std::max(worst_nt, std::abs(nt_xent(a, b, tau) - nt_xent_brute(a, b, tau)));
        const std::size_t m = std::max<std::size_t>(n, 2);
        Tensor z = unit_rows(m, d, rng);
        std::vector<int> y(m);
        for (auto& v : y) v = static_cast<int>(rng.below(3));
        y[m - 1] = y[0];
        worst_sc = std::max(worst_sc, std::abs(supcon(z, y, tau) - supcon_brute(z, y, tau)));
    }
    Rng rng(1);
    const double single = nt_xent(unit_rows(1, 4, rng), unit_rows(1, 4, rng), 0.5);
    const Tensor same = Tensor::matrix({{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
    const double four = supcon(same, std::vector<int>{3, 3, 3, 3}, 0.1);
    double ce_worst = 0.0;
    for (std::size_t c : {2, 5, 10}) {
        std::vector<int> y(4, static_cast<int>(c - 1));
        Tensor logits = Tensor::full({4, c}, 1.7);
        ce_worst = std::max(ce_worst, std::abs(cross_entropy(logits, y) - std::log(static_cast<double>(c))));
    }
    const bool pass = worst_nt < 1e-10 && worst_sc < 1e-10 && std::abs(single) < 1e-12 &&
                      std::abs(four - std::log(3.0)) < 1e-9 && ce_worst < 1e-12;
    return {pass, "brute force nt_xent " + num(worst_nt) + ", supcon " + num(worst_sc) + "; n=1 NT-Xent " +
                      num(single) + "; SupCon identical " + num(four - std::log(3.0)) + " from ln 3; CE " +
                      num(ce_worst) + " from ln C"};
}

// ------------------------------------------------------------ criterion 3

ScenarioSpec small_spec(Scheme scheme, Scenario scenario) {
    ScenarioSpec spec;
    spec.scenario = scenario;
    spec.loss.scheme = scheme;
    spec.encoder.widths = {16, 16, 8};
    spec.encoder.input_shape = {20};
    spec.head_dim = 8;
    spec.pretrain_epochs = 8;
    spec.finetune_epochs = 5;
    spec.batch_size = 64;
    spec.adv_batch_size = 64;
    spec.pretrain_optimizer.lr = 3e-3;
    spec.finetune_optimizer.lr = 1e-2;
    spec.augment.gaussian_noise_sigma = 0.3;
    spec.train_attack.epsilon = 0.25;
    spec.split = {0.5, 0.0, 0.5};
    return spec;
}

Outcome criterion_3() {
    std::vector<std::string> notes;
    bool pass = true;

    // Budget and clamp on 1000 random attacks with arbitrary gradients.
    double worst_excess = 0.0, worst_clamp = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        Rng rng(derive_seed(99, s));
        const bool clamp = rng.bernoulli(0.5);
        Tensor x0 = clamp ? random_tensor({3, 5}, rng, 0.0, 1.0) : random_tensor({3, 5}, rng, -3.0, 3.0);
        AttackSpec spec;
        spec.epsilon = rng.uniform(0.0, 0.5);
        spec.steps = 1 + rng.below(10);
        spec.step_size = rng.uniform(0.01, 0.5);
        spec.random_start = rng.bernoulli(0.5);
        spec.seed = s;
        if (clamp) spec.clamp = ClampRange{0.0, 1.0};
        Rng grads(derive_seed(100, s));
        LossGradientFn f = [&](const Tensor& x) { return std::pair{0.0, random_tensor(x.shape(), grads)}; };
        Tensor adv = pgd_linf(x0, f, spec);
        for (std::size_t i = 0; i < adv.size(); ++i) {
            worst_excess = std::max(worst_excess, std::abs(adv[i] - x0[i]) - spec.epsilon);
            if (clamp) worst_clamp = std::max({worst_clamp, -adv[i], adv[i] - 1.0});
        }
    }
    if (!(worst_excess <= 1e-9 && worst_clamp <= 0.0)) pass = false;
    notes.push_back("budget excess " + num(worst_excess) + ", clamp excess " + num(worst_clamp));

    // Projection idempotence.
    std::size_t idem_fail = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        Rng rng(derive_seed(101, s));
        Tensor x0 = random_tensor({2, 4}, rng, 0.0, 1.0), x = random_tensor({2, 4}, rng, -1.0, 2.0);
        const double eps = rng.uniform(0.0, 0.4);
        std::optional<ClampRange> c = rng.bernoulli(0.5) ? std::optional<ClampRange>(ClampRange{}) : std::nullopt;
        Tensor p = project_linf(x0, x, eps, c);
        Tensor pp = project_linf(x0, p, eps, c);
        idem_fail += p.values() != pp.values();
    }
    if (idem_fail) pass = false;
    notes.push_back(std::to_string(idem_fail) + " projection idempotence failures");

    // Zero-gradient fixed point.
    {
        Rng rng(5);
        Tensor x0 = random_tensor({4, 6}, rng);
        AttackSpec spec;
        spec.steps = 10;
        LossGradientFn zero = [](const Tensor& x) { return std::pair{0.0, Tensor::zeros(x.shape())}; };
        const bool fixed = pgd_linf(x0, zero, spec).values() == x0.values();
        if (!fixed) pass = false;
        notes.push_back(std::string("zero gradient fixed point ") + (fixed ? "holds" : "broken"));
    }

    // Epsilon zero identity and loss increase against standard-trained models.
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 800, 20, 2, 3, 3.0);
    for (Scheme scheme : {Scheme::SL, Scheme::CL, Scheme::SCL}) {
        RunRecord run = run_scenario(d, small_spec(scheme, Scenario::ST));
        const Dataset& test = run.splits.test;
        const DrivingLoss driving = scheme == Scheme::SL   ? DrivingLoss::CE
                                    : scheme == Scheme::CL ? DrivingLoss::CL
                                                           : DrivingLoss::SCL;
        std::size_t rises = 0, identity_fail = 0;
        for (std::size_t k = 0; k < 50; ++k) {
            Rng rng(derive_seed(7, k));
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < 8; ++i) idx.push_back(rng.below(test.size()));
            ViewBatch b;
            b.x = test.inputs.gather_rows(idx);
            std::vector<int> y;
            for (auto i : idx) y.push_back(test.labels[i]);
            b.y = y;
            AttackSpec attack = evaluation_attack_defaults();
            attack.epsilon = 0.25;
            attack.driving_loss = driving;
            attack.seed = derive_seed(8, k);
            Tensor adv = pgd(run.model, b, attack);
            rises += driving_loss_value(run.model, b, adv, driving) > driving_loss_value(run.model, b, b.x, driving);
            attack.epsilon = 0.0;
            identity_fail += pgd(run.model, b, attack).values() != b.x.values();
        }
        if (rises < 48 || identity_fail) pass = false;
        notes.push_back(to_string(driving) + " loss rises on " + std::to_string(rises) + "/50, eps=0 identity " +
                        (identity_fail ? "broken" : "holds"));
    }
    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {pass, detail};
}

// ------------------------------------------------------------ criterion 4

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
    return out;
}

Tensor orthogonal(std::size_t d, std::uint64_t seed) {
    Tensor q = gaussian(d, d, seed);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double p = 0;
            for (std::size_t i = 0; i < d; ++i) p += q.at(i, j) * q.at(i, k);
            for (std::size_t i = 0; i < d; ++i) q.at(i, j) -= p * q.at(i, k);
        }
        double s = 0;
        for (std::size_t i = 0; i < d; ++i) s += q.at(i, j) * q.at(i, j);
        for (std::size_t i = 0; i < d; ++i) q.at(i, j) /= std::sqrt(s);
    }
    return q;
}

Outcome criterion_4() {
    double self = 0, sym = 0, orth = 0, scale = 0, perm = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(derive_seed(404, s));
        const std::size_t n = 5 + rng.below(60), dx = 1 + rng.below(12), dy = 1 + rng.below(12);
        Tensor x = gaussian(n, dx, derive_seed(405, s)), y = gaussian(n, dy, derive_seed(406, s));
        for (std::size_t i = 0; i < n; ++i) y.at(i, 0) += x.at(i, 0);
        const double base = linear_cka(x, y);
        self = std::max(self, std::abs(linear_cka(x, x) - 1.0));
        sym = std::max(sym, std::abs(base - linear_cka(y, x)));
        orth = std::max(orth, std::abs(linear_cka(matmul(x, orthogonal(dx, derive_seed(407, s))), y) - base));
        Tensor scaled = x;
        const double c = rng.uniform(0.01, 100.0);
        for (auto& v : scaled.values()) v *= c;
        scale = std::max(scale, std::abs(linear_cka(scaled, y) - base));
        auto p = rng.permutation(n);
        perm = std::max(perm, std::abs(linear_cka(x.gather_rows(p), y.gather_rows(p)) - base));
    }
    const double indep = linear_cka(gaussian(200, 10, 100), gaussian(200, 10, 200));
    const bool pass = self < 1e-9 && sym < 1e-12 && orth < 1e-9 && scale < 1e-9 && perm < 1e-12 && indep < 0.2;
    return {pass, "self " + num(self) + ", symmetry " + num(sym) + ", orthogonal " + num(orth) + ", scale " +
                      num(scale) + ", permutation " + num(perm) + ", independent gaussians " + num(indep, 4)};
}

// ------------------------------------------------------------ criterion 5

Outcome criterion_5() {
    bool pass = true;
    std::vector<std::string> notes;
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 400, 20, 2, 9, 3.0);
    const fs::path dir = kWork / "contracts";
    fs::remove_all(dir);
    for (Scenario sc : {Scenario::ST, Scenario::AT, Scenario::PartialAT, Scenario::FullAT}) {
        for (Scheme scheme : {Scheme::CL, Scheme::SCL}) {
            ScenarioSpec spec = small_spec(scheme, sc);
            spec.pretrain_epochs = 3;
            spec.finetune_epochs = 3;
            const fs::path out = dir / (to_string(sc) + "_" + to_string(scheme));
            run_scenario(d, spec, RunOptions{out});
            const ModelBundle before = load_checkpoint(out / "pretrain.rrlb");
            const ModelBundle after = load_checkpoint(out / "model.rrlb");
            const bool same = bitwise_equal(before.encoder, after.encoder);
            const bool ok = sc == Scenario::FullAT ? !same : same;
            if (!ok) pass = false;
            notes.push_back(to_string(sc) + "/" + to_string(scheme) + (same ? " fixed" : " changed"));
        }
    }

    // Threat Model-II never queries the classifier.
    {
        RunRecord run = run_scenario(d, small_spec(Scheme::CL, Scenario::AT));
        EvalAttack tm2{ThreatModel::II, threat_model_ii_defaults()};
        tm2.spec.epsilon = 0.25;
        EvalReport r = evaluate(run.model, run.splits.test, {tm2}, Scheme::CL, Scenario::AT);
        const bool ok = r.threat_model_ii_audit.classifier_queries == 0 && r.threat_model_ii_audit.gradient_queries > 0;
        if (!ok) pass = false;
        notes.push_back("Threat Model-II: " + std::to_string(r.threat_model_ii_audit.gradient_queries) +
                        " gradient queries, " + std::to_string(r.threat_model_ii_audit.classifier_queries) +
                        " on the classifier");
    }

    // CLI reruns from manifests reproduce CSV bytes.
    {
        std::ostringstream log;
        const fs::path cfg = kSource / "configs" / "two_gaussians.cfg";
        const std::vector<std::string> quick{"--set", "loss.scheme=CL", "--set", "scenario.scenario=AT",
                                             "--set", "scenario.pretrain_epochs=3", "--set",
                                             "scenario.finetune_epochs=3"};
        auto with = [&](std::vector<std::string> head) {
            head.insert(head.end(), quick.begin(), quick.end());
            return head;
        };
        const fs::path a = dir / "cli_a", b = dir / "cli_b";
        int rc = cli(with({"train", "-c", cfg.string()}), a, log);
        rc |= cli(with({"evaluate", "-c", cfg.string()}), a, log);
        rc |= cli(with({"probe", "-c", cfg.string(), "--set", "analysis.probe_epochs=3"}), a, log);
        rc |= cli({"train", "--from-manifest", (a / "train_manifest.json").string()}, b, log);
        rc |= cli({"evaluate", "--from-manifest", (a / "evaluate_manifest.json").string(), "--checkpoint",
                   (b / "model.rrlb").string()},
                  b, log);
        rc |= cli({"probe", "--from-manifest", (a / "probe_manifest.json").string(), "--checkpoint",
                   (b / "model.rrlb").string()},
                  b, log);
        std::size_t identical = 0, compared = 0;
        for (const char* f : {"loss.csv", "eval.csv", "probes.csv"}) {
            ++compared;
            identical += fs::exists(a / f) && read_bytes(a / f) == read_bytes(b / f);
        }
        if (rc != 0 || identical != compared) pass = false;
        notes.push_back("manifest reruns: " + std::to_string(identical) + "/" + std::to_string(compared) +
                        " CSVs byte-identical" + (rc ? " (a command failed: " + log.str() + ")" : ""));
    }
    std::string detail;
    for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
    return {pass, detail};
}

// ------------------------------------------------------- criteria 6 to 11

const fs::path kSweepA = kWork / "digits_sweep";
const fs::path kSweepB = kWork / "digits_sweep_rerun";

struct SweepRun {
    bool attempted = false;
    int rc = -1;
    double seconds = 0.0;
    std::string log;
};

SweepRun& sweep_run() {
    static SweepRun run;
    if (!run.attempted) {
        run.attempted = true;
        fs::remove_all(kSweepA);
        std::ostringstream log;
        const auto start = std::chrono::steady_clock::now();
        run.rc = cli({"sweep", "-c", (kSource / "configs" / "digits_acceptance.cfg").string()}, kSweepA, log);
        if (run.rc == 0) run.rc = cli({"report", "--from-manifest", (kSweepA / "sweep_manifest.json").string()},
                                      kSweepA, log);
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.log = log.str();
        std::cout << "  digits sweep finished in " << num(run.seconds, 4) << " s (exit " << run.rc << ")\n";
    }
    return run;
}

Outcome directional(int id) {
    const SweepRun& run = sweep_run();
    if (run.rc != 0) return {false, "sweep failed: " + run.log};
    const auto rows = read_results_csv(kSweepA / "results.csv");
    const auto cka = read_cka_summary(kSweepA / "cka_summary.csv");
    for (const auto& o : check_directional(rows, cka, 8.0 / 255.0)) {
        if (o.id != id) continue;
        std::string detail = o.claim + " [" + std::to_string(std::count(o.seed_pass.begin(), o.seed_pass.end(), true)) +
                             "/" + std::to_string(o.seeds.size()) + " seeds, need " + std::to_string(o.required) + "]";
        for (std::size_t i = 0; i < o.seeds.size(); ++i)
            detail += "\n    seed " + std::to_string(o.seeds[i]) + (o.seed_pass[i] ? " ok: " : " no: ") + o.seed_detail[i];
        return {o.pass, detail};
    }
    return {false, "no outcome computed"};
}

Outcome criterion_11() {
    const SweepRun& first = sweep_run();
    if (first.rc != 0) return {false, "first sweep failed"};
    fs::remove_all(kSweepB);
    std::ostringstream log;
    const auto start = std::chrono::steady_clock::now();
    const int rc = cli({"sweep", "--from-manifest", (kSweepA / "sweep_manifest.json").string()}, kSweepB, log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (rc != 0) return {false, "rerun failed: " + log.str()};
    const std::string a = read_bytes(kSweepA / "results.csv"), b = read_bytes(kSweepB / "results.csv");
    const std::string ca = read_bytes(kSweepA / "cka_summary.csv"), cb = read_bytes(kSweepB / "cka_summary.csv");
    return {!a.empty() && a == b, "results.csv " + std::to_string(a.size()) + " bytes, rerun " +
                                      (a == b ? "identical" : "differs") + "; cka_summary.csv " +
                                      (ca == cb ? "identical" : "differs") + "; rerun took " + num(secs, 4) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    if (wanted.empty())
        for (int i = 1; i <= 11; ++i) wanted.insert(i);
    fs::create_directories(kWork);

    const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
        {1, criterion_1},
        {2, criterion_2},
        {3, criterion_3},
        {4, criterion_4},
        {5, criterion_5},
        {6, [] { return directional(6); }},
        {7, [] { return directional(7); }},
        {8, [] { return directional(8); }},
        {9, [] { return directional(9); }},
        {10, [] { return directional(10); }},
        {11, criterion_11},
    };
    int failed = 0;
    for (const auto& [id, check] : criteria) {
        if (!wanted.count(id)) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
