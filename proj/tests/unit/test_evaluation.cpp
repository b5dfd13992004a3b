#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "rcl/error.hpp"
#include "rcl/evaluation.hpp"
#include "rcl/rng.hpp"

using namespace rcl;

namespace {

ScenarioSpec quick(Scheme scheme) {
    ScenarioSpec s;
    s.loss.scheme = scheme;
    s.encoder.widths = {16, 12, 8};
    s.pretrain_epochs = 3;
    s.finetune_epochs = 3;
    s.batch_size = 64;
    s.adv_batch_size = 64;
    s.pretrain_optimizer.lr = 3e-3;
    s.finetune_optimizer.lr = 3e-3;
    s.augment.gaussian_noise_sigma = 0.5;
    s.train_attack.epsilon = 0.5;
    s.split = {0.6, 0.0, 0.4};
    s.seed = 3;
    return s;
}

std::vector<EvalAttack> attacks(std::vector<double> eps, ThreatModel tm = ThreatModel::I, std::size_t steps = 10) {
    std::vector<EvalAttack> out;
    for (double e : eps) {
        EvalAttack a;
        a.threat_model = tm;
        a.spec.epsilon = e;
        a.spec.steps = steps;
        a.spec.seed = 12;
        out.push_back(a);
    }
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("untrained model on label-independent data is at chance") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 2000, 20, 2, 5, 8.0);
    Rng rng(1);
    for (auto& y : d.labels) y = static_cast<int>(rng.below(2));
    EncoderConfig enc;
    enc.widths = {8, 8};
    enc.input_shape = {20};
    ModelBundle m = init_model(enc, 2, 4, 9);
    EvalReport r = evaluate(m, d, {}, Scheme::SL);
    CHECK(std::abs(r.clean_accuracy - 0.5) <= 3 * std::sqrt(0.25 / 2000.0));
    CHECK(r.n_test == 2000);
}

TEST_CASE("epsilon zero equals clean accuracy; evaluation is deterministic and monotone") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 500, 20, 2, 5, 4.0);
    RunRecord run = run_scenario(d, quick(Scheme::SL));
    auto atk = attacks({0.0, 0.5, 1.0, 2.0, 4.0});
    EvalReport a = evaluate(run.model, run.splits.test, atk, Scheme::SL);
    EvalReport b = evaluate(run.model, run.splits.test, atk, Scheme::SL);
    REQUIRE(a.robust.size() == 5);
    CHECK(*a.robust[0].accuracy == a.clean_accuracy);
    for (std::size_t i = 0; i < 5; ++i) CHECK(*a.robust[i].accuracy == *b.robust[i].accuracy);
    for (std::size_t i = 1; i < 5; ++i) CHECK(*a.robust[i].accuracy <= *a.robust[i - 1].accuracy + 0.01);
    CHECK(*a.robust[4].accuracy < a.clean_accuracy);
    for (const auto& r : a.robust) CHECK((*r.accuracy >= 0.0 && *r.accuracy <= 1.0));
    CHECK(a.find(ThreatModel::I, 1.0, 10) == &a.robust[2]);
}

TEST_CASE("Threat Model-II never queries the classifier and does not apply to SL") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 300, 20, 2, 5, 4.0);
    for (Scheme scheme : {Scheme::CL, Scheme::SCL, Scheme::SL}) {
        RunRecord run = run_scenario(d, quick(scheme));
        EvalReport r = evaluate(run.model, run.splits.test, attacks({0.5}, ThreatModel::II), scheme);
        INFO(to_string(scheme));
        if (scheme == Scheme::SL) {
            CHECK_FALSE(r.robust[0].accuracy.has_value());
            CHECK(r.threat_model_ii_audit.gradient_queries == 0);
        } else {
            CHECK(r.robust[0].accuracy.has_value());
            CHECK(r.threat_model_ii_audit.gradient_queries > 0);
            CHECK(r.threat_model_ii_audit.classifier_queries == 0);
            CHECK(*r.robust[0].driving_loss == *threat_model_ii_loss(scheme));
        }
    }
    CHECK(*threat_model_ii_loss(Scheme::SL_CL) == DrivingLoss::CL);
    CHECK(*threat_model_ii_loss(Scheme::SL_SCL) == DrivingLoss::SCL);
}

TEST_CASE("sweeps write one row per scenario, scheme and attack, and survive failing cells") {
    Dataset d = gen_synthetic(SyntheticKind::two_gaussians, 240, 20, 2, 5, 4.0);
    SweepConfig cfg;
    cfg.base = quick(Scheme::CL);
    cfg.base.pretrain_epochs = 1;
    cfg.base.finetune_epochs = 1;
    cfg.scenarios = {Scenario::ST, Scenario::AT, Scenario::PartialAT, Scenario::FullAT};
    cfg.schemes = {Scheme::CL, Scheme::SL_CL};
    cfg.attacks = attacks({0.5});
    auto dir = std::filesystem::temp_directory_path() / "rcl_sweep";
    std::filesystem::remove_all(dir);
    SweepResult r = scenario_sweep(d, cfg, dir);
    CHECK(r.cells.size() == 8);
    std::size_t failed = 0;
    for (const auto& c : r.cells) failed += !c.error.empty();
    CHECK(failed == 3);  // SL+CL is defined under ST only

    std::istringstream csv(read_file(dir / "results.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "scenario,scheme,threat_model,epsilon,steps,clean_acc,robust_acc,seed,runtime_s");
    std::size_t cl_rows = 0, rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        cl_rows += line.find(",CL,") != std::string::npos;
        CHECK(line.substr(line.size() - 3) == ",NA");
    }
    CHECK(cl_rows == 4);
    CHECK(rows == 5);
    CHECK(std::filesystem::exists(dir / "failures.csv"));
    CHECK(std::filesystem::exists(dir / "curves" / "curve_Full-AT_CL_tmI_10steps_seed0.csv"));

    auto dir2 = std::filesystem::temp_directory_path() / "rcl_sweep2";
    std::filesystem::remove_all(dir2);
    scenario_sweep(d, cfg, dir2);
    CHECK(read_file(dir / "results.csv") == read_file(dir2 / "results.csv"));
    cfg.scenarios.clear();
    CHECK_THROWS_AS(scenario_sweep(d, cfg), ConfigError);
}
