#include "rcl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rcl/error.hpp"
#include "rcl/losses.hpp"
#include "rcl/ops.hpp"
#include "rcl/rng.hpp"

namespace rcl {

namespace {

// Column-centred copy as an (n, d) matrix.
Tensor centred(const Tensor& a) {
    Tensor c = a.flattened();
    const std::size_t n = c.rows(), d = c.cols();
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += c.at(i, j);
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) c.at(i, j) -= mean[j];
    return c;
}

// A^T B for (n, p) and (n, q) matrices.
std::vector<double> cross(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
    std::vector<double> out(p * q, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = &a.data()[i * p];
        const double* br = &b.data()[i * q];
        for (std::size_t r = 0; r < p; ++r) {
            const double av = ar[r];
            if (av == 0.0) continue;
            double* o = &out[r * q];
            for (std::size_t c = 0; c < q; ++c) o[c] += av * br[c];
        }
    }
    return out;
}

// A A^T for an (n, p) matrix.
std::vector<double> gram(const Tensor& a) {
    const std::size_t n = a.rows(), p = a.cols();
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < p; ++k) s += a.data()[i * p + k] * a.data()[j * p + k];
            out[i * n + j] = out[j * n + i] = s;
        }
    return out;
}

double sum_squares(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

bool is_constant(const Tensor& c, const Tensor& original) {
    double scale = 0.0, energy = 0.0;
    for (double v : original.values()) scale = std::max(scale, std::abs(v));
    for (double v : c.values()) energy = std::max(energy, std::abs(v));
    return energy <= 1e-12 * std::max(scale, 1e-300);
}

}  // namespace

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.rows() != y.rows()) {
        throw ShapeError("linear_cka: sample counts differ (" + std::to_string(x.rows()) + " vs " +
                         std::to_string(y.rows()) + ")");
    }
    if (x.rows() < 3) throw ShapeError("linear_cka needs at least 3 samples");
    const Tensor xc = centred(x), yc = centred(y);
    if (is_constant(xc, x) || is_constant(yc, y)) {
        throw NumericError("linear_cka: degenerate (constant) activations");
    }
    const double n = static_cast<double>(xc.rows());
    const double d1 = static_cast<double>(xc.cols()), d2 = static_cast<double>(yc.cols());
    double num, den;
    if (n * n * (d1 + d2) < n * (d1 * d2 + d1 * d1 + d2 * d2)) {
        // Sample-space form: <Kx, Ky> / (||Kx|| ||Ky||).
        const auto kx = gram(xc), ky = gram(yc);
        num = dot(kx, ky);
        den = std::sqrt(sum_squares(kx)) * std::sqrt(sum_squares(ky));
    } else {
        num = sum_squares(cross(yc, xc));
        den = std::sqrt(sum_squares(cross(xc, xc))) * std::sqrt(sum_squares(cross(yc, yc)));
    }
    if (!(den > 0.0)) throw NumericError("linear_cka: degenerate (constant) activations");
    return num / den;
}

std::string to_string(CkaCondition condition) {
    switch (condition) {
        case CkaCondition::clean_clean: return "clean-clean";
        case CkaCondition::clean_adv: return "clean-adv";
        case CkaCondition::adv_adv: return "adv-adv";
    }
    return "?";
}

std::size_t CKAMatrix::masked_count() const { return static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true)); }

CKAMatrix cka_grid(const std::vector<ActivationRecord>& a, const std::vector<ActivationRecord>& b) {
    CKAMatrix m;
    for (const auto& r : a) m.rows.push_back(r.layer);
    for (const auto& c : b) m.cols.push_back(c.layer);
    m.values.assign(a.size() * b.size(), 0.0);
    m.masked.assign(a.size() * b.size(), false);
    m.n_samples = a.empty() ? 0 : a.front().matrix.rows();
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            try {
                m.values[i * b.size() + j] = linear_cka(a[i].matrix, b[j].matrix);
            } catch (const NumericError& e) {
                m.masked[i * b.size() + j] = true;
                m.diagnostics.push_back(a[i].layer.label + " x " + b[j].layer.label + ": " + e.what());
            }
        }
    return m;
}

Dataset analysis_sample(const Dataset& data, std::size_t n, std::uint64_t seed) {
    if (n >= data.size()) return data;
    Rng rng(seed);
    auto perm = rng.permutation(data.size());
    perm.resize(n);
    return data.subset(perm);
}

Tensor adversarial_inputs(const ModelBundle& model, const Dataset& data, const AttackSpec& attack,
                          const LossConfig& loss) {
    ViewBatch batch;
    batch.x = data.inputs;
    batch.y = data.labels;
    AttackSpec spec = attack;
    if (!spec.clamp && data.image) spec.clamp = ClampRange{};
    return pgd(model, batch, spec, loss);
}

CKAMatrix cka_heatmap(const ModelBundle& model, const Dataset& sample, const std::optional<AttackSpec>& attack,
                      const std::string& model_id) {
    const auto clean = encode(model, sample.inputs, true).activations;
    CKAMatrix m;
    if (attack) {
        const auto adv = encode(model, adversarial_inputs(model, sample, *attack), true).activations;
        m = cka_grid(clean, adv);
        m.condition = CkaCondition::clean_adv;
    } else {
        m = cka_grid(clean, clean);
    }
    m.model_ids = {model_id, model_id};
    return m;
}

CkaCurve diagonal(const CKAMatrix& matrix) {
    CkaCurve c;
    const std::size_t k = std::min(matrix.rows.size(), matrix.cols.size());
    for (std::size_t i = 0; i < k; ++i) {
        c.layers.push_back(matrix.rows[i]);
        c.values.push_back(matrix.at(i, i));
        c.masked.push_back(matrix.is_masked(i, i));
    }
    return c;
}

CkaCurve divergence_curve(const ModelBundle& model, const Dataset& sample, const AttackSpec& attack) {
    const auto clean = encode(model, sample.inputs, true).activations;
    const auto adv = encode(model, adversarial_inputs(model, sample, attack), true).activations;
    CkaCurve c;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        c.layers.push_back(clean[i].layer);
        try {
            c.values.push_back(linear_cka(clean[i].matrix, adv[i].matrix));
            c.masked.push_back(false);
        } catch (const NumericError&) {
            c.values.push_back(0.0);
            c.masked.push_back(true);
        }
    }
    return c;
}

CKAMatrix cross_model_cka(const ModelBundle& a, const ModelBundle& b, const Dataset& sample,
                          const std::optional<AttackSpec>& attack, const std::string& id_a, const std::string& id_b) {
    if (a.config.input_shape != b.config.input_shape) {
        throw ShapeError("cross_model_cka: input shapes differ (" + shape_str(a.config.input_shape) + " vs " +
                         shape_str(b.config.input_shape) + ")");
    }
    const Tensor xa = attack ? adversarial_inputs(a, sample, *attack) : sample.inputs;
    const Tensor xb = attack ? adversarial_inputs(b, sample, *attack) : sample.inputs;
    CKAMatrix m = cka_grid(encode(a, xa, true).activations, encode(b, xb, true).activations);
    m.condition = attack ? CkaCondition::adv_adv : CkaCondition::clean_clean;
    m.model_ids = {id_a, id_b};
    return m;
}

std::vector<EpsilonSweepEntry> epsilon_sweep(const ScenarioSpec& family, const Dataset& data,
                                             const std::vector<double>& eps_list, const AttackSpec& eval_attack,
                                             std::size_t n_samples,
                                             const std::optional<std::filesystem::path>& out_dir,
                                             PretrainCache* cache) {
    if (eps_list.empty()) throw ConfigError("epsilon sweep needs at least one epsilon");
    if (!std::is_sorted(eps_list.begin(), eps_list.end())) throw ConfigError("epsilon sweep list must be ascending");
    std::vector<EpsilonSweepEntry> out;
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        ScenarioSpec spec = family;
        if (eps_list[i] <= 0.0) {
            spec.scenario = Scenario::ST;
        } else {
            if (spec.scenario == Scenario::ST) spec.scenario = Scenario::AT;
            spec.train_attack.epsilon = eps_list[i];
        }
        RunOptions options;
        options.cache = cache;
        if (out_dir) options.out_dir = *out_dir / ("eps_" + std::to_string(i));
        RunRecord run = run_scenario(data, spec, options);
        EpsilonSweepEntry e;
        e.train_epsilon = eps_list[i];
        const Dataset sample = analysis_sample(run.splits.test, n_samples, derive_seed(spec.seed, 31));
        e.heatmap = cka_heatmap(run.model, sample, eval_attack, "eps_" + std::to_string(i));
        e.curve = diagonal(e.heatmap);
        e.model = std::move(run.model);
        if (out_dir) e.checkpoint = *out_dir / ("eps_" + std::to_string(i)) / "model.rrlb";
        out.push_back(std::move(e));
    }
    return out;
}

Tensor layer_activations(const ModelBundle& model, const Tensor& x, std::size_t layer_ordinal) {
    if (layer_ordinal == 0) return x.flattened();
    auto acts = encode(model, x, true).activations;
    if (layer_ordinal > acts.size()) {
        throw ConfigError("layer " + std::to_string(layer_ordinal) + " does not exist (encoder has " +
                          std::to_string(acts.size()) + " layers)");
    }
    return std::move(acts[layer_ordinal - 1].matrix);
}

namespace {

double probe_accuracy(const Tensor& feats, const std::vector<int>& labels, const Tensor& w, const Tensor& b) {
    Tape tape;
    Var logits = ops::add_bias(ops::matmul(tape.constant(feats), tape.constant(w)), tape.constant(b));
    std::size_t ok = 0;
    const Tensor& l = logits.value();
    for (std::size_t i = 0; i < l.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < l.cols(); ++c)
            if (l.at(i, c) > l.at(i, best)) best = c;
        ok += static_cast<int>(best) == labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

}  // namespace

ProbeResult linear_probe(const ModelBundle& model, const Dataset& train, const Dataset& test,
                         std::size_t layer_ordinal, const ProbeConfig& config) {
    config.optimizer.validate();
    const Tensor ftrain = layer_activations(model, train.inputs, layer_ordinal);
    const Tensor ftest = layer_activations(model, test.inputs, layer_ordinal);
    if (is_constant(centred(ftrain), ftrain)) {
        throw NumericError("linear probe: layer " + std::to_string(layer_ordinal) + " activations are constant");
    }
    const std::size_t d = ftrain.cols();
    const std::size_t c = std::max(train.n_classes, model.n_classes);

    Rng rng(derive_seed(config.seed, 41));
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor w({d, c}), b({c});
    for (auto& v : w.values()) v = rng.uniform(-bound, bound);
    for (auto& v : b.values()) v = rng.uniform(-bound, bound);

    Adam opt(config.optimizer);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& idx : minibatches(train.size(), config.batch_size, derive_seed(config.seed, 42, epoch))) {
            std::vector<int> y;
            for (auto i : idx) y.push_back(train.labels[i]);
            Tape tape;
            Var wv = tape.variable(w), bv = tape.variable(b);
            Var loss = cross_entropy(ops::add_bias(ops::matmul(tape.constant(ftrain.gather_rows(idx)), wv), bv), y);
            Gradients g = tape.backward(loss);
            Tensor* params[] = {&w, &b};
            const Tensor* grads[] = {&g.at(wv.id()), &g.at(bv.id())};
            opt.step(params, grads);
        }
    }

    ProbeResult r;
    r.layer = layer_ordinal == 0 ? LayerId{0, "input"} : layer_ids(model.config).at(layer_ordinal - 1);
    r.train_accuracy = probe_accuracy(ftrain, train.labels, w, b);
    r.test_accuracy = probe_accuracy(ftest, test.labels, w, b);
    r.n_samples = train.size() + test.size();
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void append_probe_csv(const std::filesystem::path& path, const std::string& model_id, const ProbeResult& r) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot write " + path.string());
    if (fresh) out << "model_id,layer_ordinal,layer,train_acc,test_acc,n_samples\n";
    out << model_id << ',' << r.layer.ordinal << ',' << r.layer.label << ',' << fmt(r.train_accuracy) << ','
        << fmt(r.test_accuracy) << ',' << r.n_samples << '\n';
}

void export_embeddings(const ModelBundle& model, const Dataset& data, const std::filesystem::path& path) {
    const Tensor rep = encode(model, data.inputs, false).representation;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "label";
    for (std::size_t j = 0; j < rep.cols(); ++j) out << ",e" << j;
    out << '\n';
    for (std::size_t i = 0; i < rep.rows(); ++i) {
        out << data.labels[i];
        for (std::size_t j = 0; j < rep.cols(); ++j) out << ',' << fmt(rep.at(i, j));
        out << '\n';
    }
}

std::pair<Tensor, std::vector<int>> load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("label,e0", 0) != 0) {
        throw FormatError(path.string() + ": missing 'label,e0,...' header");
    }
    const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col == 0) labels.push_back(std::stoi(cell));
                else values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            ++col;
        }
        if (col != d + 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    return {Tensor({labels.size(), d}, std::move(values)), std::move(labels)};
}

void write_cka_csv(const CKAMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "layer";
    for (const auto& c : m.cols) out << ',' << c.label;
    out << '\n';
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        out << m.rows[i].label;
        for (std::size_t j = 0; j < m.cols.size(); ++j) out << ',' << (m.is_masked(i, j) ? "NA" : fmt(m.at(i, j)));
        out << '\n';
    }
}

}  // namespace rcl
