#include "rcl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rcl/error.hpp"

namespace rcl {

std::string to_string(DataSource source) {
    switch (source) {
        case DataSource::synthetic: return "synthetic";
        case DataSource::idx: return "idx";
        case DataSource::csv: return "csv";
    }
    return "?";
}

namespace {

DataSource parse_data_source(const std::string& text) {
    for (DataSource s : {DataSource::synthetic, DataSource::idx, DataSource::csv})
        if (to_string(s) == text) return s;
    throw ConfigError("unknown dataset source '" + text + "' (expected synthetic, idx or csv)");
}

// One parsed right-hand side: a scalar or a bracketed list of scalars.
struct Value {
    std::vector<std::string> items;
    bool list = false;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& token) {
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') return token.substr(1, token.size() - 2);
    if (!token.empty() && (token.front() == '"' || token.back() == '"'))
        throw ConfigError("unterminated string " + token);
    return token;
}

// Drops a trailing "# comment" that is not inside quotes.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

Value parse_value(const std::string& raw) {
    std::string text = trim(raw);
    if (text.empty()) throw ConfigError("missing value");
    Value v;
    if (text.front() == '[') {
        if (text.back() != ']') throw ConfigError("unterminated list " + text);
        v.list = true;
        std::string body = trim(text.substr(1, text.size() - 2));
        if (body.empty()) return v;
        std::string item;
        bool quoted = false;
        for (char c : body) {
            if (c == '"') quoted = !quoted;
            if (c == ',' && !quoted) {
                if (trim(item).empty()) throw ConfigError("empty list item in " + text);
                v.items.push_back(unquote(trim(item)));
                item.clear();
            } else {
                item += c;
            }
        }
        if (trim(item).empty()) throw ConfigError("empty list item in " + text);
        v.items.push_back(unquote(trim(item)));
        return v;
    }
    v.items.push_back(unquote(text));
    return v;
}

double parse_real_token(const std::string& token) {
    auto plain = [&token](const std::string& s) {
        double out = 0.0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), out);
        if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ConfigError("expected a number, got '" + token + "'");
        if (!std::isfinite(out)) throw ConfigError("non-finite number '" + token + "'");
        return out;
    };
    std::size_t slash = token.find('/');
    if (slash == std::string::npos) return plain(token);
    double num = plain(trim(token.substr(0, slash)));
    double den = plain(trim(token.substr(slash + 1)));
    if (den == 0.0) throw ConfigError("zero denominator in '" + token + "'");
    return num / den;
}

std::uint64_t parse_uint_token(const std::string& token) {
    std::uint64_t out = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), out);
    if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw ConfigError("expected a non-negative integer, got '" + token + "'");
    return out;
}

bool parse_bool_token(const std::string& token) {
    if (token == "true") return true;
    if (token == "false") return false;
    throw ConfigError("expected true or false, got '" + token + "'");
}

const std::string& scalar(const Value& v) {
    if (v.list || v.items.size() != 1) throw ConfigError("expected a single value, got a list");
    return v.items[0];
}

const std::vector<std::string>& list(const Value& v) {
    if (!v.list) throw ConfigError("expected a [list]");
    return v.items;
}

double real(const Value& v) { return parse_real_token(scalar(v)); }
std::size_t count(const Value& v) { return static_cast<std::size_t>(parse_uint_token(scalar(v))); }
std::uint64_t u64(const Value& v) { return parse_uint_token(scalar(v)); }
bool boolean(const Value& v) { return parse_bool_token(scalar(v)); }

// Shortest text that reads back to the same double.
std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}
std::string fmt(std::uint64_t x) { return std::to_string(x); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }
std::string quote(const std::string& s) { return '"' + s + '"'; }

template <class T, class F>
std::string fmt_list(const std::vector<T>& xs, F f) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + f(xs[i]);
    return out + "]";
}

std::optional<double> optional_real(const Value& v) {
    if (scalar(v) == "auto") return std::nullopt;
    return real(v);
}
std::string fmt_optional(const std::optional<double>& x) { return x ? fmt(*x) : "auto"; }

std::optional<ClampRange> parse_clamp(const Value& v) {
    if (!v.list && scalar(v) == "auto") return std::nullopt;
    const auto& xs = list(v);
    if (xs.size() != 2) throw ConfigError("clamp must be auto or [lo, hi]");
    ClampRange r{parse_real_token(xs[0]), parse_real_token(xs[1])};
    if (!(r.lo < r.hi)) throw ConfigError("clamp requires lo < hi");
    return r;
}
std::string fmt_clamp(const std::optional<ClampRange>& c) {
    return c ? "[" + fmt(c->lo) + ", " + fmt(c->hi) + "]" : "auto";
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(ExperimentConfig&, const Value&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Field>& schema() {
    using C = ExperimentConfig;
    static const std::vector<Field> fields = {
        {"", "seed", [](C& c, const Value& v) { c.seed = u64(v); }, [](const C& c) { return fmt(c.seed); }},
        {"", "output_dir", [](C& c, const Value& v) { c.output_dir = scalar(v); },
         [](const C& c) { return quote(c.output_dir); }},

        {"dataset", "source", [](C& c, const Value& v) { c.dataset.source = parse_data_source(scalar(v)); },
         [](const C& c) { return to_string(c.dataset.source); }},
        {"dataset", "kind", [](C& c, const Value& v) { c.dataset.kind = parse_synthetic_kind(scalar(v)); },
         [](const C& c) { return to_string(c.dataset.kind); }},
        {"dataset", "n", [](C& c, const Value& v) { c.dataset.n = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.dataset.n)); }},
        {"dataset", "dim", [](C& c, const Value& v) { c.dataset.dim = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.dataset.dim)); }},
        {"dataset", "classes", [](C& c, const Value& v) { c.dataset.classes = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.dataset.classes)); }},
        {"dataset", "separation", [](C& c, const Value& v) { c.dataset.separation = real(v); },
         [](const C& c) { return fmt(c.dataset.separation); }},
        {"dataset", "seed", [](C& c, const Value& v) { c.dataset.data_seed = u64(v); },
         [](const C& c) { return fmt(c.dataset.data_seed); }},
        {"dataset", "images", [](C& c, const Value& v) { c.dataset.images = scalar(v); },
         [](const C& c) { return quote(c.dataset.images); }},
        {"dataset", "labels", [](C& c, const Value& v) { c.dataset.labels = scalar(v); },
         [](const C& c) { return quote(c.dataset.labels); }},
        {"dataset", "csv", [](C& c, const Value& v) { c.dataset.csv = scalar(v); },
         [](const C& c) { return quote(c.dataset.csv); }},
        {"dataset", "split",
         [](C& c, const Value& v) {
             const auto& xs = list(v);
             if (xs.size() != 3) throw ConfigError("split needs three fractions [pretrain, finetune, test]");
             for (int i = 0; i < 3; ++i) c.run.split[i] = parse_real_token(xs[i]);
         },
         [](const C& c) {
             return "[" + fmt(c.run.split[0]) + ", " + fmt(c.run.split[1]) + ", " + fmt(c.run.split[2]) + "]";
         }},

        {"model", "encoder", [](C& c, const Value& v) { c.run.encoder.kind = parse_encoder_kind(scalar(v)); },
         [](const C& c) { return to_string(c.run.encoder.kind); }},
        {"model", "widths",
         [](C& c, const Value& v) {
             c.run.encoder.widths.clear();
             for (const auto& t : list(v)) c.run.encoder.widths.push_back(parse_uint_token(t));
         },
         [](const C& c) {
             return fmt_list(c.run.encoder.widths, [](std::size_t w) { return fmt(std::uint64_t(w)); });
         }},
        {"model", "head_dim", [](C& c, const Value& v) { c.run.head_dim = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.head_dim)); }},

        {"loss", "scheme", [](C& c, const Value& v) { c.run.loss.scheme = parse_scheme(scalar(v)); },
         [](const C& c) { return to_string(c.run.loss.scheme); }},
        {"loss", "cl_temperature", [](C& c, const Value& v) { c.run.loss.cl_temperature = real(v); },
         [](const C& c) { return fmt(c.run.loss.cl_temperature); }},
        {"loss", "scl_temperature", [](C& c, const Value& v) { c.run.loss.scl_temperature = real(v); },
         [](const C& c) { return fmt(c.run.loss.scl_temperature); }},
        {"loss", "alpha", [](C& c, const Value& v) { c.run.loss.alpha = real(v); },
         [](const C& c) { return fmt(c.run.loss.alpha); }},
        {"loss", "beta", [](C& c, const Value& v) { c.run.loss.beta = real(v); },
         [](const C& c) { return fmt(c.run.loss.beta); }},
        {"loss", "weight_sl", [](C& c, const Value& v) { c.run.loss.weight_sl = real(v); },
         [](const C& c) { return fmt(c.run.loss.weight_sl); }},
        {"loss", "weight_cl", [](C& c, const Value& v) { c.run.loss.weight_cl = real(v); },
         [](const C& c) { return fmt(c.run.loss.weight_cl); }},
        {"loss", "weight_scl", [](C& c, const Value& v) { c.run.loss.weight_scl = real(v); },
         [](const C& c) { return fmt(c.run.loss.weight_scl); }},

        {"scenario", "scenario", [](C& c, const Value& v) { c.run.scenario = parse_scenario(scalar(v)); },
         [](const C& c) { return to_string(c.run.scenario); }},
        {"scenario", "pretrain_epochs", [](C& c, const Value& v) { c.run.pretrain_epochs = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.pretrain_epochs)); }},
        {"scenario", "finetune_epochs", [](C& c, const Value& v) { c.run.finetune_epochs = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.finetune_epochs)); }},
        {"scenario", "batch_size", [](C& c, const Value& v) { c.run.batch_size = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.batch_size)); }},
        {"scenario", "adv_batch_size", [](C& c, const Value& v) { c.run.adv_batch_size = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.adv_batch_size)); }},
        {"scenario", "pretrain_lr", [](C& c, const Value& v) { c.run.pretrain_optimizer.lr = real(v); },
         [](const C& c) { return fmt(c.run.pretrain_optimizer.lr); }},
        {"scenario", "finetune_lr", [](C& c, const Value& v) { c.run.finetune_optimizer.lr = real(v); },
         [](const C& c) { return fmt(c.run.finetune_optimizer.lr); }},
        {"scenario", "adam_beta1",
         [](C& c, const Value& v) { c.run.pretrain_optimizer.beta1 = c.run.finetune_optimizer.beta1 = real(v); },
         [](const C& c) { return fmt(c.run.pretrain_optimizer.beta1); }},
        {"scenario", "adam_beta2",
         [](C& c, const Value& v) { c.run.pretrain_optimizer.beta2 = c.run.finetune_optimizer.beta2 = real(v); },
         [](const C& c) { return fmt(c.run.pretrain_optimizer.beta2); }},
        {"scenario", "adam_eps",
         [](C& c, const Value& v) { c.run.pretrain_optimizer.eps = c.run.finetune_optimizer.eps = real(v); },
         [](const C& c) { return fmt(c.run.pretrain_optimizer.eps); }},

        {"augment", "noise_sigma", [](C& c, const Value& v) { c.run.augment.gaussian_noise_sigma = real(v); },
         [](const C& c) { return fmt(c.run.augment.gaussian_noise_sigma); }},
        {"augment", "feature_dropout", [](C& c, const Value& v) { c.run.augment.feature_dropout_prob = real(v); },
         [](const C& c) { return fmt(c.run.augment.feature_dropout_prob); }},
        {"augment", "crop_shift", [](C& c, const Value& v) { c.run.augment.crop_shift_max_pixels = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.augment.crop_shift_max_pixels)); }},
        {"augment", "flip_prob", [](C& c, const Value& v) { c.run.augment.horizontal_flip_prob = real(v); },
         [](const C& c) { return fmt(c.run.augment.horizontal_flip_prob); }},
        {"augment", "erase_prob", [](C& c, const Value& v) { c.run.augment.erase_patch_prob = real(v); },
         [](const C& c) { return fmt(c.run.augment.erase_patch_prob); }},
        {"augment", "seed", [](C& c, const Value& v) { c.run.augment.seed = u64(v); },
         [](const C& c) { return fmt(c.run.augment.seed); }},

        {"train_attack", "epsilon", [](C& c, const Value& v) { c.run.train_attack.epsilon = real(v); },
         [](const C& c) { return fmt(c.run.train_attack.epsilon); }},
        {"train_attack", "step_size", [](C& c, const Value& v) { c.run.train_attack.step_size = optional_real(v); },
         [](const C& c) { return fmt_optional(c.run.train_attack.step_size); }},
        {"train_attack", "steps", [](C& c, const Value& v) { c.run.train_attack.steps = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.run.train_attack.steps)); }},
        {"train_attack", "random_start", [](C& c, const Value& v) { c.run.train_attack.random_start = boolean(v); },
         [](const C& c) { return fmt_bool(c.run.train_attack.random_start); }},
        {"train_attack", "clamp", [](C& c, const Value& v) { c.run.train_attack.clamp = parse_clamp(v); },
         [](const C& c) { return fmt_clamp(c.run.train_attack.clamp); }},
        {"train_attack", "seed", [](C& c, const Value& v) { c.run.train_attack.seed = u64(v); },
         [](const C& c) { return fmt(c.run.train_attack.seed); }},

        {"evaluation", "threat_models",
         [](C& c, const Value& v) {
             c.evaluation.threat_models.clear();
             for (const auto& t : list(v)) c.evaluation.threat_models.push_back(parse_threat_model(t));
         },
         [](const C& c) {
             return fmt_list(c.evaluation.threat_models, [](ThreatModel t) { return to_string(t); });
         }},
        {"evaluation", "epsilons",
         [](C& c, const Value& v) {
             c.evaluation.epsilons.clear();
             for (const auto& t : list(v)) c.evaluation.epsilons.push_back(parse_real_token(t));
         },
         [](const C& c) { return fmt_list(c.evaluation.epsilons, [](double x) { return fmt(x); }); }},
        {"evaluation", "steps", [](C& c, const Value& v) { c.evaluation.steps = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.evaluation.steps)); }},
        {"evaluation", "threat_model_ii_steps", [](C& c, const Value& v) { c.evaluation.threat_model_ii_steps = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.evaluation.threat_model_ii_steps)); }},
        {"evaluation", "random_start", [](C& c, const Value& v) { c.evaluation.random_start = boolean(v); },
         [](const C& c) { return fmt_bool(c.evaluation.random_start); }},
        {"evaluation", "step_size", [](C& c, const Value& v) { c.evaluation.step_size = optional_real(v); },
         [](const C& c) { return fmt_optional(c.evaluation.step_size); }},
        {"evaluation", "clamp", [](C& c, const Value& v) { c.evaluation.clamp = parse_clamp(v); },
         [](const C& c) { return fmt_clamp(c.evaluation.clamp); }},
        {"evaluation", "batch_size", [](C& c, const Value& v) { c.evaluation.batch_size = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.evaluation.batch_size)); }},
        {"evaluation", "seed", [](C& c, const Value& v) { c.evaluation.attack_seed = u64(v); },
         [](const C& c) { return fmt(c.evaluation.attack_seed); }},

        {"analysis", "cka", [](C& c, const Value& v) { c.analysis.cka = boolean(v); },
         [](const C& c) { return fmt_bool(c.analysis.cka); }},
        {"analysis", "n_samples", [](C& c, const Value& v) { c.analysis.n_samples = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.analysis.n_samples)); }},
        {"analysis", "probe_layers",
         [](C& c, const Value& v) {
             c.analysis.probe_layers.clear();
             for (const auto& t : list(v)) c.analysis.probe_layers.push_back(parse_uint_token(t));
         },
         [](const C& c) {
             return fmt_list(c.analysis.probe_layers, [](std::size_t l) { return fmt(std::uint64_t(l)); });
         }},
        {"analysis", "probe_epochs", [](C& c, const Value& v) { c.analysis.probe_epochs = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.analysis.probe_epochs)); }},
        {"analysis", "probe_lr", [](C& c, const Value& v) { c.analysis.probe_lr = real(v); },
         [](const C& c) { return fmt(c.analysis.probe_lr); }},
        {"analysis", "probe_batch_size", [](C& c, const Value& v) { c.analysis.probe_batch_size = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.analysis.probe_batch_size)); }},
        {"analysis", "epsilon_sweep",
         [](C& c, const Value& v) {
             c.analysis.epsilon_sweep.clear();
             for (const auto& t : list(v)) c.analysis.epsilon_sweep.push_back(parse_real_token(t));
         },
         [](const C& c) { return fmt_list(c.analysis.epsilon_sweep, [](double x) { return fmt(x); }); }},
        {"analysis", "attack_epsilon", [](C& c, const Value& v) { c.analysis.attack_epsilon = real(v); },
         [](const C& c) { return fmt(c.analysis.attack_epsilon); }},
        {"analysis", "attack_steps", [](C& c, const Value& v) { c.analysis.attack_steps = count(v); },
         [](const C& c) { return fmt(std::uint64_t(c.analysis.attack_steps)); }},

        {"sweep", "scenarios",
         [](C& c, const Value& v) {
             c.sweep.scenarios.clear();
             for (const auto& t : list(v)) c.sweep.scenarios.push_back(parse_scenario(t));
         },
         [](const C& c) { return fmt_list(c.sweep.scenarios, [](Scenario s) { return to_string(s); }); }},
        {"sweep", "schemes",
         [](C& c, const Value& v) {
             c.sweep.schemes.clear();
             for (const auto& t : list(v)) c.sweep.schemes.push_back(parse_scheme(t));
         },
         [](const C& c) { return fmt_list(c.sweep.schemes, [](Scheme s) { return to_string(s); }); }},
        {"sweep", "seeds",
         [](C& c, const Value& v) {
             c.sweep.seeds.clear();
             for (const auto& t : list(v)) c.sweep.seeds.push_back(parse_uint_token(t));
         },
         [](const C& c) { return fmt_list(c.sweep.seeds, [](std::uint64_t s) { return fmt(s); }); }},
        {"sweep", "record_runtime", [](C& c, const Value& v) { c.sweep.record_runtime = boolean(v); },
         [](const C& c) { return fmt_bool(c.sweep.record_runtime); }},
    };
    return fields;
}

const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : schema())
        if (f.section == section && f.key == key) return f;
    std::string where = section.empty() ? "top level" : "[" + section + "]";
    throw ConfigError("unknown key '" + key + "' in " + where);
}

bool known_section(const std::string& section) {
    for (const auto& f : schema())
        if (f.section == section) return true;
    return false;
}

// Cross-field checks run after every assignment has been applied.
void check(const ExperimentConfig& c) {
    if (c.dataset.source == DataSource::idx && (c.dataset.images.empty() || c.dataset.labels.empty()))
        throw ConfigError("[dataset] source = idx needs images and labels paths");
    if (c.dataset.source == DataSource::csv && c.dataset.csv.empty())
        throw ConfigError("[dataset] source = csv needs a csv path");
    if (c.evaluation.batch_size == 0) throw ConfigError("[evaluation] batch_size must be >= 1");
    if (c.evaluation.steps == 0 || c.evaluation.threat_model_ii_steps == 0)
        throw ConfigError("[evaluation] steps must be >= 1");
    for (double e : c.evaluation.epsilons)
        if (e < 0.0) throw ConfigError("[evaluation] epsilons must be >= 0");
    for (double e : c.analysis.epsilon_sweep)
        if (e < 0.0) throw ConfigError("[analysis] epsilon_sweep values must be >= 0");
    if (c.analysis.n_samples < 3) throw ConfigError("[analysis] n_samples must be >= 3");
    if (c.analysis.probe_batch_size == 0) throw ConfigError("[analysis] probe_batch_size must be >= 1");
    if (c.sweep.seeds.empty()) throw ConfigError("[sweep] seeds must not be empty");
    c.run.validate(false);
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
    return canonical_config(*this) == canonical_config(other);
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fail = [&](const std::string& msg) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
        };
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') fail("malformed section header '" + body + "'");
            section = trim(body.substr(1, body.size() - 2));
            if (!known_section(section)) fail("unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string::npos) fail("expected 'key = value', got '" + body + "'");
        std::string key = trim(body.substr(0, eq));
        if (key.empty()) fail("missing key before '='");
        if (!seen.insert({section, key}).second) fail("duplicate key '" + key + "'");
        try {
            find_field(section, key).set(config, parse_value(body.substr(eq + 1)));
        } catch (const ConfigError& e) {
            fail(std::string(key) + ": " + e.what());
        }
    }
    config.run.seed = config.seed;
    try {
        check(config);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    ExperimentConfig config = parse_config(buf.str(), path.string());
    config.base_dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    return config;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like section.key=value");
    std::string path = trim(assignment.substr(0, eq));
    std::size_t dot = path.find('.');
    std::string section = dot == std::string::npos ? "" : path.substr(0, dot);
    std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    try {
        find_field(section, key).set(config, parse_value(assignment.substr(eq + 1)));
        config.run.seed = config.seed;
        check(config);
    } catch (const ConfigError& e) {
        throw ConfigError("override '" + assignment + "': " + e.what());
    }
}

std::string canonical_config(const ExperimentConfig& config) {
    std::string out;
    std::string section = "";
    for (const auto& f : schema()) {
        if (f.section != section) {
            section = f.section;
            out += "\n[" + section + "]\n";
        }
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

std::string config_hash(const ExperimentConfig& config) { return hex64(fnv1a64(canonical_config(config))); }

Dataset load_dataset(const ExperimentConfig& config) {
    const DatasetConfig& d = config.dataset;
    auto resolve = [&config](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : config.base_dir / path;
    };
    switch (d.source) {
        case DataSource::synthetic:
            return gen_synthetic(d.kind, d.n, d.dim, d.classes, d.data_seed, d.separation);
        case DataSource::idx: return load_idx(resolve(d.images), resolve(d.labels), d.classes);
        case DataSource::csv: return load_csv(resolve(d.csv), d.classes);
    }
    throw ConfigError("unknown dataset source");
}

std::vector<EvalAttack> evaluation_attacks(const ExperimentConfig& config) {
    const EvaluationConfig& e = config.evaluation;
    std::vector<EvalAttack> attacks;
    for (ThreatModel tm : e.threat_models) {
        for (double eps : e.epsilons) {
            EvalAttack a;
            a.threat_model = tm;
            a.spec.epsilon = eps;
            a.spec.steps = tm == ThreatModel::I ? e.steps : e.threat_model_ii_steps;
            a.spec.step_size = e.step_size;
            a.spec.random_start = e.random_start;
            a.spec.clamp = e.clamp;
            a.spec.seed = e.attack_seed;
            attacks.push_back(a);
        }
    }
    return attacks;
}

AttackSpec analysis_attack(const ExperimentConfig& config) {
    AttackSpec a;
    a.epsilon = config.analysis.attack_epsilon;
    a.steps = config.analysis.attack_steps;
    a.step_size = config.evaluation.step_size;
    a.random_start = config.evaluation.random_start;
    a.clamp = config.evaluation.clamp;
    a.seed = config.evaluation.attack_seed;
    a.driving_loss = DrivingLoss::CE;
    return a;
}

}  // namespace rcl
