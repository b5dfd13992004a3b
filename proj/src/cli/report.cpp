#include "rcl/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rcl/error.hpp"

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

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad " + what + " value '" + text + "'");
    }
}

std::optional<double> parse_optional(const std::string& text, const std::string& what) {
    if (text == "NA") return std::nullopt;
    return parse_double(text, what);
}

// Viridis sampled at 8 evenly spaced stops.
constexpr std::array<std::array<int, 3>, 8> kViridis{{{68, 1, 84},
                                                      {70, 50, 126},
                                                      {54, 92, 141},
                                                      {39, 127, 142},
                                                      {31, 161, 135},
                                                      {74, 193, 109},
                                                      {160, 218, 57},
                                                      {253, 231, 37}}};

std::string viridis(double v) {
    v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    double pos = v * (kViridis.size() - 1);
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(pos), kViridis.size() - 2);
    double t = pos - static_cast<double>(i);
    char buf[8];
    int rgb[3];
    for (int k = 0; k < 3; ++k) rgb[k] = static_cast<int>(std::lround(kViridis[i][k] * (1 - t) + kViridis[i + 1][k] * t));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-9; }

}  // namespace

std::string html_escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string heatmap_pgm(const CKAMatrix& m) {
    const std::size_t rows = m.rows.size(), cols = m.cols.size();
    if (m.values.size() != rows * cols || m.masked.size() != rows * cols)
        throw ShapeError("CKA matrix storage does not match its layer lists");
    std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (std::size_t i = 0; i < rows * cols; ++i) {
        long px = 0;
        if (!m.masked[i] && std::isfinite(m.values[i])) px = std::clamp(std::lround(255.0 * m.values[i]), 0L, 255L);
        out += static_cast<char>(static_cast<unsigned char>(px));
    }
    return out;
}

std::string heatmap_svg(const CKAMatrix& m, const std::string& title) {
    const std::size_t rows = m.rows.size(), cols = m.cols.size();
    if (m.values.size() != rows * cols || m.masked.size() != rows * cols)
        throw ShapeError("CKA matrix storage does not match its layer lists");
    const int cell = 36, left = 110, top = 40, bottom = 110, legend = 70;
    const int width = left + static_cast<int>(cols) * cell + legend;
    const int height = top + static_cast<int>(rows) * cell + bottom;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
          "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>"
          "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/></pattern></defs>\n";
    std::string heading = title.empty() ? m.model_ids.first + " vs " + m.model_ids.second + " (" +
                                              to_string(m.condition) + ")"
                                        : title;
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"12\">" << html_escape(heading) << "</text>\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const bool masked = m.is_masked(r, c);
            const int x = left + static_cast<int>(c) * cell, y = top + static_cast<int>(r) * cell;
            os << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << (masked ? "url(#hatch)" : viridis(m.at(r, c))) << "\"><title>"
               << html_escape(m.rows[r].label) << " / " << html_escape(m.cols[c].label) << ": "
               << (masked ? "masked" : fixed(m.at(r, c), 4)) << "</title></rect>\n";
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        os << "<text class=\"row-label\" x=\"" << left - 4 << "\" y=\"" << top + static_cast<int>(r) * cell + cell / 2 + 3
           << "\" text-anchor=\"end\">" << html_escape(m.rows[r].label) << "</text>\n";
    }
    for (std::size_t c = 0; c < cols; ++c) {
        const int x = left + static_cast<int>(c) * cell + cell / 2;
        const int y = top + static_cast<int>(rows) * cell + 6;
        os << "<text class=\"col-label\" x=\"" << x << "\" y=\"" << y << "\" transform=\"rotate(60 " << x << ' ' << y
           << ")\">" << html_escape(m.cols[c].label) << "</text>\n";
    }
    os << "<text x=\"4\" y=\"" << top - 6 << "\">" << html_escape(m.model_ids.first) << "</text>\n";
    os << "<text x=\"" << left << "\" y=\"" << height - 6 << "\">" << html_escape(m.model_ids.second) << "</text>\n";
    // Vertical colour bar from 1 (top) to 0 (bottom).
    const int bar_x = left + static_cast<int>(cols) * cell + 16;
    const int bar_h = std::max(static_cast<int>(rows) * cell, 80);
    for (int k = 0; k < 20; ++k) {
        os << "<rect x=\"" << bar_x << "\" y=\"" << top + k * bar_h / 20 << "\" width=\"12\" height=\""
           << bar_h / 20 + 1 << "\" fill=\"" << viridis(1.0 - k / 19.0) << "\"/>\n";
    }
    os << "<text x=\"" << bar_x + 16 << "\" y=\"" << top + 8 << "\">1</text>\n";
    os << "<text x=\"" << bar_x + 16 << "\" y=\"" << top + bar_h << "\">0</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::vector<std::filesystem::path> render_heatmap(const CKAMatrix& matrix, const std::filesystem::path& stem,
                                                  const std::string& title) {
    std::vector<std::filesystem::path> paths{stem, stem};
    paths[0] += ".pgm";
    paths[1] += ".svg";
    const std::string contents[2] = {heatmap_pgm(matrix), heatmap_svg(matrix, title)};
    for (int i = 0; i < 2; ++i) {
        if (paths[i].has_parent_path()) std::filesystem::create_directories(paths[i].parent_path());
        std::ofstream out(paths[i], std::ios::binary);
        if (!out) throw IoError("cannot write " + paths[i].string());
        out << contents[i];
        if (!out) throw IoError("write failed for " + paths[i].string());
    }
    return paths;
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
    const int width = 420, height = 260, left = 50, right = 120, top = 30, bottom = 40;
    double x_lo = 0, x_hi = 0;
    bool first = true;
    for (const auto& s : series)
        for (double x : s.x) {
            x_lo = first ? x : std::min(x_lo, x);
            x_hi = first ? x : std::max(x_hi, x);
            first = false;
        }
    if (x_hi <= x_lo) x_hi = x_lo + 1.0;
    const int plot_w = width - left - right, plot_h = height - top - bottom;
    auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
    auto py = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, 1.0)) * plot_h; };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<text x=\"" << left << "\" y=\"18\" font-size=\"12\">" << html_escape(title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
       << "\" fill=\"none\" stroke=\"#444444\"/>\n";
    for (double tick : {0.0, 0.5, 1.0})
        os << "<text x=\"" << left - 4 << "\" y=\"" << py(tick) + 3 << "\" text-anchor=\"end\">" << fixed(tick, 1)
           << "</text>\n";
    os << "<text x=\"" << left << "\" y=\"" << height - 8 << "\">" << html_escape(x_label) << " [" << fixed(x_lo, 4)
       << ", " << fixed(x_hi, 4) << "]</text>\n";
    os << "<text x=\"12\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 12 " << top + plot_h / 2
       << ")\">" << html_escape(y_label) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const std::string colour = viridis(series.size() > 1 ? static_cast<double>(k) / (series.size() - 1) * 0.85 : 0.0);
        std::string points;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!s.y[i]) continue;
            points += fixed(px(s.x[i]), 1) + "," + fixed(py(*s.y[i]), 1) + " ";
        }
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
        os << "<text x=\"" << left + plot_w + 8 << "\" y=\"" << top + 12 + 14 * static_cast<int>(k) << "\" fill=\""
           << colour << "\">" << html_escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("scenario,scheme,threat_model,epsilon,steps,clean_acc,robust_acc", 0) != 0)
        throw FormatError(path.string() + ": missing results header");
    std::vector<ResultRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() < 8) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": too few columns");
        try {
            ResultRow r;
            r.scenario = parse_scenario(f[0]);
            r.scheme = parse_scheme(f[1]);
            r.threat_model = parse_threat_model(f[2]);
            r.epsilon = parse_double(f[3], "epsilon");
            r.steps = static_cast<std::size_t>(parse_double(f[4], "steps"));
            r.clean_accuracy = parse_double(f[5], "clean_acc");
            r.robust_accuracy = parse_optional(f[6], "robust_acc");
            r.seed = static_cast<std::uint64_t>(std::stoull(f[7]));
            rows.push_back(r);
        } catch (const std::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

void write_cka_summary(const std::vector<CkaSummaryRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "seed,measure,subject,value\n";
    for (const auto& r : rows)
        out << r.seed << ',' << r.measure << ',' << r.subject << ',' << (r.value ? fmt(*r.value) : "NA") << '\n';
}

std::vector<CkaSummaryRow> read_cka_summary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "seed,measure,subject,value")
        throw FormatError(path.string() + ": missing CKA summary header");
    std::vector<CkaSummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) throw FormatError(path.string() + ": malformed row '" + line + "'");
        rows.push_back({static_cast<std::uint64_t>(std::stoull(f[0])), f[1], f[2], parse_optional(f[3], "value")});
    }
    return rows;
}

std::optional<double> upper_third_mean(const CKAMatrix& m) {
    const std::size_t rows = m.rows.size(), cols = m.cols.size();
    const std::size_t kr = (rows + 2) / 3, kc = (cols + 2) / 3;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = rows - kr; r < rows; ++r)
        for (std::size_t c = cols - kc; c < cols; ++c)
            if (!m.is_masked(r, c)) {
                sum += m.at(r, c);
                ++n;
            }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

namespace {

struct Lookup {
    const std::vector<ResultRow>& rows;
    const std::vector<CkaSummaryRow>& cka;
    double eps;

    std::optional<double> robust(Scenario sc, Scheme s, ThreatModel tm, std::uint64_t seed) const {
        for (const auto& r : rows)
            if (r.scenario == sc && r.scheme == s && r.threat_model == tm && r.seed == seed && near(r.epsilon, eps))
                return r.robust_accuracy;
        return std::nullopt;
    }
    std::optional<double> summary(const std::string& measure, const std::string& subject, std::uint64_t seed) const {
        for (const auto& r : cka)
            if (r.seed == seed && r.measure == measure && r.subject == subject) return r.value;
        return std::nullopt;
    }
};

std::string pct(double v) { return fixed(100.0 * v, 1); }

// Appends a failing note when any value is missing; returns true when all are present.
bool present(std::string& detail, std::initializer_list<std::pair<const char*, std::optional<double>>> values) {
    bool ok = true;
    for (const auto& [name, v] : values)
        if (!v) {
            detail += std::string(detail.empty() ? "" : "; ") + "missing " + name;
            ok = false;
        }
    return ok;
}

}  // namespace

std::vector<CriterionOutcome> check_directional(const std::vector<ResultRow>& rows,
                                                const std::vector<CkaSummaryRow>& cka, double eps) {
    std::set<std::uint64_t> seed_set;
    for (const auto& r : rows) seed_set.insert(r.seed);
    for (const auto& r : cka) seed_set.insert(r.seed);
    const std::vector<std::uint64_t> seeds(seed_set.begin(), seed_set.end());
    const Lookup q{rows, cka, eps};
    const auto I = ThreatModel::I;

    std::vector<CriterionOutcome> out;
    auto run = [&](int id, const std::string& claim, auto check) {
        CriterionOutcome c;
        c.id = id;
        c.claim = claim;
        c.seeds = seeds;
        c.required = (2 * seeds.size() + 2) / 3;
        std::size_t passed = 0;
        for (auto seed : seeds) {
            std::string detail;
            bool ok = check(seed, detail);
            c.seed_pass.push_back(ok);
            c.seed_detail.push_back(detail);
            passed += ok ? 1 : 0;
        }
        c.pass = !seeds.empty() && passed >= c.required;
        out.push_back(std::move(c));
    };

    run(6, "ST robustness: CL < min(SCL, SL) - 5 points; SL+CL and CL+SCL >= CL + 3 points",
        [&](std::uint64_t s, std::string& d) {
            auto cl = q.robust(Scenario::ST, Scheme::CL, I, s), scl = q.robust(Scenario::ST, Scheme::SCL, I, s),
                 sl = q.robust(Scenario::ST, Scheme::SL, I, s), slcl = q.robust(Scenario::ST, Scheme::SL_CL, I, s),
                 clscl = q.robust(Scenario::ST, Scheme::CL_SCL, I, s);
            if (!present(d, {{"ST/CL", cl}, {"ST/SCL", scl}, {"ST/SL", sl}, {"ST/SL+CL", slcl}, {"ST/CL+SCL", clscl}}))
                return false;
            d = "CL " + pct(*cl) + ", SCL " + pct(*scl) + ", SL " + pct(*sl) + ", SL+CL " + pct(*slcl) + ", CL+SCL " +
                pct(*clscl);
            return *cl <= std::min(*scl, *sl) - 0.05 && *slcl >= *cl + 0.03 && *clscl >= *cl + 0.03;
        });

    run(7, "Full-AT(CL) >= AT(CL) + 5 points; |Full-AT(SCL) - AT(SCL)| <= 5 points",
        [&](std::uint64_t s, std::string& d) {
            auto at_cl = q.robust(Scenario::AT, Scheme::CL, I, s), full_cl = q.robust(Scenario::FullAT, Scheme::CL, I, s),
                 at_scl = q.robust(Scenario::AT, Scheme::SCL, I, s),
                 full_scl = q.robust(Scenario::FullAT, Scheme::SCL, I, s);
            if (!present(d, {{"AT/CL", at_cl}, {"Full-AT/CL", full_cl}, {"AT/SCL", at_scl}, {"Full-AT/SCL", full_scl}}))
                return false;
            d = "CL AT " + pct(*at_cl) + " Full-AT " + pct(*full_cl) + "; SCL AT " + pct(*at_scl) + " Full-AT " +
                pct(*full_scl);
            return *full_cl >= *at_cl + 0.05 && std::abs(*full_scl - *at_scl) <= 0.05;
        });

    run(8, "final-layer clean-adv CKA: AT(CL) >= ST(CL) + 0.2; non-decreasing over training epsilon (tol 0.02)",
        [&](std::uint64_t s, std::string& d) {
            auto at = q.summary("divergence_final", "AT/CL", s), st = q.summary("divergence_final", "ST/CL", s);
            // Epsilon-sweep entries ordered by their training epsilon.
            std::vector<std::pair<double, std::optional<double>>> sweep;
            for (const auto& r : cka)
                if (r.seed == s && r.measure == "epsilon_sweep" && r.subject.rfind("CL@", 0) == 0)
                    sweep.emplace_back(parse_double(r.subject.substr(3), "epsilon"), r.value);
            std::sort(sweep.begin(), sweep.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            if (!present(d, {{"AT/CL curve", at}, {"ST/CL curve", st}})) return false;
            d = "AT " + fixed(*at, 3) + " ST " + fixed(*st, 3) + "; sweep";
            bool monotone = sweep.size() >= 2;
            for (std::size_t i = 0; i < sweep.size(); ++i) {
                d += " " + (sweep[i].second ? fixed(*sweep[i].second, 3) : std::string("NA"));
                if (!sweep[i].second) monotone = false;
                else if (i > 0 && sweep[i - 1].second && *sweep[i].second < *sweep[i - 1].second - 0.02)
                    monotone = false;
            }
            if (sweep.size() < 2) d += " missing";
            return *at >= *st + 0.2 && monotone;
        });

    run(9, "upper-third cross-model CKA (adv-adv): AT(CL~SL) >= ST(CL~SL) + 0.1", [&](std::uint64_t s, std::string& d) {
        auto at = q.summary("cross_upper_third", "AT/CL~SL", s), st = q.summary("cross_upper_third", "ST/CL~SL", s);
        if (!present(d, {{"AT/CL~SL", at}, {"ST/CL~SL", st}})) return false;
        d = "AT " + fixed(*at, 3) + " ST " + fixed(*st, 3);
        return *at >= *st + 0.1;
    });

    run(10, "AT(CL): Threat Model-II robust accuracy >= Threat Model-I + 10 points",
        [&](std::uint64_t s, std::string& d) {
            auto tm1 = q.robust(Scenario::AT, Scheme::CL, I, s), tm2 = q.robust(Scenario::AT, Scheme::CL, ThreatModel::II, s);
            if (!present(d, {{"TM-I", tm1}, {"TM-II", tm2}})) return false;
            d = "TM-I " + pct(*tm1) + " TM-II " + pct(*tm2);
            return *tm2 >= *tm1 + 0.10;
        });
    return out;
}

}  // namespace rcl
