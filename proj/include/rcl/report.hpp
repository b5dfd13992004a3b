#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rcl/analysis.hpp"
#include "rcl/attacks.hpp"
#include "rcl/losses.hpp"
#include "rcl/training.hpp"

namespace rcl {

// 8-bit binary PGM (P5); v maps to round(255 v) clipped to [0, 255] and
// masked cells are 0.
std::string heatmap_pgm(const CKAMatrix& matrix);
// Viridis-coloured grid with layer-id axis labels; masked cells are hatched.
std::string heatmap_svg(const CKAMatrix& matrix, const std::string& title = "");

// Writes <stem>.pgm and <stem>.svg and returns both paths.
std::vector<std::filesystem::path> render_heatmap(const CKAMatrix& matrix, const std::filesystem::path& stem,
                                                  const std::string& title = "");

// Line chart of one or more series sharing an x axis.
struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<std::optional<double>> y;
};
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

struct ResultRow {
    Scenario scenario = Scenario::ST;
    Scheme scheme = Scheme::CL;
    ThreatModel threat_model = ThreatModel::I;
    double epsilon = 0.0;
    std::size_t steps = 0;
    double clean_accuracy = 0.0;
    std::optional<double> robust_accuracy;
    std::uint64_t seed = 0;
};
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Scalar CKA summaries written by the sweep, one per row of
/// "seed,measure,subject,value":
///   divergence_final  subject "<scenario>/<scheme>": final-layer clean-adv CKA
///   epsilon_sweep     subject "<scheme>@<train epsilon>": the same for a
///                     model trained at that epsilon (0 = ST)
///   cross_upper_third subject "<scenario>/<schemeA>~<schemeB>": mean CKA
///                     over the top third of layers of both models, each
///                     seeing inputs attacked against itself (adv-adv)
///   cross_upper_third_clean  the same on clean inputs
struct CkaSummaryRow {
    std::uint64_t seed = 0;
    std::string measure;
    std::string subject;
    std::optional<double> value;  // empty: masked
};
void write_cka_summary(const std::vector<CkaSummaryRow>& rows, const std::filesystem::path& path);
std::vector<CkaSummaryRow> read_cka_summary(const std::filesystem::path& path);

// Mean of the block formed by the last ceil(L / 3) rows and columns,
// skipping masked cells. Empty when every cell of the block is masked.
std::optional<double> upper_third_mean(const CKAMatrix& matrix);

/// Outcome of one directional check over the sweep seeds. A claim holds when
/// it holds for at least `required` seeds; a seed with missing data fails.
struct CriterionOutcome {
    int id = 0;
    std::string claim;
    std::vector<std::uint64_t> seeds;
    std::vector<bool> seed_pass;
    std::vector<std::string> seed_detail;
    std::size_t required = 0;
    bool pass = false;
};

// Directional checks 6 through 10 at evaluation epsilon `eps` (Threat Model-I
// unless stated). Seeds default to those found in the rows.
std::vector<CriterionOutcome> check_directional(const std::vector<ResultRow>& rows,
                                                const std::vector<CkaSummaryRow>& cka, double eps = 8.0 / 255.0);

std::string html_escape(const std::string& text);

}  // namespace rcl
