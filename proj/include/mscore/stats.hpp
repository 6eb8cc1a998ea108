#pragma once

// Estimators and tests: OLS with classical standard errors, the Martingale
// Score, Student-t tail probabilities, Brier score, Pearson/Spearman
// correlation and the dummy-coded factor-attribution regression.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mscore/core.hpp"

namespace mscore::stats {

struct OlsResult {
  double slope = 0.0;
  double intercept = 0.0;
  double se_slope = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  double residual_variance = 0.0;
};

/// Simple linear regression ys = intercept + slope * xs.
///
/// Standard errors are the classical homoskedastic ones with df = n - 2.
/// A fit with zero residuals has se_slope = 0; it reports t = 0, p = 1 when
/// the slope is exactly zero and t = +-inf, p = 0 otherwise.
OlsResult ols_fit(std::span<const double> xs, std::span<const double> ys);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom, via the regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
double incomplete_beta(double a, double b, double x, double y);

inline constexpr double kSignificanceLevel = 0.05;

struct MartingaleReport {
  std::string setup_digest;
  OlsResult ols;
  bool significant = false;
  std::size_t pair_count = 0;
  PairingMode mode = PairingMode::per_step;

  double score() const { return ols.slope; }
};

/// Martingale Score: OLS slope of delta_b on b_prior over pairs from one setup.
MartingaleReport martingale_score(std::span<const BeliefPair> pairs, PairingMode mode);

/// Table-style cell text: signed, four decimals, "*" suffix when p < 0.05.
std::string format_score_cell(double slope, double p_value);

struct SelfTestResult {
  bool passed = false;
  double slope = 0.0;
  double se_slope = 0.0;
  std::size_t n = 0;
  double multiplier = 3.0;
};

/// Passes iff |slope| <= multiplier * se_slope.
SelfTestResult ols_self_test_martingale(std::span<const BeliefPair> pairs, double multiplier = 3.0);

double brier_score(std::span<const double> predictions, std::span<const int> outcomes);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

Correlation pearson(std::span<const double> xs, std::span<const double> ys);
Correlation spearman(std::span<const double> xs, std::span<const double> ys);

/// 1-based average ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct AgreementReport {
  std::string judge_a;
  std::string judge_b;
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  double p_value_r = 1.0;
  double p_value_rho = 1.0;
  std::size_t n_samples = 0;
};

AgreementReport agreement(std::string judge_a, std::string judge_b, std::span<const double> a,
                          std::span<const double> b);

/// Markdown row in the style of a judge-agreement table:
/// | judge | samples | r | rho | p |
std::string format_agreement_row(const AgreementReport& report);

// ---- factor attribution ----------------------------------------------------

enum class Factor { domain, technique, model, prompt };

std::string_view to_string(Factor f);
Factor parse_factor(std::string_view s);
std::string factor_level(const Setup& setup, Factor f);

struct AttributionTerm {
  std::string factor;
  std::string level;
  double coefficient = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct AttributionReport {
  std::map<std::string, std::string> baseline_levels;
  AttributionTerm slope_baseline;      // b_prior main effect at all baselines
  AttributionTerm intercept_baseline;  // intercept at all baselines
  std::vector<AttributionTerm> slope_terms;      // dummy x b_prior interactions
  std::vector<AttributionTerm> intercept_terms;  // dummy main effects
  std::size_t n = 0;
};

inline constexpr double kNormalCi95 = 1.96;

/// Regresses delta_b on [1, dummies, b_prior, dummies x b_prior].
///
/// Levels of each factor are those observed in the data unless
/// `declared_levels` lists them; a declared level without data produces an
/// all-zero column and is reported as collinear. CIs are coefficient +- 1.96 SE.
AttributionReport attribute_factors(
    std::span<const std::pair<BeliefPair, Setup>> data,
    const std::map<Factor, std::string>& baselines,
    const std::map<Factor, std::vector<std::string>>& declared_levels = {});

// ---- serialization -----------------------------------------------------------

nlohmann::ordered_json to_json(const OlsResult& r);
nlohmann::ordered_json to_json(const MartingaleReport& r);
nlohmann::ordered_json to_json(const AttributionReport& r);
nlohmann::ordered_json to_json(const AgreementReport& r);

/// Pair table CSV: header b_prior,delta_b,problem_id,setup_digest,step_index.
/// Reals are written with 17 significant digits so a reload is bit-exact.
/// A nonempty run_id adds a trailing run_id column.
void write_pairs_csv(const std::filesystem::path& path, std::span<const BeliefPair> pairs,
                     std::string_view run_id = {});
std::vector<BeliefPair> read_pairs_csv(const std::filesystem::path& path);

}  // namespace mscore::stats
