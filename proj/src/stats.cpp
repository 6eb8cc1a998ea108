#include "mscore/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "mscore/csv.hpp"
#include "mscore/error.hpp"

namespace mscore::stats {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mean anchored at the first element: exact when every value is identical.
double anchored_mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x - v.front();
  return v.front() + acc / static_cast<double>(v.size());
}

void check_shapes(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::shape_mismatch, fmt::format("{} vs {} values", xs.size(), ys.size()));
  }
  if (xs.size() < 3) {
    throw Error(ErrorKind::insufficient_samples, fmt::format("n = {}, need at least 3", xs.size()));
  }
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  constexpr int max_iter = 100000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw Error(ErrorKind::degenerate_input,
              fmt::format("incomplete beta did not converge (a={}, b={}, x={})", a, b, x));
}

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

double incomplete_beta(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df >= 1.0)) throw Error(ErrorKind::invalid_dof, fmt::format("df = {}", df));
  if (std::isnan(t)) throw Error(ErrorKind::degenerate_input, "t is NaN");
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  if (t2 == 0.0) return 1.0;
  // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double denom = df + t2;
  const double p = incomplete_beta(df / 2.0, 0.5, df / denom, t2 / denom);
  return std::clamp(p, 0.0, 1.0);
}

OlsResult ols_fit(std::span<const double> xs, std::span<const double> ys) {
  check_shapes(xs, ys);
  const std::size_t n = xs.size();
  const double x_mean = anchored_mean(xs);
  const double y_mean = anchored_mean(ys);

  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - x_mean;
    sxx += dx * dx;
    sxy += dx * (ys[i] - y_mean);
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::degenerate_regressor, "regressor has zero variance");

  OlsResult r;
  r.n = n;
  r.slope = sxy / sxx;
  r.intercept = y_mean - r.slope * x_mean;

  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (ys[i] - y_mean) - r.slope * (xs[i] - x_mean);
    rss += e * e;
  }
  const double df = static_cast<double>(n - 2);
  r.residual_variance = rss / df;
  r.se_slope = std::sqrt(r.residual_variance / sxx);

  if (r.se_slope == 0.0) {
    if (r.slope == 0.0) {
      r.t_stat = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_stat = std::copysign(kInf, r.slope);
      r.p_value = 0.0;
    }
    return r;
  }
  r.t_stat = r.slope / r.se_slope;
  r.p_value = student_t_two_sided_p(r.t_stat, df);
  return r;
}

MartingaleReport martingale_score(std::span<const BeliefPair> pairs, PairingMode mode) {
  if (pairs.empty()) throw Error(ErrorKind::insufficient_samples, "no pairs");
  const std::string& digest = pairs.front().setup_digest;
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(pairs.size());
  ys.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.setup_digest != digest) {
      throw Error(ErrorKind::heterogeneous_pairs,
                  fmt::format("setups {} and {} mixed", digest, p.setup_digest));
    }
    xs.push_back(p.b_prior);
    ys.push_back(p.delta_b);
  }
  MartingaleReport report;
  report.setup_digest = digest;
  report.ols = ols_fit(xs, ys);
  report.significant = report.ols.p_value < kSignificanceLevel;
  report.pair_count = pairs.size();
  report.mode = mode;
  return report;
}

std::string format_score_cell(double slope, double p_value) {
  std::string text = fmt::format("{:+.4f}", slope);
  if (text == "-0.0000") text = "+0.0000";
  if (p_value < kSignificanceLevel) text += '*';
  return text;
}

SelfTestResult ols_self_test_martingale(std::span<const BeliefPair> pairs, double multiplier) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& p : pairs) {
    xs.push_back(p.b_prior);
    ys.push_back(p.delta_b);
  }
  const auto fit = ols_fit(xs, ys);
  SelfTestResult r;
  r.slope = fit.slope;
  r.se_slope = fit.se_slope;
  r.n = fit.n;
  r.multiplier = multiplier;
  r.passed = std::fabs(fit.slope) <= multiplier * fit.se_slope;
  return r;
}

double brier_score(std::span<const double> predictions, std::span<const int> outcomes) {
  if (predictions.size() != outcomes.size()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("{} predictions vs {} outcomes", predictions.size(), outcomes.size()));
  }
  if (predictions.empty()) throw Error(ErrorKind::no_samples);
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = predictions[i];
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::invalid_probability, fmt::format("{}", p));
    if (outcomes[i] != 0 && outcomes[i] != 1) {
      throw Error(ErrorKind::invalid_probability, fmt::format("outcome {}", outcomes[i]));
    }
    const double e = p - outcomes[i];
    sum += e * e;
  }
  return sum / static_cast<double>(predictions.size());
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
  check_shapes(xs, ys);
  const double x_mean = anchored_mean(xs);
  const double y_mean = anchored_mean(ys);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - x_mean;
    const double dy = ys[i] - y_mean;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(ErrorKind::degenerate_input, "zero variance");

  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::fabs(c.r) == 1.0) {
    c.p_value = 0.0;
    return c;
  }
  const double df = static_cast<double>(xs.size() - 2);
  const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
  c.p_value = student_t_two_sided_p(t, df);
  return c;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double rank = (static_cast<double>(i + j) + 2.0) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> xs, std::span<const double> ys) {
  check_shapes(xs, ys);
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

AgreementReport agreement(std::string judge_a, std::string judge_b, std::span<const double> a,
                          std::span<const double> b) {
  AgreementReport r;
  r.judge_a = std::move(judge_a);
  r.judge_b = std::move(judge_b);
  const auto pr = pearson(a, b);
  const auto sr = spearman(a, b);
  r.pearson_r = pr.r;
  r.p_value_r = pr.p_value;
  r.spearman_rho = sr.r;
  r.p_value_rho = sr.p_value;
  r.n_samples = a.size();
  return r;
}

namespace {

std::string thousands(std::size_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string format_p(double p) { return p < 0.001 ? "< 0.001" : fmt::format("{:.3f}", p); }

}  // namespace

std::string format_agreement_row(const AgreementReport& r) {
  return fmt::format("| {} | {} | {:.4f} | {:.4f} | {} |", r.judge_b, thousands(r.n_samples),
                     r.pearson_r, r.spearman_rho, format_p(std::max(r.p_value_r, r.p_value_rho)));
}

// ---- attribution ----------------------------------------------------------------

std::string_view to_string(Factor f) {
  switch (f) {
    case Factor::domain: return "domain";
    case Factor::technique: return "technique";
    case Factor::model: return "model";
    case Factor::prompt: return "prompt";
  }
  return "?";
}

Factor parse_factor(std::string_view s) {
  for (Factor f : {Factor::domain, Factor::technique, Factor::model, Factor::prompt}) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorKind::invalid_record, fmt::format("unknown factor '{}'", s));
}

std::string factor_level(const Setup& setup, Factor f) {
  switch (f) {
    case Factor::domain: return std::string(to_string(setup.domain_tag));
    case Factor::technique: return std::string(to_string(setup.technique));
    case Factor::model: return setup.model_id;
    case Factor::prompt: return std::string(to_string(setup.prompt_condition));
  }
  return {};
}

namespace {

struct Dummy {
  Factor factor;
  std::string level;
};

// Cholesky factor of a symmetric matrix whose diagonal is 1 (unit-scaled
// columns). Reports the first column whose pivot collapses.
Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& g, const std::vector<std::string>& names) {
  const auto p = g.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p, p);
  double largest = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    double pivot = g(j, j) - l.row(j).head(j).squaredNorm();
    largest = std::max(largest, pivot);
    if (!(pivot > 1e-10 * largest)) {
      throw Error(ErrorKind::collinear_factors,
                  fmt::format("column '{}' is a linear combination of earlier columns", names[j]));
    }
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < p; ++i) {
      l(i, j) = (g(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return l;
}

Eigen::VectorXd cholesky_solve(const Eigen::MatrixXd& l, const Eigen::VectorXd& rhs) {
  Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(rhs);
  return l.transpose().triangularView<Eigen::Upper>().solve(z);
}

}  // namespace

AttributionReport attribute_factors(std::span<const std::pair<BeliefPair, Setup>> data,
                                    const std::map<Factor, std::string>& baselines,
                                    const std::map<Factor, std::vector<std::string>>& declared_levels) {
  // Level sets per factor.
  std::vector<Dummy> dummies;
  for (const auto& [factor, baseline] : baselines) {
    std::set<std::string> observed;
    for (const auto& row : data) observed.insert(factor_level(row.second, factor));
    if (!observed.contains(baseline)) {
      throw Error(ErrorKind::baseline_absent,
                  fmt::format("{}={} has no observations", to_string(factor), baseline));
    }
    std::set<std::string> levels = observed;
    if (auto it = declared_levels.find(factor); it != declared_levels.end()) {
      levels = std::set<std::string>(it->second.begin(), it->second.end());
      for (const auto& lv : observed) {
        if (!levels.contains(lv)) {
          throw Error(ErrorKind::invalid_record,
                      fmt::format("{}={} observed but not declared", to_string(factor), lv));
        }
      }
    }
    for (const auto& lv : levels) {
      if (lv != baseline) dummies.push_back({factor, lv});
    }
  }

  const auto k = static_cast<Eigen::Index>(dummies.size());
  const Eigen::Index p = 2 * k + 2;
  const auto n = static_cast<Eigen::Index>(data.size());
  if (n < p + 2) {
    throw Error(ErrorKind::insufficient_samples,
                fmt::format("{} observations for {} design columns", n, p));
  }

  std::vector<std::string> names;
  names.push_back("intercept");
  for (const auto& d : dummies) names.push_back(fmt::format("{}={}", to_string(d.factor), d.level));
  names.push_back("b_prior");
  for (const auto& d : dummies) names.push_back(fmt::format("b_prior:{}={}", to_string(d.factor), d.level));

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [pair, setup] = data[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, k + 1) = pair.b_prior;
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& d = dummies[static_cast<std::size_t>(j)];
      const double on = factor_level(setup, d.factor) == d.level ? 1.0 : 0.0;
      x(i, 1 + j) = on;
      x(i, k + 2 + j) = on * pair.b_prior;
    }
    y(i) = pair.delta_b;
  }

  // Unit-scale columns, then solve the normal equations with two rounds of
  // iterative refinement.
  Eigen::VectorXd scale = x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale(j) == 0.0) {
      throw Error(ErrorKind::collinear_factors,
                  fmt::format("column '{}' is identically zero", names[static_cast<std::size_t>(j)]));
    }
  }
  const Eigen::MatrixXd z = x * scale.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::MatrixXd l = cholesky_or_throw(gram, names);

  Eigen::VectorXd beta_z = cholesky_solve(l, z.transpose() * y);
  for (int round = 0; round < 2; ++round) {
    Eigen::VectorXd resid = y - z * beta_z;
    beta_z += cholesky_solve(l, z.transpose() * resid);
  }
  const Eigen::VectorXd resid = y - z * beta_z;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(n - p);
  Eigen::MatrixXd gram_inv(p, p);
  for (Eigen::Index j = 0; j < p; ++j) gram_inv.col(j) = cholesky_solve(l, Eigen::VectorXd::Unit(p, j));

  auto term = [&](Eigen::Index j, std::string factor, std::string level) {
    const double coef = beta_z(j) / scale(j);
    const double se = std::sqrt(std::max(0.0, sigma2 * gram_inv(j, j))) / scale(j);
    return AttributionTerm{std::move(factor), std::move(level), coef, coef - kNormalCi95 * se,
                           coef + kNormalCi95 * se};
  };

  AttributionReport report;
  for (const auto& [factor, baseline] : baselines) report.baseline_levels[std::string(to_string(factor))] = baseline;
  report.intercept_baseline = term(0, "baseline", "intercept");
  report.slope_baseline = term(k + 1, "baseline", "b_prior");
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& d = dummies[static_cast<std::size_t>(j)];
    report.intercept_terms.push_back(term(1 + j, std::string(to_string(d.factor)), d.level));
    report.slope_terms.push_back(term(k + 2 + j, std::string(to_string(d.factor)), d.level));
  }
  report.n = data.size();
  return report;
}

// ---- serialization ---------------------------------------------------------------

namespace {

nlohmann::ordered_json real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::ordered_json to_json(const AttributionTerm& t) {
  return {{"factor", t.factor}, {"level", t.level}, {"coefficient", t.coefficient},
          {"ci_low", t.ci_low}, {"ci_high", t.ci_high}};
}

}  // namespace

nlohmann::ordered_json to_json(const OlsResult& r) {
  return {{"slope", r.slope},
          {"intercept", r.intercept},
          {"se_slope", r.se_slope},
          {"t_stat", real(r.t_stat)},
          {"p_value", r.p_value},
          {"n", r.n},
          {"residual_variance", r.residual_variance}};
}

nlohmann::ordered_json to_json(const MartingaleReport& r) {
  return {{"setup_digest", r.setup_digest},
          {"martingale_score", r.ols.slope},
          {"significant", r.significant},
          {"pair_count", r.pair_count},
          {"mode", to_string(r.mode)},
          {"ols", to_json(r.ols)}};
}

nlohmann::ordered_json to_json(const AttributionReport& r) {
  nlohmann::ordered_json slope = nlohmann::ordered_json::array();
  nlohmann::ordered_json intercept = nlohmann::ordered_json::array();
  for (const auto& t : r.slope_terms) slope.push_back(to_json(t));
  for (const auto& t : r.intercept_terms) intercept.push_back(to_json(t));
  nlohmann::ordered_json baselines = nlohmann::ordered_json::object();
  for (const auto& [f, lv] : r.baseline_levels) baselines[f] = lv;
  return {{"baseline_levels", baselines},
          {"slope_baseline", to_json(r.slope_baseline)},
          {"intercept_baseline", to_json(r.intercept_baseline)},
          {"slope_terms", slope},
          {"intercept_terms", intercept},
          {"n", r.n},
          {"ci", "coefficient +- 1.96 * SE (normal approximation)"}};
}

nlohmann::ordered_json to_json(const AgreementReport& r) {
  return {{"judge_a", r.judge_a},         {"judge_b", r.judge_b},
          {"pearson_r", r.pearson_r},     {"spearman_rho", r.spearman_rho},
          {"p_value_r", r.p_value_r},     {"p_value_rho", r.p_value_rho},
          {"n_samples", r.n_samples}};
}

void write_pairs_csv(const std::filesystem::path& path, std::span<const BeliefPair> pairs,
                     std::string_view run_id) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::unwritable_directory, path.string());
  out << "b_prior,delta_b,problem_id,setup_digest,step_index" << (run_id.empty() ? "" : ",run_id") << '\n';
  for (const auto& p : pairs) {
    csv::Row row{fmt::format("{:.17g}", p.b_prior), fmt::format("{:.17g}", p.delta_b), p.problem_id,
                 p.setup_digest, std::to_string(p.step_index)};
    if (!run_id.empty()) row.emplace_back(run_id);
    out << csv::join(row) << '\n';
  }
  if (!out) throw Error(ErrorKind::io_error, path.string());
}

std::vector<BeliefPair> read_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, fmt::format("cannot open {}", path.string()));
  csv::Table table(in);
  const char* cols[] = {"b_prior", "delta_b", "problem_id", "setup_digest", "step_index"};
  std::size_t idx[5];
  for (int i = 0; i < 5; ++i) {
    auto c = table.column(cols[i]);
    if (!c) throw Error(ErrorKind::malformed_row, fmt::format("missing column '{}'", cols[i]));
    idx[i] = *c;
  }
  std::vector<BeliefPair> pairs;
  while (auto row = table.next()) {
    try {
      BeliefPair p;
      p.b_prior = std::stod((*row)[idx[0]]);
      p.delta_b = std::stod((*row)[idx[1]]);
      p.problem_id = (*row)[idx[2]];
      p.setup_digest = (*row)[idx[3]];
      p.step_index = std::stoul((*row)[idx[4]]);
      pairs.push_back(std::move(p));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::malformed_row, fmt::format("row {}", table.row_number()));
    }
  }
  return pairs;
}

}  // namespace mscore::stats
