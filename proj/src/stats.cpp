#include "echogrid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace echogrid::stats {

namespace {

constexpr double kBetaTolerance = 1e-15;
constexpr int kBetaMaxIterations = 10000;
// Sums of squares below this fraction of the total are treated as zero, so
// rounding residue never turns into a spurious F ratio.
constexpr double kZeroFraction = 1e-12;

double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kBetaTolerance) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
  if (std::isnan(x)) throw std::invalid_argument("incomplete beta at NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double F, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) throw std::invalid_argument("F distribution needs positive degrees of freedom");
  if (std::isnan(F)) throw std::invalid_argument("F is NaN");
  if (F <= 0.0) return 0.0;
  if (std::isinf(F)) return 1.0;
  return incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * F / (df1 * F + df2));
}

double f_sf(double F, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) throw std::invalid_argument("F distribution needs positive degrees of freedom");
  if (std::isnan(F)) throw std::invalid_argument("F is NaN");
  if (F <= 0.0) return 1.0;
  if (std::isinf(F)) return 0.0;
  return incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F));
}

double t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t distribution needs positive degrees of freedom");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// ---------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile probability outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

BoxplotSummary boxplot_summary(std::span<const double> data) {
  if (data.empty()) throw std::invalid_argument("boxplot of empty data");
  std::vector<double> v(data.begin(), data.end());
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
    throw std::invalid_argument("boxplot data must be finite");
  std::sort(v.begin(), v.end());
  BoxplotSummary s;
  s.n = v.size();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  const double iqr = s.q3 - s.q1;
  const double low_fence = s.q1 - 1.5 * iqr;
  const double high_fence = s.q3 + 1.5 * iqr;
  s.whisker_low = std::numeric_limits<double>::infinity();
  s.whisker_high = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (x < low_fence || x > high_fence) {
      s.outliers.push_back(x);
    } else {
      s.whisker_low = std::min(s.whisker_low, x);
      s.whisker_high = std::max(s.whisker_high, x);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

namespace {

/// Orthonormal Helmert contrasts, k x (k - 1).
Eigen::MatrixXd helmert(int k) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, k - 1);
  for (int j = 1; j < k; ++j) {
    const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
    for (int i = 0; i < j; ++i) c(i, j - 1) = 1.0 / norm;
    c(j, j - 1) = -static_cast<double>(j) / norm;
  }
  return c;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
  Eigen::MatrixXd out(p.rows() * q.rows(), p.cols() * q.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) out.block(i * q.rows(), j * q.cols(), q.rows(), q.cols()) = p(i, j) * q;
  return out;
}

double total_sum_of_squares(const Eigen::Ref<const Eigen::MatrixXd>& y) {
  return (y.array() - y.mean()).square().sum();
}

void require_complete(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.rows() < 2) throw DesignError("repeated-measures ANOVA needs at least 2 subjects");
  if (!data.allFinite()) throw DesignError("incomplete matrix: every subject needs a finite value in every condition");
}

AnovaResult finish(std::string effect, double ss_effect, double ss_error, double df1, double df2, double scale,
                   std::optional<double> epsilon) {
  AnovaResult r;
  r.effect = std::move(effect);
  const double zero = kZeroFraction * scale;
  r.ss_effect = ss_effect <= zero ? 0.0 : ss_effect;
  r.ss_error = ss_error <= zero ? 0.0 : ss_error;
  r.epsilon = epsilon;
  const double e = epsilon.value_or(1.0);
  r.df1 = e * df1;
  r.df2 = e * df2;
  if (r.ss_effect == 0.0) {
    r.F = 0.0;
    r.p = 1.0;
    return r;
  }
  if (r.ss_error == 0.0) throw DegenerateError("effect '" + r.effect + "' has zero error variance");
  r.F = (r.ss_effect / df1) / (r.ss_error / df2);
  r.p = f_sf(r.F, r.df1, r.df2);
  return r;
}

/// Univariate test of one within-subject effect from its orthonormal contrast scores.
AnovaResult rm_effect(std::string effect, const Eigen::MatrixXd& scores, double scale) {
  const auto n = static_cast<double>(scores.rows());
  const auto q = static_cast<double>(scores.cols());
  const Eigen::RowVectorXd mean = scores.colwise().mean();
  const double ss_effect = n * mean.squaredNorm();
  const double ss_error = (scores.rowwise() - mean).squaredNorm();
  // Rounding residue in an error term of zero would otherwise steer epsilon.
  const double eps = ss_error <= kZeroFraction * scale ? 1.0 : greenhouse_geisser(scores);
  return finish(std::move(effect), ss_effect, ss_error, q, q * (n - 1.0), scale, eps);
}

}  // namespace

double greenhouse_geisser(const Eigen::Ref<const Eigen::MatrixXd>& scores) {
  const auto q = static_cast<double>(scores.cols());
  if (scores.rows() < 2 || scores.cols() < 1) throw std::invalid_argument("epsilon needs at least 2 rows");
  const Eigen::MatrixXd centered = scores.rowwise() - scores.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(scores.rows() - 1);
  const double tr = cov.trace();
  const double tr_sq = cov.squaredNorm();  // trace(cov^2) for a symmetric matrix
  if (tr_sq <= 0.0) return 1.0;
  return std::clamp(tr * tr / (q * tr_sq), 1.0 / q, 1.0);
}

AnovaResult anova_rm_one(const Eigen::Ref<const Eigen::MatrixXd>& data, std::string effect) {
  require_complete(data);
  if (data.cols() < 2) throw DesignError("repeated-measures ANOVA needs at least 2 conditions");
  const Eigen::MatrixXd scores = data * helmert(static_cast<int>(data.cols()));
  return rm_effect(std::move(effect), scores, total_sum_of_squares(data));
}

std::vector<AnovaResult> anova_rm_two(const Eigen::Ref<const Eigen::MatrixXd>& data, int a, int b,
                                      const std::string& name_a, const std::string& name_b) {
  require_complete(data);
  if (a < 2 || b < 2) throw DesignError("two-factor ANOVA needs at least 2 levels per factor");
  if (data.cols() != static_cast<Eigen::Index>(a) * b)
    throw DesignError("unbalanced design: expected " + std::to_string(a * b) + " cells per subject, got " +
                      std::to_string(data.cols()));
  const Eigen::MatrixXd ca = helmert(a);
  const Eigen::MatrixXd cb = helmert(b);
  const Eigen::VectorXd ua = Eigen::VectorXd::Constant(a, 1.0 / std::sqrt(double(a)));
  const Eigen::VectorXd ub = Eigen::VectorXd::Constant(b, 1.0 / std::sqrt(double(b)));
  const Eigen::MatrixXd la = kron(ca, ub);
  const Eigen::MatrixXd lb = kron(ua, cb);
  const Eigen::MatrixXd lab = kron(ca, cb);
  const double scale = total_sum_of_squares(data);
  return {rm_effect(name_a, data * la, scale), rm_effect(name_b, data * lb, scale),
          rm_effect(name_a + " x " + name_b, data * lab, scale)};
}

namespace {

std::vector<int> dense_levels(std::span<const int> raw, int& count) {
  std::map<int, int> index;
  for (int v : raw) index.emplace(v, 0);
  int next = 0;
  for (auto& [level, i] : index) i = next++;
  count = next;
  std::vector<int> out;
  out.reserve(raw.size());
  for (int v : raw) out.push_back(index.at(v));
  return out;
}

// Sum-to-zero coding of one factor, levels - 1 columns.
Eigen::MatrixXd effect_code(const std::vector<int>& level, int levels) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(level.size()), levels - 1);
  for (std::size_t r = 0; r < level.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    if (level[r] == levels - 1) x.row(row).setConstant(-1.0);
    else x(row, level[r]) = 1.0;
  }
  return x;
}

double residual_ss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.cols() == 0) return y.squaredNorm();
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  return (y - x * beta).squaredNorm();
}

Eigen::MatrixXd hcat(const Eigen::MatrixXd& l, const Eigen::MatrixXd& r) {
  Eigen::MatrixXd out(l.rows(), l.cols() + r.cols());
  out << l, r;
  return out;
}

}  // namespace

std::vector<AnovaResult> anova_between_two(std::span<const double> values, std::span<const int> level_a,
                                           std::span<const int> level_b, const std::string& name_a,
                                           const std::string& name_b) {
  if (values.size() != level_a.size() || values.size() != level_b.size())
    throw std::invalid_argument("values and factor levels differ in length");
  int a = 0, b = 0;
  const std::vector<int> ia = dense_levels(level_a, a);
  const std::vector<int> ib = dense_levels(level_b, b);
  if (a < 2 || b < 2) throw DesignError("two-factor ANOVA needs at least 2 levels per factor");
  const auto n = static_cast<Eigen::Index>(values.size());
  if (n <= static_cast<Eigen::Index>(a) * b) throw DesignError("between-subjects ANOVA needs more observations than cells");

  std::vector<double> cell_sum(static_cast<std::size_t>(a * b), 0.0);
  std::vector<int> cell_n(static_cast<std::size_t>(a * b), 0);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double v = values[static_cast<std::size_t>(r)];
    if (!std::isfinite(v)) throw DataError("observation " + std::to_string(r) + " is not finite");
    const auto c = static_cast<std::size_t>(ia[static_cast<std::size_t>(r)] * b + ib[static_cast<std::size_t>(r)]);
    cell_sum[c] += v;
    ++cell_n[c];
    y(r) = v;
  }
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      if (cell_n[static_cast<std::size_t>(i * b + j)] == 0)
        throw DesignError("empty cell (" + name_a + " level " + std::to_string(i) + ", " + name_b + " level " +
                          std::to_string(j) + ")");

  y.array() -= y.mean();
  double rss_full = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto c = static_cast<std::size_t>(ia[static_cast<std::size_t>(r)] * b + ib[static_cast<std::size_t>(r)]);
    const double d = values[static_cast<std::size_t>(r)] - cell_sum[c] / cell_n[c];
    rss_full += d * d;
  }

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
  const Eigen::MatrixXd xa = effect_code(ia, a);
  const Eigen::MatrixXd xb = effect_code(ib, b);
  const double rss_a = residual_ss(hcat(ones, xa), y);
  const double rss_b = residual_ss(hcat(ones, xb), y);
  const double rss_ab = residual_ss(hcat(hcat(ones, xa), xb), y);
  const double scale = y.squaredNorm();

  const double df_err = static_cast<double>(n - static_cast<Eigen::Index>(a) * b);
  auto effect = [&](const std::string& name, double ss, double df) {
    return finish(name, std::max(ss, 0.0), rss_full, df, df_err, scale, std::nullopt);
  };
  return {effect(name_a, rss_b - rss_ab, a - 1.0), effect(name_b, rss_a - rss_ab, b - 1.0),
          effect(name_a + " x " + name_b, rss_ab - rss_full, (a - 1.0) * (b - 1.0))};
}

// ---------------------------------------------------------------------------

double pearson_p(double r, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("correlation needs df > 0");
  if (std::abs(r) >= 1.0) return 0.0;
  return t_two_sided(r * std::sqrt(df / (1.0 - r * r)), df);
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation series differ in length");
  if (x.size() < 3) throw DataError("correlation needs at least 3 pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("correlation of a constant series");
  CorrelationResult out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  out.df = n - 2.0;
  out.p = pearson_p(out.r, out.df);
  return out;
}

}  // namespace echogrid::stats
