#include "codegraph/pseudomask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "codegraph/error.hpp"
#include "codegraph/percentile.hpp"

namespace codegraph {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("normal quantile needs q in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (q < low) {
    const double t = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else if (q <= 1.0 - low) {
    const double u = q - 0.5;
    const double r = u * u;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double t = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - q;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

std::vector<double> truncate_scores(std::span<const double> scores, double q_fit) {
  if (scores.empty()) throw DomainError("no scores to truncate");
  if (!(q_fit > 0.0 && q_fit <= 1.0)) throw DomainError("q_fit must be in (0, 1]");
  const double cut = percentile(std::vector<double>(scores.begin(), scores.end()), 100.0 * q_fit);
  std::vector<double> out;
  for (double s : scores)
    if (s <= cut) out.push_back(s);
  return out;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

struct TruncatedTail {
  double mass;    // P(X > T)
  double first;   // E[X | X > T]
  double second;  // E[X^2 | X > T]
};

TruncatedTail upper_tail(double mean, double var, double t) {
  const double sd = std::sqrt(var);
  const double beta = (t - mean) / sd;
  const double mass = 0.5 * std::erfc(beta / std::numbers::sqrt2);
  double lambda;  // inverse Mills ratio
  if (mass > 1e-300) {
    lambda = std::exp(-0.5 * beta * beta) / std::sqrt(2.0 * std::numbers::pi) / mass;
  } else {
    lambda = beta + 1.0 / beta;
  }
  const double ez = lambda;
  const double ez2 = 1.0 + beta * lambda;
  return {mass, mean + sd * ez, mean * mean + 2.0 * mean * sd * ez + var * ez2};
}

// EM in standardised coordinates. truncation is the standardised truncation
// point, or NaN for the plain model.
GmmComponents run_em(const std::vector<double>& z, GmmComponents init, double truncation, double var_floor,
                     const GmmOptions& options) {
  const std::size_t n = z.size();
  const std::size_t k = init.means.size();
  const bool truncated = !std::isnan(truncation);
  GmmComponents cur = std::move(init);
  std::vector<double> logp(k), resp(k);

  auto log_likelihood = [&](const GmmComponents& g) {
    double ll = 0.0;
    for (double x : z) {
      for (std::size_t j = 0; j < k; ++j) logp[j] = std::log(g.weights[j]) + log_normal_pdf(x, g.means[j], g.variances[j]);
      ll += log_sum_exp(logp);
    }
    if (truncated) {
      double f = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        f += g.weights[j] * (1.0 - upper_tail(g.means[j], g.variances[j], truncation).mass);
      ll -= static_cast<double>(n) * std::log(std::max(f, 1e-300));
    }
    return ll;
  };

  double ll = log_likelihood(cur);
  cur.converged = false;
  for (int it = 1; it <= options.max_iterations; ++it) {
    std::vector<double> n_j(k, 0.0), s1(k, 0.0), s2(k, 0.0);
    for (double x : z) {
      for (std::size_t j = 0; j < k; ++j) logp[j] = std::log(cur.weights[j]) + log_normal_pdf(x, cur.means[j], cur.variances[j]);
      const double lse = log_sum_exp(logp);
      for (std::size_t j = 0; j < k; ++j) {
        const double r = std::exp(logp[j] - lse);
        n_j[j] += r;
        s1[j] += r * x;
        s2[j] += r * x * x;
      }
    }
    double total = static_cast<double>(n);
    if (truncated) {
      std::vector<TruncatedTail> tails(k);
      double f = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        tails[j] = upper_tail(cur.means[j], cur.variances[j], truncation);
        f += cur.weights[j] * (1.0 - tails[j].mass);
      }
      f = std::max(f, 1e-300);
      for (std::size_t j = 0; j < k; ++j) {
        const double missing = static_cast<double>(n) * cur.weights[j] * tails[j].mass / f;
        n_j[j] += missing;
        s1[j] += missing * tails[j].first;
        s2[j] += missing * tails[j].second;
        total += missing;
      }
    }
    GmmComponents next;
    next.weights.resize(k);
    next.means.resize(k);
    next.variances.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double nj = std::max(n_j[j], 1e-300);
      next.weights[j] = std::max(n_j[j] / total, 1e-300);
      next.means[j] = s1[j] / nj;
      next.variances[j] = std::max(s2[j] / nj - next.means[j] * next.means[j], var_floor);
    }
    const double wsum = std::accumulate(next.weights.begin(), next.weights.end(), 0.0);
    for (auto& w : next.weights) w /= wsum;
    const double next_ll = log_likelihood(next);
    next.iterations = it;
    if (!std::isfinite(next_ll)) break;
    const bool done = std::abs(next_ll - ll) / static_cast<double>(n) < options.tolerance;
    cur = std::move(next);
    ll = next_ll;
    if (done) {
      cur.converged = true;
      break;
    }
  }
  cur.log_likelihood = ll;
  return cur;
}

}  // namespace

GmmFit fit_gmm(std::span<const double> fitting_set, std::optional<double> truncation, const GmmOptions& options) {
  const std::size_t n = fitting_set.size();
  if (n < 20) throw DomainError("GMM fit needs at least 20 samples");
  for (double s : fitting_set)
    if (!std::isfinite(s)) throw DataError("non-finite score");
  const auto [lo_it, hi_it] = std::minmax_element(fitting_set.begin(), fitting_set.end());
  GmmFit fit;
  fit.center = *lo_it;
  const double range = *hi_it - *lo_it;
  fit.scale = range > 0.0 ? range : 1.0;

  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (fitting_set[i] - fit.center) / fit.scale;
  const double var_floor = 1e-12;
  double t = std::nan("");
  if (truncation && options.mode == EmMode::kTruncated && range > 0.0) {
    fit.truncation = truncation;
    t = (*truncation - fit.center) / fit.scale;
  }

  const double ln_n = std::log(static_cast<double>(n));
  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end());
  auto moments = [&](std::size_t b, std::size_t e) {
    double m = 0.0;
    for (std::size_t i = b; i < e; ++i) m += sorted[i];
    m /= static_cast<double>(e - b);
    double v = 0.0;
    for (std::size_t i = b; i < e; ++i) v += (sorted[i] - m) * (sorted[i] - m);
    return std::pair{m, std::max(v / static_cast<double>(e - b), var_floor)};
  };

  std::array<GmmComponents, 2> models;
  {
    const auto [m, v] = moments(0, n);
    GmmComponents init{{1.0}, {m}, {v}};
    models[0] = run_em(z, init, t, var_floor, options);
  }
  {
    const std::size_t half = n / 2;
    const auto [m0, v0] = moments(0, half);
    const auto [m1, v1] = moments(half, n);
    GmmComponents init{{0.5, 0.5}, {m0, m1}, {v0, v1}};
    models[1] = run_em(z, init, t, var_floor, options);
  }
  const double jacobian = static_cast<double>(n) * std::log(fit.scale);
  for (int k = 0; k < 2; ++k) {
    models[k].log_likelihood -= jacobian;
    models[k].bic = -2.0 * models[k].log_likelihood + (3.0 * (k + 1) - 1.0) * ln_n;
    fit.bic[k] = models[k].bic;
  }
  const int best = (range > 0.0 && models[1].bic < models[0].bic) ? 1 : 0;
  const auto& m = models[best];
  fit.k = best + 1;
  fit.converged = m.converged;
  fit.weights = m.weights;
  for (std::size_t j = 0; j < m.means.size(); ++j) {
    fit.means.push_back(m.means[j]);
    fit.variances.push_back(m.variances[j]);
  }
  return fit;
}

ThresholdDecision adaptive_cutoff(const GmmFit& fit, double q_comp, double q_fit) {
  if (!(q_comp > 0.0 && q_comp < 1.0)) throw DomainError("q_comp must be in (0, 1)");
  ThresholdDecision d;
  d.q_fit = q_fit;
  d.q_comp = q_comp;
  d.center = fit.center;
  d.scale = fit.scale;
  const double zq = normal_quantile(q_comp);
  d.standardized_cutoff = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < fit.means.size(); ++j) {
    const double tz = fit.means[j] + std::sqrt(fit.variances[j]) * zq;
    d.standardized_cutoff = std::max(d.standardized_cutoff, tz);
    d.thresholds.push_back(fit.center + fit.scale * tz);
  }
  d.cutoff = fit.center + fit.scale * d.standardized_cutoff;
  return d;
}

std::vector<std::uint8_t> binarize(std::span<const double> map, double cutoff) {
  std::vector<std::uint8_t> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] >= cutoff ? 1 : 0;
  return out;
}

std::vector<std::uint8_t> binarize(std::span<const double> map, const ThresholdDecision& decision) {
  std::vector<std::uint8_t> out(map.size());
  for (std::size_t i = 0; i < map.size(); ++i)
    out[i] = (map[i] - decision.center) / decision.scale >= decision.standardized_cutoff ? 1 : 0;
  return out;
}

PseudoMaskResult pseudo_mask(std::span<const double> scores, double q_fit, double q_comp, const GmmOptions& options) {
  PseudoMaskResult r;
  const auto fitting = truncate_scores(scores, q_fit);
  std::optional<double> truncation;
  if (q_fit < 1.0) truncation = percentile(std::vector<double>(scores.begin(), scores.end()), 100.0 * q_fit);
  r.fit = fit_gmm(fitting, truncation, options);
  r.decision = adaptive_cutoff(r.fit, q_comp, q_fit);
  r.mask = binarize(scores, r.decision);
  return r;
}

}  // namespace codegraph
