#include "codegraph/statlab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <boost/math/distributions/beta.hpp>

#include "codegraph/error.hpp"
#include "codegraph/parallel.hpp"
#include "codegraph/rng.hpp"

namespace codegraph {

namespace {

std::vector<double> sorted_descending_positive(std::span<const double> samples) {
  std::vector<double> s(samples.begin(), samples.end());
  for (double v : s)
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("Hill estimator needs positive finite samples");
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

double hill_sorted(const std::vector<double>& desc, std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::log(desc[i]);
  const double denom = sum / static_cast<double>(k) - std::log(desc[k]);
  if (!(denom > 0.0)) throw NumericError("Hill estimator undefined: top order statistics are equal");
  return 1.0 / denom;
}

}  // namespace

double hill_estimator(std::span<const double> samples, std::size_t k) {
  if (k < 1 || k >= samples.size()) throw DomainError("Hill estimator needs n > k >= 1");
  return hill_sorted(sorted_descending_positive(samples), k);
}

HillCurve hill_curve(std::span<const double> samples, std::size_t k_min, std::size_t k_max) {
  const std::size_t n = samples.size();
  if (n < 2) throw DomainError("Hill curve needs at least 2 samples");
  if (k_max == 0 || k_max > n - 1) k_max = n - 1;
  if (k_min < 1 || k_min > k_max) throw DomainError("invalid Hill k range");
  const auto desc = sorted_descending_positive(samples);
  HillCurve curve;
  double sum = 0.0;
  for (std::size_t i = 0; i < k_min - 1; ++i) sum += std::log(desc[i]);
  for (std::size_t k = k_min; k <= k_max; ++k) {
    sum += std::log(desc[k - 1]);
    const double denom = sum / static_cast<double>(k) - std::log(desc[k]);
    if (!(denom > 0.0)) throw NumericError("Hill estimator undefined: top order statistics are equal");
    curve.ks.push_back(k);
    curve.estimates.push_back(1.0 / denom);
  }
  return curve;
}

double hill_plateau(const HillCurve& curve, std::size_t n) {
  const auto lo = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)));
  const auto hi = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(n)));
  std::vector<double> window;
  for (std::size_t i = 0; i < curve.ks.size(); ++i)
    if (curve.ks[i] >= lo && curve.ks[i] <= hi) window.push_back(curve.estimates[i]);
  if (window.empty()) throw DomainError("plateau window is empty");
  std::sort(window.begin(), window.end());
  const std::size_t m = window.size();
  return m % 2 ? window[m / 2] : 0.5 * (window[m / 2 - 1] + window[m / 2]);
}

PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("x and y differ in length");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) continue;
    if (!(x[i] > 0.0)) throw DomainError("power-law abscissa must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  if (lx.size() < 3) throw DomainError("power-law fit needs at least 3 positive points");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw DomainError("power-law fit needs distinct abscissae");
  const double slope = sxy / sxx;
  PowerLawFit fit;
  fit.alpha = -slope;
  fit.intercept = my - slope * mx;
  fit.points = lx.size();
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const double r = ly[i] - (fit.intercept + slope * lx[i]);
      ss_res += r * r;
    }
    fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return fit;
}

std::vector<double> mean_growth_rates(std::span<const MutualSimilarityRecord> records) {
  if (records.empty()) throw DomainError("no records");
  const std::size_t len = records.front().size();
  if (len < 2) throw DomainError("records need at least 2 entries");
  std::vector<double> mean(len - 1, 0.0);
  for (const auto& r : records) {
    if (r.size() != len) throw DomainError("records differ in length");
    const auto g = growth_rates(r);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g.taus[i];
  }
  for (auto& m : mean) m /= static_cast<double>(records.size());
  return mean;
}

double SpacingSamples::mean(std::size_t i) const {
  double s = 0.0;
  for (std::size_t r = 0; r < replicates; ++r) s += at(r, i);
  return s / static_cast<double>(replicates);
}

double SpacingSamples::variance(std::size_t i) const {
  const double m = mean(i);
  double s = 0.0;
  for (std::size_t r = 0; r < replicates; ++r) s += (at(r, i) - m) * (at(r, i) - m);
  return s / static_cast<double>(replicates - 1);
}

double SpacingSamples::correlation(std::size_t i, std::size_t j) const {
  const double mi = mean(i), mj = mean(j);
  double sij = 0.0, sii = 0.0, sjj = 0.0;
  for (std::size_t r = 0; r < replicates; ++r) {
    const double a = at(r, i) - mi, b = at(r, j) - mj;
    sij += a * b;
    sii += a * a;
    sjj += b * b;
  }
  return sij / std::sqrt(sii * sjj);
}

SpacingSamples sample_beta_order_stats(double alpha0, std::size_t omega, std::size_t replicates, std::uint64_t seed,
                                       unsigned threads) {
  if (!(alpha0 > 0.0)) throw DomainError("alpha0 must be positive");
  if (omega < 2) throw DomainError("omega must be at least 2");
  if (replicates < 2) throw DomainError("need at least 2 replicates");
  SpacingSamples out;
  out.alpha0 = alpha0;
  out.omega = omega;
  out.replicates = replicates;
  out.seed = seed;
  out.spacings.resize(replicates * (omega - 1));
  parallel_for(
      replicates,
      [&](std::size_t r) {
        CounterRng rng(seed, r);
        std::vector<double> y(omega);
        for (auto& v : y) v = std::pow(rng.uniform(), 1.0 / alpha0);
        std::sort(y.begin(), y.end());
        for (std::size_t i = 1; i < omega; ++i)
          out.spacings[r * (omega - 1) + (i - 1)] = std::log(y[i]) - std::log(y[i - 1]);
      },
      threads);
  return out;
}

PoissonToyResult poisson_toy_model(double intensity, double domain, std::size_t d,
                                   const std::vector<std::vector<double>>& references, std::uint64_t seed) {
  if (!(intensity > 0.0)) throw DomainError("intensity must be positive");
  if (!(domain > 0.0)) throw DomainError("domain size must be positive");
  if (d < 1) throw DomainError("dimension must be at least 1");
  CounterRng rng(seed, 0x9015501ULL);
  const double mean = intensity * std::pow(domain, static_cast<double>(d));
  const std::uint64_t n = poisson_draw(rng, mean);
  if (n < 10) throw DomainError("fewer than 10 points sampled");
  std::vector<double> pts(n * d);
  for (auto& v : pts) v = rng.uniform(0.0, domain);

  PoissonToyResult result;
  result.points = n;
  result.seed = seed;
  for (const auto& ref : references) {
    if (ref.size() != d) throw DomainError("reference point has the wrong dimension");
    PoissonReference pr;
    pr.point = ref;
    pr.inverse_distances.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += (pts[i * d + a] - ref[a]) * (pts[i * d + a] - ref[a]);
      if (s > 0.0) pr.inverse_distances.push_back(1.0 / std::sqrt(s));
    }
    pr.curve = hill_curve(pr.inverse_distances, 1, 0);
    pr.plateau = hill_plateau(pr.curve, pr.inverse_distances.size());
    result.references.push_back(std::move(pr));
  }
  return result;
}

QQResult qq_beta(std::span<const double> ratios, double alpha0, double beta) {
  if (ratios.empty()) throw DomainError("no ratios");
  if (!(alpha0 > 0.0) || !(beta > 0.0)) throw DomainError("Beta parameters must be positive");
  std::vector<double> x(ratios.begin(), ratios.end());
  for (double v : x)
    if (!(v > 0.0 && v <= 1.0)) throw DomainError("ratios must lie in (0, 1]");
  std::sort(x.begin(), x.end());
  const boost::math::beta_distribution<double> dist(alpha0, beta);
  const double n = static_cast<double>(x.size());
  QQResult out;
  out.points.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / n;
    out.points.push_back({x[i], boost::math::quantile(dist, p)});
    const double f = boost::math::cdf(dist, x[i]);
    out.ks = std::max({out.ks, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return out;
}

double fit_beta_alpha(std::span<const double> ratios) {
  constexpr double kCeiling = 1.0 - 1e-12;
  if (ratios.size() < 2) throw DomainError("need at least 2 ratios");
  double sum = 0.0;
  bool any_below = false;
  for (double z : ratios) {
    if (!(z > 0.0)) throw DomainError("ratios must be positive");
    if (z < kCeiling) any_below = true;
    sum += std::log(std::min(z, kCeiling));
  }
  if (!any_below) throw NumericError("all ratios at 1: alpha diverges");
  return -static_cast<double>(ratios.size()) / sum;
}

}  // namespace codegraph
