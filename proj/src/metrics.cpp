#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "rmldp/error.hpp"
#include "rmldp/harness.hpp"

namespace rmldp {

double mape(std::span<const double> preds, std::span<const double> actuals) {
  if (preds.size() != actuals.size()) {
    throw ShapeError("mape: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(actuals.size()) + " actuals");
  }
  if (preds.empty()) throw DataError("mape: empty input");
  constexpr double kFloor = 1e-8;
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += std::abs(actuals[i] - preds[i]) / std::max(std::abs(actuals[i]), kFloor);
  }
  return 100.0 * total / static_cast<double>(preds.size());
}

double stat_baseline(std::span<const double> series, std::size_t t_c, const HorizonConfig& cfg,
                     std::size_t first) {
  if (t_c >= series.size()) throw DataError("stat_baseline: t_c outside the series");
  auto window_sum = [&](long lo, long hi) {
    double s = 0.0;
    for (long t = lo; t <= hi; ++t) s += series[static_cast<std::size_t>(t)];
    return s;
  };
  const long tc = static_cast<long>(t_c), f = static_cast<long>(cfg.horizon);
  const long lo_a = tc + static_cast<long>(cfg.gap) - static_cast<long>(cfg.season);
  const long hi_a = lo_a + f;
  double total = 0.0;
  int count = 0;
  if (lo_a >= static_cast<long>(first) && hi_a <= tc) {
    total += window_sum(lo_a, hi_a);
    ++count;
  }
  if (tc - f >= static_cast<long>(first)) {
    total += window_sum(tc - f, tc);
    ++count;
  }
  if (count == 0) throw DataError("stat_baseline: no history at t_c=" + std::to_string(t_c));
  return total / count;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("significance_test: unpaired inputs");
  if (a.size() < 2) throw DataError("significance_test: need at least two pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.n = n;
  r.mean_diff = mean;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

double significance_test(std::span<const double> a, std::span<const double> b) {
  return paired_t_test(a, b).p;
}

}  // namespace rmldp
