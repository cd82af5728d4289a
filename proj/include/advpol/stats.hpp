#pragma once

// Sample statistics for run comparison: SEM, one-sided Welch t-test, and
// fixed-grid learning-curve aggregation.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpol/io.hpp"

namespace advpol {

struct SampleGroup {
  std::string label;
  std::vector<double> values;
};

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_of: empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample variance with n-1 denominator.
inline double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("sample_variance: need n >= 2");
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sem(const SampleGroup& g) {
  if (g.values.size() < 2) {
    throw std::invalid_argument("sem: group '" + g.label + "' has n < 2");
  }
  return std::sqrt(sample_variance(g.values) / static_cast<double>(g.values.size()));
}

// ---------------------------------------------------------------------------
// Student t upper tail via the regularized incomplete beta function.
// ---------------------------------------------------------------------------

namespace detail {

// Continued fraction for the incomplete beta function (Lentz's method).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::betacf(a, b, x) / a;
  }
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log(1.0 - x) + a * std::log(x)) *
                   detail::betacf(b, a, 1.0 - x) / b;
}

// P(T > t) for Student t with df degrees of freedom.
inline double student_t_upper_tail(double t, double df) {
  if (df <= 0.0) throw std::invalid_argument("student_t_upper_tail: df must be positive");
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 0.5;  // one-sided, H1: mean(a) > mean(b)
};

// Welch unequal-variance t-test, one-sided for H1: mean(a) > mean(b), with
// Welch-Satterthwaite degrees of freedom.
inline WelchResult welch_t_one_sided(const SampleGroup& a, const SampleGroup& b) {
  const size_t na = a.values.size(), nb = b.values.size();
  if (na < 2 || nb < 2) {
    throw std::invalid_argument("welch_t_one_sided: both groups need n >= 2 (got " +
                                std::to_string(na) + ", " + std::to_string(nb) + ")");
  }
  const double ma = mean_of(a.values), mb = mean_of(b.values);
  const double va = sample_variance(a.values), vb = sample_variance(b.values);
  const double sa = va / static_cast<double>(na), sb = vb / static_cast<double>(nb);
  WelchResult r;
  if (sa + sb == 0.0) {
    // Degenerate: both groups constant.
    r.df = static_cast<double>(na + nb - 2);
    if (ma == mb) {
      r.t = 0.0;
      r.p = 0.5;
    } else {
      r.t = (ma > mb) ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
      r.p = (ma > mb) ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) /
         (sa * sa / static_cast<double>(na - 1) + sb * sb / static_cast<double>(nb - 1));
  r.p = student_t_upper_tail(r.t, r.df);
  return r;
}

// ---------------------------------------------------------------------------
// Learning-curve aggregation over a shared evaluation-step grid.
// ---------------------------------------------------------------------------

struct CurvePoint {
  std::int64_t step = 0;
  double value = 0.0;
};

using Curve = std::vector<CurvePoint>;

struct AggregatedPoint {
  std::int64_t step = 0;
  double mean = 0.0;
  double sem = std::numeric_limits<double>::quiet_NaN();  // NaN signals n < 2
  int n = 0;
};

inline std::vector<AggregatedPoint> aggregate_curves(const std::vector<Curve>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate_curves: no runs");
  const Curve& ref = runs.front();
  for (size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].size() != ref.size()) {
      throw std::runtime_error("aggregate_curves: run " + std::to_string(r) + " has " +
                               std::to_string(runs[r].size()) + " points, run 0 has " +
                               std::to_string(ref.size()));
    }
    for (size_t i = 0; i < ref.size(); ++i) {
      if (runs[r][i].step != ref[i].step) {
        throw std::runtime_error("aggregate_curves: run " + std::to_string(r) +
                                 " step grid diverges at index " + std::to_string(i) +
                                 " (" + std::to_string(runs[r][i].step) + " vs " +
                                 std::to_string(ref[i].step) + ")");
      }
    }
  }
  std::vector<AggregatedPoint> out(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) {
    std::vector<double> vals;
    vals.reserve(runs.size());
    for (const auto& run : runs) vals.push_back(run[i].value);
    out[i].step = ref[i].step;
    out[i].mean = mean_of(vals);
    out[i].n = static_cast<int>(vals.size());
    if (vals.size() >= 2) {
      out[i].sem = sem(SampleGroup{"curve", vals});
    }
  }
  return out;
}

inline std::string curves_csv(const std::vector<AggregatedPoint>& points) {
  CsvWriter csv("step,mean,sem,n");
  for (const auto& p : points) {
    csv.add_row({std::to_string(p.step), fmt_g17(p.mean), fmt_g17(p.sem),
                 std::to_string(p.n)});
  }
  return csv.str();
}

}  // namespace advpol
