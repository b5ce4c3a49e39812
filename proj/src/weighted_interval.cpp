#include "needleiso/weighted_interval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "needleiso/numerics.hpp"

namespace needleiso {

IntervalSet::IntervalSet(std::vector<Interval> parts) : parts_(std::move(parts)) {}

void IntervalSet::validate(double a, double b) const {
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    const Interval& p = parts_[i];
    if (!(p.lo <= p.hi)) throw std::invalid_argument("IntervalSet: component with lo > hi");
    if (p.lo < a || p.hi > b) throw std::invalid_argument("IntervalSet: component outside [a,b]");
    if (i > 0 && !(parts_[i - 1].hi < p.lo)) {
      throw std::invalid_argument("IntervalSet: components not sorted and disjoint");
    }
  }
}

WeightedInterval::WeightedInterval(double a, double b, Density h,
                                   std::vector<double> breakpoints, std::size_t cells)
    : a_(a), b_(b), h_(std::move(h)), breaks_(std::move(breakpoints)) {
  if (!(b > a)) throw std::invalid_argument("WeightedInterval: need a < b");
  table_ = std::make_shared<const detail::MassTable>(h_, a, b, cells, breaks_);
  if (!(table_->total() > 0.0)) throw std::invalid_argument("WeightedInterval: zero mass");
}

WeightedInterval WeightedInterval::uniform(double a, double b, double value) {
  return WeightedInterval(a, b, [value](double) { return value; });
}

WeightedInterval WeightedInterval::from_samples(std::vector<double> t, std::vector<double> h) {
  if (t.size() != h.size() || t.size() < 2) {
    throw std::invalid_argument("density table: need >= 2 rows of (t, h)");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && !(t[i] > t[i - 1])) throw std::invalid_argument("density table: t not increasing");
    if (!(h[i] >= 0.0)) throw std::invalid_argument("density table: negative density");
  }
  auto ts = std::make_shared<const std::vector<double>>(t);
  auto hs = std::make_shared<const std::vector<double>>(std::move(h));
  Density f = [ts, hs](double x) {
    const auto& T = *ts;
    const auto& H = *hs;
    if (x <= T.front()) return H.front();
    if (x >= T.back()) return H.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(T.begin(), T.end(), x) - T.begin());
    const double w = (x - T[k - 1]) / (T[k] - T[k - 1]);
    return H[k - 1] + w * (H[k] - H[k - 1]);
  };
  std::vector<double> breaks;
  if (t.size() <= 4096) breaks.assign(t.begin() + 1, t.end() - 1);
  return WeightedInterval(t.front(), t.back(), f, std::move(breaks));
}

WeightedInterval WeightedInterval::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open density table " + path);
  std::vector<double> t, h;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double a, b;
    if (!(row >> a >> b)) {
      if (t.empty()) continue;  // header
      throw std::invalid_argument("density table: malformed row '" + line + "'");
    }
    t.push_back(a);
    h.push_back(b);
  }
  return from_samples(std::move(t), std::move(h));
}

double WeightedInterval::mass_between(double x, double y) const {
  if (y < x) std::swap(x, y);
  return table_->cumulative(y) - table_->cumulative(x);
}

WeightedInterval WeightedInterval::normalized() const {
  const double z = mass();
  Density h = h_;
  return WeightedInterval(a_, b_, [h, z](double t) { return h(t) / z; }, breaks_,
                          table_->nodes() - 1);
}

WeightedInterval WeightedInterval::restricted(double a, double b) const {
  return WeightedInterval(a, b, h_, breaks_);
}

Density named_density(std::string_view name, std::span<const double> params) {
  auto need = [&](std::size_t n) {
    if (params.size() != n) {
      throw std::invalid_argument("density '" + std::string(name) + "' expects " +
                                  std::to_string(n) + " parameter(s)");
    }
  };
  if (name == "uniform") {
    need(1);
    const double c = params[0];
    return [c](double) { return c; };
  }
  if (name == "power") {
    need(1);
    const double p = params[0];
    return [p](double t) { return t <= 0 ? (p == 0 ? 1.0 : 0.0) : std::pow(t, p); };
  }
  if (name == "sin-power" || name == "sinh-power" || name == "cosh-power") {
    need(2);
    const double k = params[0], p = params[1];
    if (name == "sin-power") {
      return [k, p](double t) { return std::pow(std::max(0.0, std::sin(k * t)), p); };
    }
    if (name == "sinh-power") {
      return [k, p](double t) { return std::pow(std::max(0.0, std::sinh(k * t)), p); };
    }
    return [k, p](double t) { return std::pow(std::cosh(k * t), p); };
  }
  if (name == "exp") {
    need(1);
    const double r = params[0];
    return [r](double t) { return std::exp(r * t); };
  }
  throw std::invalid_argument("unknown density '" + std::string(name) + "'");
}

double measure(const WeightedInterval& w, const IntervalSet& s) {
  s.validate(w.a(), w.b());
  double m = 0.0;
  for (const auto& p : s.parts()) m += w.mass_between(p.lo, p.hi);
  return m;
}

double minkowski_content_1d(const WeightedInterval& w, const IntervalSet& s) {
  s.validate(w.a(), w.b());
  const double probe = 1e-7 * w.length();
  double total = 0.0;
  for (const auto& p : s.parts()) {
    for (double x : {p.lo, p.hi}) {
      if (x <= w.a() || x >= w.b()) continue;
      const double h = w.density(x);
      const double hl = w.density(std::max(w.a(), x - probe));
      const double hr = w.density(std::min(w.b(), x + probe));
      const double scale = 1e-3 * (1.0 + std::abs(h));
      if (std::abs(hl - h) > scale || std::abs(hr - h) > scale) {
        throw std::invalid_argument("minkowski_content_1d: density discontinuous at boundary point");
      }
      total += h;
    }
  }
  return total;
}

double minkowski_content_estimate(const WeightedInterval& w, const IntervalSet& s, double rho) {
  if (!(rho > 0)) throw std::invalid_argument("minkowski_content_estimate: rho must be positive");
  const double base = measure(w, s);
  std::vector<Interval> grown;
  for (const auto& p : s.parts()) {
    Interval g{std::max(w.a(), p.lo - rho), std::min(w.b(), p.hi + rho)};
    if (!grown.empty() && g.lo <= grown.back().hi) {
      grown.back().hi = std::max(grown.back().hi, g.hi);
    } else {
      grown.push_back(g);
    }
  }
  double m = 0.0;
  for (const auto& g : grown) m += w.mass_between(g.lo, g.hi);
  return (m - base) / rho;
}

ProfileResult iso_profile_1d(const WeightedInterval& w, double v) {
  if (!(v > 0.0) || !(v < w.mass())) {
    throw std::invalid_argument("iso_profile_1d: v must lie in (0, mass)");
  }
  const auto r = detail::window_profile(w.table(), w.a(), w.b(), v);
  return {r.cost, IntervalSet({{r.x0, r.x1}})};
}

CDCheckReport check_cd_density(const WeightedInterval& w, CurvatureDimension cd,
                               std::size_t grid, double tolerance) {
  if (!(cd.N > 1.0)) throw std::invalid_argument("check_cd_density: N must exceed 1");
  if (grid < 2) throw std::invalid_argument("check_cd_density: grid too small");
  const double e = 1.0 / (cd.N - 1.0);
  std::vector<double> x(grid), g(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    x[i] = w.a() + (static_cast<double>(i) + 0.5) / static_cast<double>(grid) * w.length();
    g[i] = std::pow(w.density(x[i]), e);
  }
  static constexpr std::array<double, 9> ts = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const CurvatureDimension sub{cd.K, cd.N - 1.0};
  CDCheckReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid; ++i) {
    for (std::size_t j = i + 1; j < grid; ++j) {
      const double theta = x[j] - x[i];
      for (double t : ts) {
        const ExtendedReal s0 = sigma(sub, 1.0 - t, theta);
        const ExtendedReal s1 = sigma(sub, t, theta);
        double rhs;
        if (!s0.is_finite() || !s1.is_finite()) {
          rhs = (g[i] > 0 || g[j] > 0) ? std::numeric_limits<double>::infinity() : 0.0;
        } else {
          rhs = s0.value * g[i] + s1.value * g[j];
        }
        const double lhs = std::pow(w.density((1.0 - t) * x[i] + t * x[j]), e);
        const double slack = (lhs - rhs) / std::max(1.0, std::abs(rhs));
        if (slack < rep.worst_slack) {
          rep.worst_slack = slack;
          rep.x0 = x[i];
          rep.x1 = x[j];
          rep.t = t;
        }
      }
    }
  }
  rep.passed = rep.worst_slack >= -tolerance;
  return rep;
}

double density_sup_bound(CurvatureDimension cd, double length) {
  if (!(length > 0)) throw std::invalid_argument("density_sup_bound: length must be positive");
  if (!(cd.N > 1.0)) throw std::invalid_argument("density_sup_bound: N must exceed 1");
  if (cd.K >= 0) return cd.N / length;
  const CurvatureDimension sub{cd.K, cd.N - 1.0};
  const double integral = numerics::adaptive_simpson(
      [&](double t) { return std::pow(sigma(sub, t, length).value, cd.N - 1.0); }, 0.0, 1.0);
  return 1.0 / (length * integral);
}

}  // namespace needleiso
