#include "needleiso/detail/mass_table.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "needleiso/numerics.hpp"

namespace needleiso::detail {

MassTable::MassTable(Density h, double lo, double hi, std::size_t cells,
                     std::vector<double> breakpoints)
    : f_(std::move(h)) {
  if (!(hi > lo)) throw std::invalid_argument("MassTable: empty range");
  if (cells == 0) cells = 1;
  x_ = numerics::linspace(lo, hi, cells + 1);
  for (double b : breakpoints) {
    if (b > lo && b < hi) x_.push_back(b);
  }
  std::sort(x_.begin(), x_.end());
  const double eps = 1e-14 * (hi - lo);
  std::vector<double> kept;
  kept.reserve(x_.size());
  for (double x : x_) {
    if (kept.empty() || x - kept.back() > eps) kept.push_back(x);
  }
  kept.back() = hi;
  x_ = std::move(kept);

  h_.resize(x_.size());
  cum_.assign(x_.size(), 0.0);
  auto dens = [this](double t) { return std::max(0.0, f_(t)); };
  for (std::size_t i = 0; i < x_.size(); ++i) {
    h_[i] = dens(x_[i]);
    if (!std::isfinite(h_[i])) throw std::invalid_argument("MassTable: non-finite density");
  }
  for (std::size_t i = 1; i < x_.size(); ++i) {
    cum_[i] = cum_[i - 1] + numerics::gauss_legendre8(dens, x_[i - 1], x_[i]);
  }
}

double MassTable::density(double t) const {
  if (t < lo() || t > hi()) return 0.0;
  return std::max(0.0, f_(t));
}

std::size_t MassTable::cell_of(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t k = static_cast<std::size_t>(it - x_.begin());
  if (k == 0) return 0;
  return std::min(k - 1, x_.size() - 2);
}

double MassTable::cumulative(double x) const {
  if (x <= lo()) return 0.0;
  if (x >= hi()) return total();
  const std::size_t k = cell_of(x);
  if (x == x_[k]) return cum_[k];
  auto dens = [this](double t) { return std::max(0.0, f_(t)); };
  return cum_[k] + numerics::gauss_legendre8(dens, x_[k], x);
}

double MassTable::inverse(double m) const {
  if (m <= 0.0) return lo();
  m = std::min(m, total());
  auto it = std::lower_bound(cum_.begin(), cum_.end(), m);
  std::size_t j = static_cast<std::size_t>(it - cum_.begin());
  if (j == 0) return lo();
  const std::size_t k = j - 1;
  const double cell_mass = cum_[j] - cum_[k];
  if (cell_mass <= 0.0) return x_[k];
  double a = x_[k], b = x_[j];
  auto dens = [this](double t) { return std::max(0.0, f_(t)); };
  double x = a + (m - cum_[k]) / cell_mass * (b - a);
  const double width = b - a;
  for (int it2 = 0; it2 < 60; ++it2) {
    const double g = cum_[k] + numerics::gauss_legendre8(dens, x_[k], x) - m;
    if (g == 0.0) return x;
    if (g < 0) a = x;
    else b = x;
    const double h = dens(x);
    double next = h > 0 ? x - g / h : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - x) <= 1e-15 * width || b - a <= 1e-15 * width) return next;
    x = next;
  }
  return x;
}

WindowProfile window_profile(const MassTable& t, double wlo, double whi, double m,
                             bool interior) {
  WindowProfile best;
  const double fl = t.cumulative(wlo);
  const double fh = t.cumulative(whi);
  if (!(m > 0.0) || !(m < fh - fl)) return best;

  auto cost_at = [&](double x) {
    return (x <= wlo || x >= whi) ? 0.0 : t.density(x);
  };

  const double xl = t.inverse(fl + m);
  best = {cost_at(xl), wlo, xl, true};
  const double yr = t.inverse(fh - m);
  const double cr = cost_at(yr);
  if (cr < best.cost) best = {cr, yr, whi, true};
  if (!interior || best.cost == 0.0) return best;

  // cheap scan over table nodes, partner located by linear interpolation
  const std::size_t n = t.nodes();
  std::size_t i = 0;
  while (i < n && t.node(i) <= wlo) ++i;
  std::size_t j = i;
  double approx_best = std::numeric_limits<double>::infinity();
  std::size_t arg = n;
  for (; i < n && t.node(i) < yr; ++i) {
    const double target = t.node_mass(i) + m;
    if (j < i) j = i;
    while (j < n && t.node_mass(j) < target) ++j;
    if (j >= n || j == 0) break;
    const double c0 = t.node_mass(j - 1), c1 = t.node_mass(j);
    const double w = c1 > c0 ? (target - c0) / (c1 - c0) : 0.0;
    const double xp = t.node(j - 1) + w * (t.node(j) - t.node(j - 1));
    if (xp >= whi) break;
    const double hp = t.node_density(j - 1) + w * (t.node_density(j) - t.node_density(j - 1));
    const double c = t.node_density(i) + hp;
    if (c < approx_best) {
      approx_best = c;
      arg = i;
    }
  }
  if (arg == n || approx_best > best.cost * (1.0 + 1e-2)) return best;

  const double lo = std::max(wlo, arg > 0 ? t.node(arg - 1) : wlo);
  const double hi = std::min(yr, arg + 1 < n ? t.node(arg + 1) : yr);
  if (!(hi > lo)) return best;
  auto exact = [&](double x) {
    const double xp = t.inverse(t.cumulative(x) + m);
    return cost_at(x) + cost_at(xp);
  };
  const auto r = numerics::golden_section(exact, lo, hi, 1e-13 * (hi - lo + 1e-300), 80);
  if (r.fx < best.cost) {
    best = {r.fx, r.x, t.inverse(t.cumulative(r.x) + m), true};
  }
  return best;
}

}  // namespace needleiso::detail
