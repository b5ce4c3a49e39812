#include "needleiso/model_profiles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>

#include "needleiso/detail/mass_table.hpp"
#include "needleiso/numerics.hpp"

namespace needleiso {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

using Density = std::function<double(double)>;

// first root of g on (0, W], scanning with the given step; +inf if none
double first_root_scan(const std::function<double(double)>& g, double step, double window) {
  double prev = 0.0;
  for (double t = step; t <= window + 0.5 * step; t += step) {
    if (g(t) <= 0.0) return numerics::bisect(g, prev, t, 1e-12);
    prev = t;
  }
  return kInf;
}

// at most one sign change on (0, inf): geometric bracket growth
double first_root_doubling(const std::function<double(double)>& g) {
  double prev = 0.0;
  for (double t = 1e-9; t <= 1e15; t *= 2.0) {
    if (g(t) <= 0.0) return numerics::bisect(g, prev, t, 1e-12 * std::max(1.0, prev));
    prev = t;
  }
  return kInf;
}

void check_query(const ModelProfileQuery& q) {
  if (!(q.cd.N > 1.0)) throw std::invalid_argument("model profile: N must exceed 1");
  if (!(q.v >= 0.0 && q.v <= 1.0)) throw std::invalid_argument("model profile: v must lie in [0,1]");
  if (!(q.D > 0.0)) throw std::invalid_argument("model profile: D must be positive");
}

// normalized profile at mass fraction v of the window [lo, hi] under f
double window_value(const Density& f, double lo, double hi, double v, std::size_t cells,
                    std::vector<double> breaks = {}) {
  if (!(hi > lo)) return kInf;
  detail::MassTable t(f, lo, hi, cells, std::move(breaks));
  const double z = t.total();
  if (!(z > 0.0) || !std::isfinite(z)) return kInf;
  const auto r = detail::window_profile(t, lo, hi, v * z);
  if (!r.found) return kInf;
  return r.cost / z;
}

std::vector<double> xi_grid(double lo, double hi, std::size_t n, bool quadratic) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = static_cast<double>(i) / static_cast<double>(n - 1);
    if (quadratic) s *= s;
    g[i] = lo + (hi - lo) * s;
  }
  return g;
}

// inf over xi in [xlo, xhi] of the normalized profile of [xi, xi + D] under make(xi)
double translate_inf(const std::function<Density(double)>& make, double D, double v, double xlo,
                     double xhi, bool quadratic, std::size_t n = 201, std::size_t cells = 1024) {
  auto value = [&](double xi) { return window_value(make(xi), xi, xi + D, v, cells); };
  if (!(xhi > xlo)) return value(xlo);
  const auto grid = xi_grid(xlo, xhi, n, quadratic);
  std::vector<double> vals(grid.size());
  numerics::parallel_for(grid.size(), [&](std::size_t i) { vals[i] = value(grid[i]); });
  std::size_t best = 0;
  for (std::size_t i = 1; i < vals.size(); ++i) {
    if (vals[i] < vals[best]) best = i;
  }
  double out = vals[best];
  const double lo = grid[best > 0 ? best - 1 : 0];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  if (hi > lo && std::isfinite(out)) {
    const auto r = numerics::golden_section(value, lo, hi, 1e-12 * (hi - lo), 80);
    out = std::min(out, r.fx);
  }
  return out;
}

// log sinh(x) for x > 0 and log cosh(x), overflow-free
double log_sinh(double x) { return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0); }
double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - std::log(2.0);
}

double case_flat_closed_form(double N, double D, double v) {
  const double lo = std::min(v, 1.0 - v), hi = std::max(v, 1.0 - v);
  auto g = [&](double u) {
    if (u >= 1.0) return 1.0 / N;  // xi -> inf: uniform density
    const double xi = u / (1.0 - u);
    const double a = std::pow(xi + 1.0, N), b = std::pow(xi, N);
    return std::pow(lo * a + hi * b, (N - 1.0) / N) / (a - b);
  };
  const std::size_t n = 2001;
  const double umax = 1.0 - 1e-6;
  std::size_t best = 0;
  double bv = g(0.0);
  std::vector<double> us(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    us[i] = umax * s * s;
    const double gv = g(us[i]);
    if (gv < bv) {
      bv = gv;
      best = i;
    }
  }
  const double lo_u = us[best > 0 ? best - 1 : 0];
  const double hi_u = us[std::min(best + 1, n - 1)];
  if (hi_u > lo_u) bv = std::min(bv, numerics::golden_section(g, lo_u, hi_u, 1e-14, 120).fx);
  return std::min(N / D * bv, 1.0 / D);
}

}  // namespace

TruncationRoots truncation_roots(const JacobianSpec& spec) {
  if (!(spec.N > 1.0)) throw std::invalid_argument("truncation_roots: N must exceed 1");
  const double delta = spec.K / (spec.N - 1.0);
  const double c = spec.H / (spec.N - 1.0);
  auto f = [&](double t) {
    const TrigDeltaPair p = trig_delta(delta, t);
    return p.c + c * p.s;
  };
  auto fp = [&](double t) { return f(t); };
  auto fm = [&](double t) { return f(-t); };
  double plus, minus;
  if (delta > 0) {
    const double period = kPi / std::sqrt(delta);
    const double window = 10.0 * std::max(1.0, period);
    plus = first_root_scan(fp, period / 256.0, window);
    minus = first_root_scan(fm, period / 256.0, window);
  } else {
    plus = first_root_doubling(fp);
    minus = first_root_doubling(fm);
  }
  TruncationRoots r;
  r.plus_infinite = std::isinf(plus);
  r.minus_infinite = std::isinf(minus);
  r.xi_plus = plus;
  r.xi_minus = -minus;
  return r;
}

JacobianDensity::JacobianDensity(const JacobianSpec& spec)
    : spec_(spec), delta_(spec.N > 1.0 ? spec.K / (spec.N - 1.0) : 0.0) {
  if (!(spec.N >= 1.0)) throw std::invalid_argument("jacobian: N must be at least 1");
  if (spec.N > 1.0) {
    roots_ = truncation_roots(spec);
  } else if (spec.K > 0) {
    roots_ = {0.0, 0.0, false, false};
  }
}

double JacobianDensity::operator()(double t) const {
  if (spec_.N == 1.0) {
    if (spec_.K > 0) return t == 0.0 ? 1.0 : 0.0;
    return spec_.H * t >= 0.0 ? 1.0 : 0.0;
  }
  if (t <= roots_.xi_minus || t >= roots_.xi_plus) return 0.0;
  const TrigDeltaPair p = trig_delta(delta_, t);
  const double base = p.c + spec_.H / (spec_.N - 1.0) * p.s;
  if (base <= 0.0) return 0.0;
  return std::pow(base, spec_.N - 1.0);
}

double jacobian(const JacobianSpec& spec, double t) { return JacobianDensity(spec)(t); }

double model_profile_cases(const ModelProfileQuery& q) {
  check_query(q);
  const double K = q.cd.K, N = q.cd.N, D = q.D, v = q.v;
  if (v == 0.0 || v == 1.0) return 0.0;
  const double delta = K / (N - 1.0);

  if (K > 0) {
    const double k = std::sqrt(delta);
    const double cap = kPi / k;
    auto make = [k, N](double) -> Density {
      return [k, N](double t) { return std::pow(std::max(0.0, std::sin(k * t)), N - 1.0); };
    };
    if (D >= cap) return window_value(make(0.0), 0.0, cap, v, 8192);
    // the sin window is symmetric about cap/2, so xi beyond (cap - D)/2 repeats
    return translate_inf(make, D, v, 0.0, 0.5 * (cap - D), true);
  }
  if (std::isinf(D)) return 0.0;
  if (K == 0) return case_flat_closed_form(N, D, v);

  const double k = std::sqrt(-delta);
  const double xi_max = 20.0 / k;
  auto make_sinh = [k, N, D](double xi) -> Density {
    const double ref = log_sinh(k * (xi + 0.5 * D));
    return [k, N, ref](double t) {
      if (t <= 0.0) return 0.0;
      return std::exp((N - 1.0) * (log_sinh(k * t) - ref));
    };
  };
  auto make_cosh = [k, N, D](double xi) -> Density {
    const double ref = log_cosh(k * (xi + 0.5 * D));
    return [k, N, ref](double t) { return std::exp((N - 1.0) * (log_cosh(k * t) - ref)); };
  };
  const double rate = std::sqrt(-K * (N - 1.0));
  const Density expd = [rate, D](double t) { return std::exp(rate * (t - 0.5 * D)); };

  const double i_sinh = translate_inf(make_sinh, D, v, 0.0, xi_max, true);
  const double i_exp = window_value(expd, 0.0, D, v, 4096);
  const double i_cosh = translate_inf(make_cosh, D, v, -0.5 * D, xi_max, true);
  return std::min({i_sinh, i_exp, i_cosh});
}

double model_profile_general(const ModelProfileQuery& q, const GeneralSearchOptions& opt) {
  check_query(q);
  const double K = q.cd.K, N = q.cd.N, v = q.v;
  if (v == 0.0 || v == 1.0) return 0.0;
  double D = q.D;
  if (std::isinf(D)) {
    if (K <= 0) return 0.0;
    // windows longer than the support all see the full sin arch
    D = 2.0 * model_cap_radius(q.cd);
  }

  const std::size_t na = std::max<std::size_t>(opt.a_grid, 2);
  std::vector<double> as(na);
  for (std::size_t i = 0; i < na; ++i) as[i] = D * static_cast<double>(i) / static_cast<double>(na - 1);

  auto window_of = [&](const JacobianDensity& j, double a) {
    const TruncationRoots& r = j.roots();
    return std::pair<double, double>{std::max(-a, r.xi_minus), std::min(D - a, r.xi_plus)};
  };

  // one point (H, a) evaluated on its own table
  auto point_value = [&](double H, double a) {
    a = std::clamp(a, 0.0, D);
    const JacobianDensity j({H, K, N});
    const auto [lo, hi] = window_of(j, a);
    return window_value(j, lo, hi, v, opt.refine_cells, {0.0});
  };

  double h_max = 10.0 * (N - 1.0) * std::max({1.0, std::sqrt(std::abs(K)), 1.0 / D});
  const double h0_base = h_max * 1e-6;

  struct Best {
    double value = kInf;
    double H = 0.0;
    double a = 0.0;
  };

  auto grid_search = [&](double hmax, std::vector<double>& hs, std::vector<double>& vals) {
    hs.clear();
    const std::size_t half = (std::max<std::size_t>(opt.h_grid, 3) - 1) / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double e = -6.0 + 6.0 * static_cast<double>(k) / static_cast<double>(half - 1);
      const double h = hmax * std::pow(10.0, e);
      hs.push_back(h);
      hs.push_back(-h);
    }
    hs.push_back(0.0);
    if (K < 0) {
      // exp-density members of the family
      const double he = std::sqrt(-K * (N - 1.0));
      hs.push_back(he);
      hs.push_back(-he);
    }
    std::sort(hs.begin(), hs.end());
    hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
    vals.assign(hs.size() * na, kInf);
    numerics::parallel_for(hs.size(), [&](std::size_t ih) {
      const JacobianDensity j({hs[ih], K, N});
      const TruncationRoots& r = j.roots();
      const double tlo = std::max(-D, r.xi_minus), thi = std::min(D, r.xi_plus);
      if (!(thi > tlo)) return;
      const auto cells = static_cast<std::size_t>(
          std::max(64.0, static_cast<double>(opt.cells) * (thi - tlo) / (2.0 * D)));
      const detail::MassTable t(j, tlo, thi, cells, {0.0});
      for (std::size_t ia = 0; ia < na; ++ia) {
        const auto [lo, hi] = window_of(j, as[ia]);
        if (!(hi > lo)) continue;
        const double fl = t.cumulative(lo), fh = t.cumulative(hi);
        const double z = fh - fl;
        if (!(z > 1e-12 * t.total())) continue;  // degenerate window
        const auto w = detail::window_profile(t, lo, hi, v * z);
        if (w.found) vals[ih * na + ia] = w.cost / z;
      }
    });
  };

  std::vector<double> hs, vals;
  grid_search(h_max, hs, vals);
  auto argmin = [&] {
    std::size_t b = 0;
    for (std::size_t i = 1; i < vals.size(); ++i) {
      if (vals[i] < vals[b]) b = i;  // row-major order: smallest H, then smallest a
    }
    return b;
  };
  std::size_t b = argmin();
  if (b / na == 0 || b / na == hs.size() - 1) {
    h_max *= 10.0;
    grid_search(h_max, hs, vals);
    b = argmin();
  }

  Best best{vals[b], hs[b / na], as[b % na]};
  if (!std::isfinite(best.value)) return best.value;

  // local refinement from the lowest, mutually separated grid cells
  std::vector<std::size_t> order(vals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return vals[x] < vals[y]; });
  std::vector<std::size_t> starts;
  for (std::size_t idx : order) {
    if (starts.size() >= opt.refine_starts || !std::isfinite(vals[idx])) break;
    const auto ih = static_cast<long>(idx / na), ia = static_cast<long>(idx % na);
    bool near = false;
    for (std::size_t s : starts) {
      if (std::abs(static_cast<long>(s / na) - ih) <= 2 && std::abs(static_cast<long>(s % na) - ia) <= 2) near = true;
    }
    if (!near) starts.push_back(idx);
  }

  const double h0 = h0_base;
  const double du = std::log(10.0) * 6.0 / 99.0;
  const double da = D / static_cast<double>(na - 1);
  std::vector<Best> refined(starts.size());
  numerics::parallel_for(starts.size(), [&](std::size_t s) {
    const std::size_t idx = starts[s];
    const double u0 = std::asinh(hs[idx / na] / h0);
    auto f = [&](const std::array<double, 2>& p) { return point_value(h0 * std::sinh(p[0]), p[1]); };
    const auto r = numerics::nelder_mead_2d(f, {u0, as[idx % na]}, {du, da}, 1e-12, 150);
    refined[s] = {r.fx, h0 * std::sinh(r.x[0]), std::clamp(r.x[1], 0.0, D)};
  });
  for (const auto& r : refined) {
    if (r.value < best.value) best = r;
  }
  return best.value;
}

double small_volume_expansion(CurvatureDimension cd, double v) {
  if (!(v > 0.0 && v <= 0.01)) throw std::invalid_argument("small_volume_expansion: v must lie in (0, 0.01]");
  if (!(cd.N > 1.0)) throw std::invalid_argument("small_volume_expansion: N must exceed 1");
  return cd.N * std::pow(omega(cd.N), 1.0 / cd.N) * std::pow(v, (cd.N - 1.0) / cd.N);
}

double expansion_residual(CurvatureDimension cd, double v) {
  const double lead = small_volume_expansion(cd, v);
  return model_profile_cases({cd, rbar(cd), v}) - lead;
}

ExpansionFit expansion_probe(CurvatureDimension cd, std::span<const double> vs) {
  ExpansionFit fit;
  fit.expected = 3.0 * (cd.N - 1.0) / cd.N;
  fit.threshold = fit.expected - 0.1;
  fit.v.assign(vs.begin(), vs.end());
  std::vector<double> lx, ly;
  bool vanishing = true;
  for (double v : vs) {
    const double lead = small_volume_expansion(cd, v);
    const double r = expansion_residual(cd, v);
    fit.residual.push_back(r);
    if (std::abs(r) > 1e-12 * lead) vanishing = false;
    lx.push_back(std::log(v));
    ly.push_back(std::log(std::max(std::abs(r), 1e-300)));
  }
  fit.vanishing = vanishing;
  if (vs.size() >= 2) fit.slope = numerics::least_squares_line(lx, ly).slope;
  fit.passed = fit.vanishing || fit.slope >= fit.threshold;
  return fit;
}

}  // namespace needleiso
