#include "needleiso/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "needleiso/model_profiles.hpp"
#include "needleiso/numerics.hpp"
#include "needleiso/weighted_interval.hpp"

namespace needleiso {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

std::string pair_name(const char* prefix, double r, double R) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s[%.6g,%.6g]", prefix, r, R);
  return buf;
}

void validate_volumes(const VolumeTable& volumes, CurvatureDimension cd) {
  const double limit = 4.0 * rbar(cd);
  double prev = 0.0;
  for (const auto& [r, m] : volumes) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("radii must be positive");
    if (r >= limit) throw std::invalid_argument("radius " + fmt(r) + " not below 4*rbar");
    if (!(m >= prev)) throw std::invalid_argument("volumes must be non-decreasing");
    prev = m;
  }
}

constexpr double kDeficitFloor = 1e-12;

}  // namespace

void VerificationReport::add(std::string name, double lhs, Direction rel, double rhs, double tol,
                             std::optional<double> deficit) {
  CheckRow row;
  row.name = std::move(name);
  row.lhs = lhs;
  row.rhs = rhs;
  row.relation = rel;
  row.tolerance = tol;
  row.margin = rel == Direction::GreaterEq ? lhs - rhs : rhs - lhs;
  row.passed = row.margin >= -tol;
  row.deficit = deficit;
  checks.push_back(std::move(row));
}

bool VerificationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRow& r) { return r.passed; });
}

const CheckRow* VerificationReport::find(const std::string& name) const {
  for (const auto& r : checks)
    if (r.name == name) return &r;
  return nullptr;
}

double VerificationReport::worst_margin() const {
  double w = std::numeric_limits<double>::infinity();
  for (const auto& r : checks) w = std::min(w, r.margin);
  return w;
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : checks) {
    nlohmann::json j{{"name", r.name},
                     {"lhs", r.lhs},
                     {"rhs", r.rhs},
                     {"relation", r.relation == Direction::GreaterEq ? ">=" : "<="},
                     {"tolerance", r.tolerance},
                     {"margin", r.margin},
                     {"passed", r.passed}};
    if (r.deficit) j["deficit"] = *r.deficit;
    rows.push_back(std::move(j));
  }
  nlohmann::json out{{"schema", 1}, {"passed", all_passed()}, {"checks", rows}};
  out["fitted_constant"] = fitted_constant ? nlohmann::json(*fitted_constant) : nlohmann::json();
  return out;
}

std::string VerificationReport::to_text() const {
  std::size_t w = 4;
  for (const auto& r : checks) w = std::max(w, r.name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %19s  %2s  %19s  %19s  %9s  %s\n", int(w), "name", "lhs",
                "", "rhs", "margin", "tol", "status");
  os << buf;
  for (const auto& r : checks) {
    std::snprintf(buf, sizeof buf, "%-*s  %19.12g  %2s  %19.12g  %19.12g  %9.2g  %s\n", int(w),
                  r.name.c_str(), r.lhs, r.relation == Direction::GreaterEq ? ">=" : "<=", r.rhs,
                  r.margin, r.tolerance, r.passed ? "pass" : "FAIL");
    os << buf;
  }
  if (fitted_constant) os << "fitted_constant " << fmt(*fitted_constant) << "\n";
  return os.str();
}

VerificationReport bishop_gromov_check(const VolumeTable& volumes, CurvatureDimension cd,
                                       double epsilon, double tolerance) {
  validate_volumes(volumes, cd);
  const CurvatureDimension cdp{cd.K - epsilon, cd.N};
  VerificationReport rep;
  for (auto i = volumes.begin(); i != volumes.end(); ++i) {
    for (auto j = std::next(i); j != volumes.end(); ++j) {
      const double lhs = j->second > 0.0 ? i->second / j->second : 1.0;
      const double rhs = model_volume(cdp, i->first) / model_volume(cdp, j->first);
      rep.add(pair_name("bishop_gromov", i->first, j->first), lhs, Direction::GreaterEq, rhs,
              tolerance);
    }
  }
  return rep;
}

VerificationReport annuli_check(const VolumeTable& volumes, CurvatureDimension cd, double epsilon,
                                double tolerance) {
  validate_volumes(volumes, cd);
  const CurvatureDimension cdp{cd.K - epsilon, cd.N};
  VerificationReport rep;
  for (auto i = volumes.begin(); i != volumes.end(); ++i) {
    const double v1 = model_volume(cdp, i->first);
    for (auto j = std::next(i); j != volumes.end(); ++j) {
      const double v2 = model_volume(cdp, j->first);
      const double rhs = i->second / v1 * (v2 - v1);
      rep.add(pair_name("annulus", i->first, j->first), j->second - i->second, Direction::LessEq,
              rhs, tolerance);
    }
  }
  return rep;
}

double needle_profile_bound(std::span<const NeedleSummary> needles, CurvatureDimension cd,
                            double epsilon, double delta, double rbar, double vE) {
  const double D = rbar + delta;
  const CurvatureDimension cdp{cd.K - epsilon, cd.N};
  for (const auto& n : needles) {
    if (n.length > D + 1e-9 * std::max(1.0, D))
      throw std::invalid_argument("needle of length " + fmt(n.length) + " exceeds rbar+delta");
  }
  if (!(vE > 0.0)) return 0.0;
  std::map<double, double> memo;
  double total = 0.0;
  for (const auto& n : needles) {
    const double v = n.ball_ratio * vE;
    if (!(v > 0.0) || v >= 1.0 || n.quotient_weight == 0.0) continue;
    auto it = memo.find(v);
    if (it == memo.end()) it = memo.emplace(v, model_profile_cases({cdp, D, v})).first;
    total += n.quotient_weight * it->second;
  }
  return total;
}

ChainData model_chain_data(CurvatureDimension space, double rbar, double delta, double eta,
                           std::optional<double> cap_radius) {
  const double rho = cap_radius.value_or(delta / 2.0);
  if (!(rho > 0.0) || rho >= delta) throw std::invalid_argument("cap radius must lie in (0, delta)");
  const double scale = 1.0 - eta;
  const double outer = model_volume(space, rbar + 2.0 * delta);
  const double ball = model_volume(space, rbar);
  const double ve = model_volume(space, rho);
  const double pe = model_boundary(space, rho);

  ChainData d;
  d.rbar = rbar;
  d.delta = delta;
  d.mbar_ball = ball / outer;
  d.mbar_e = ve / outer;
  d.mbar_plus_e = pe / outer;
  d.outer_mass = scale * outer;
  d.m_ball = scale * ball;
  d.m_e = scale * ve;
  d.m_plus_e = scale * pe;

  NeedleData n;
  n.length = std::min(rbar, model_cap_radius(space));
  n.quotient_weight = d.mbar_ball;
  n.mass_ball = 1.0;
  n.mass_annulus = 0.0;
  n.mass_e = ve / ball;
  d.needles.push_back(n);
  return d;
}

ChainData chain_data_from_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                    const TransportSolution& /*sol*/, const NeedlePartition& part) {
  ChainData d;
  d.rbar = prob.rbar;
  d.delta = prob.delta;
  d.mbar_ball = prob.mbar_ball;
  d.mbar_e = prob.mbar_E;
  d.outer_mass = prob.outer_mass;
  d.m_ball = prob.outer_mass * prob.mbar_ball;
  d.m_e = prob.m_E;

  std::vector<char> in_e(space.size(), 0);
  for (auto i : prob.E) in_e[i] = 1;

  for (const auto& ray : part.rays) {
    NeedleData n;
    n.quotient_weight = ray.quotient_weight;
    const std::size_t top = ray.points.front();
    n.length = space.d(top, ray.points.back());
    for (std::size_t k = 0; k < ray.points.size(); ++k) {
      const std::size_t p = ray.points[k];
      const double m = ray.measure[k];
      if (prob.in_ball[p]) n.mass_ball += m;
      else if (prob.in_outer[p]) {
        n.mass_annulus += m;
        if (n.length > 0.0) {
          const double t = space.d(top, p) / n.length;
          n.min_annulus_param = std::min(n.min_annulus_param.value_or(t), t);
        }
      }
      if (in_e[p]) n.mass_e += m;
    }
    d.needles.push_back(n);
  }
  return d;
}

VerificationReport proof_chain_check(const ChainData& data, CurvatureDimension cd, double epsilon,
                                     double delta, double eta) {
  constexpr double tol = 1e-9;
  const CurvatureDimension cdp{cd.K - epsilon, cd.N};
  const double N = cd.N;
  const double rb = data.rbar;
  auto V = [&](double r) { return model_volume(cdp, r); };
  VerificationReport rep;

  const double bg = V(rb) / V(rb + 2.0 * delta);
  rep.add("ball_mass_bishop_gromov", data.mbar_ball, Direction::GreaterEq, bg, tol, 1.0 - bg);

  double max_len = 0.0;
  for (const auto& n : data.needles) max_len = std::max(max_len, n.length);
  rep.add("ray_length", max_len, Direction::LessEq, rb + delta, tol);

  const double param_lo = (rb - delta) / (rb + delta);
  double min_param = 1.0;
  for (const auto& n : data.needles)
    if (n.min_annulus_param) min_param = std::min(min_param, *n.min_annulus_param);
  rep.add("annulus_parametrization", min_param, Direction::GreaterEq, param_lo, tol,
          2.0 * delta / (rb + delta));

  // m_q(annulus) <= |[param_lo, 1]| * L_q * sup h_q
  double excess = -std::numeric_limits<double>::infinity();
  double max_bound = 0.0;
  std::vector<double> bounds;
  for (const auto& n : data.needles) {
    const double b = n.length > 0.0
                         ? (1.0 - param_lo) * n.length * density_sup_bound(cdp, n.length)
                         : 0.0;
    bounds.push_back(b);
    max_bound = std::max(max_bound, b);
    excess = std::max(excess, n.mass_annulus - b);
  }
  if (data.needles.empty()) excess = 0.0;
  rep.add("annulus_mass", excess, Direction::LessEq, 0.0, tol, max_bound);

  std::vector<NeedleSummary> summaries;
  double ratio_dev = 0.0;
  double q_total = 0.0;
  for (const auto& n : data.needles) {
    const double ratio = data.mbar_ball > 0.0 ? n.mass_ball / data.mbar_ball : 0.0;
    ratio_dev = std::max(ratio_dev, std::abs(ratio - 1.0));
    summaries.push_back({n.length, n.quotient_weight, ratio});
    q_total += n.quotient_weight;
  }
  const double c_ratio = std::max(max_bound, 1.0 / bg - 1.0);
  rep.add("ball_ratio", ratio_dev, Direction::LessEq, c_ratio, tol, c_ratio);

  double prop = 0.0;
  for (std::size_t i = 0; i < data.needles.size(); ++i)
    prop = std::max(prop, std::abs(data.needles[i].mass_e - summaries[i].ball_ratio * data.mbar_e));
  rep.add("mass_proportionality", prop, Direction::LessEq, 0.0, tol);

  const double D = rb + delta;
  const double npb = needle_profile_bound(summaries, cd, epsilon, delta, rb, data.mbar_e);
  if (data.mbar_plus_e)
    rep.add("needle_profile_bound", *data.mbar_plus_e, Direction::GreaterEq, npb, tol);

  const double c_lead = N * std::pow(omega(N), 1.0 / N);
  const double euclid = c_lead * std::pow(data.mbar_e, (N - 1.0) / N);
  double c_prof = 0.0;
  for (const auto& s : summaries) {
    const double v = s.ball_ratio * data.mbar_e;
    if (!(v > 0.0) || v >= 1.0) continue;
    const double I = model_profile_cases({cdp, D, v});
    c_prof = std::max(c_prof, 1.0 - I / (c_lead * std::pow(v, (N - 1.0) / N)));
  }
  const double rhs8 = euclid * q_total * (1.0 - c_prof) *
                      std::pow(std::max(0.0, 1.0 - c_ratio), (N - 1.0) / N);
  const double d8 = euclid > 0.0 ? 1.0 - rhs8 / euclid : 0.0;
  rep.add("almost_euclidean_normalized", npb, Direction::GreaterEq, rhs8, tol, d8);

  rep.add("volume_assumption", data.m_ball, Direction::GreaterEq, 1.0 - eta, tol);

  const double d_final = 1.0 - std::pow(data.outer_mass, 1.0 / N) * (1.0 - d8);
  if (data.m_plus_e) {
    const double rhs = std::pow(data.outer_mass, 1.0 / N) * c_lead * (1.0 - d8) *
                       std::pow(data.m_e, (N - 1.0) / N);
    rep.add("almost_euclidean_rescaled", *data.m_plus_e, Direction::GreaterEq, rhs, tol, d_final);
  }
  const double scale = delta + epsilon + eta;
  if (scale > 0.0) rep.fitted_constant = std::max(0.0, d_final) / scale;
  return rep;
}

DeficitFit deficit_fit(CurvatureDimension cd, std::span<const double> delta_grid,
                       std::span<const double> volume_grid) {
  if (delta_grid.empty()) throw std::invalid_argument("empty delta grid");
  const double rb = rbar(cd);
  const double c_lead = cd.N * std::pow(omega(cd.N), 1.0 / cd.N);
  DeficitFit fit;
  for (double delta : delta_grid) {
    if (!(delta > 0.0) || delta > rb / 10.0 * (1.0 + 1e-12))
      throw std::invalid_argument("delta " + fmt(delta) + " outside (0, rbar/10]");
    const double vmax = model_volume(cd, delta);
    std::vector<double> vols;
    if (volume_grid.empty()) {
      for (int k = 0; k <= 5; ++k) vols.push_back(vmax * std::ldexp(1.0, -k));
    } else {
      for (double v : volume_grid)
        if (v > 0.0 && v <= vmax * (1.0 + 1e-12)) vols.push_back(std::min(v, vmax));
      if (vols.empty())
        throw std::invalid_argument("no volume of the grid fits inside B_" + fmt(delta));
    }
    double worst = 0.0;
    for (double A : vols) {
      const double rho =
          A >= vmax ? delta : numerics::bisect([&](double r) { return model_volume(cd, r) - A; }, 0.0, delta,
                                          1e-15 * delta);
      const double per = model_boundary(cd, rho);
      worst = std::max(worst, 1.0 - per / (c_lead * std::pow(A, (cd.N - 1.0) / cd.N)));
      const double h = 1e-6 * rho;
      const double est = (model_volume(cd, rho + h) - model_volume(cd, rho)) / h;
      fit.finite_rho_gap = std::max(fit.finite_rho_gap, std::abs(est - per) / per);
    }
    fit.deltas.push_back(delta);
    // below the rounding floor of the ratio counts as exact
    fit.deficits.push_back(worst > kDeficitFloor ? worst : 0.0);
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < fit.deltas.size(); ++i) {
    sxy += fit.deltas[i] * fit.deficits[i];
    sxx += fit.deltas[i] * fit.deltas[i];
    fit.C_envelope = std::max(fit.C_envelope, fit.deficits[i] / fit.deltas[i]);
  }
  fit.C = sxy / sxx;
  for (std::size_t i = 0; i < fit.deltas.size(); ++i) {
    fit.residuals.push_back(fit.deficits[i] - fit.C * fit.deltas[i]);
    fit.max_residual = std::max(fit.max_residual, std::abs(fit.residuals.back()));
  }
  return fit;
}

}  // namespace needleiso
