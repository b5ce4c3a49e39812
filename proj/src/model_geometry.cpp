#include "needleiso/model_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "needleiso/numerics.hpp"

namespace needleiso {

namespace {

constexpr double kPi = std::numbers::pi;

void require_N_above_one(CurvatureDimension cd, const char* who) {
  if (!(cd.N > 1.0)) throw std::invalid_argument(std::string(who) + ": N must exceed 1");
}

}  // namespace

TrigDeltaPair trig_delta(double delta, double t) {
  if (delta > 0) {
    const double k = std::sqrt(delta);
    return {std::sin(k * t) / k, std::cos(k * t), delta};
  }
  if (delta < 0) {
    const double k = std::sqrt(-delta);
    // sinh(kt)/k loses digits for tiny kt; the series keeps continuity at 0
    const double x = k * t;
    const double s = std::abs(x) < 1e-4 ? t * (1.0 + x * x / 6.0) : std::sinh(x) / k;
    return {s, std::cosh(x), delta};
  }
  return {t, 1.0, 0.0};
}

ExtendedReal sigma(CurvatureDimension cd, double t, double theta) {
  if (theta == 0.0 || cd.K == 0.0) return ExtendedReal::finite(t);
  if (!(cd.N > 0.0)) throw std::invalid_argument("sigma: N must be positive");
  const double delta = cd.K / cd.N;
  if (cd.K > 0 && cd.K * theta * theta >= cd.N * kPi * kPi) return ExtendedReal::inf();
  const double num = trig_delta(delta, t * theta).s;
  const double den = trig_delta(delta, theta).s;
  return ExtendedReal::finite(num / den);
}

ExtendedReal tau(CurvatureDimension cd, double t, double theta) {
  if (!(cd.N >= 1.0)) throw std::invalid_argument("tau: N must be at least 1");
  const double kt2 = cd.K * theta * theta;
  if (kt2 == 0.0) return ExtendedReal::finite(t);
  if (kt2 >= (cd.N - 1.0) * kPi * kPi) return ExtendedReal::inf();
  // K < 0 with N = 1 lands here
  if (cd.N == 1.0) return ExtendedReal::finite(t);
  const ExtendedReal s = sigma({cd.K, cd.N - 1.0}, t, theta);
  if (!s.is_finite()) return s;
  return ExtendedReal::finite(std::pow(t, 1.0 / cd.N) *
                              std::pow(s.value, (cd.N - 1.0) / cd.N));
}

double omega(double N) {
  if (!(N > 0)) throw std::invalid_argument("omega: N must be positive");
  return std::pow(kPi, N / 2.0) / numerics::lanczos_gamma(N / 2.0 + 1.0);
}

double model_cap_radius(CurvatureDimension cd) {
  if (cd.K > 0) return kPi * std::sqrt((cd.N - 1.0) / cd.K);
  return std::numeric_limits<double>::infinity();
}

double model_radial_density(CurvatureDimension cd, double t) {
  const double s = trig_delta(cd.K / (cd.N - 1.0), t).s;
  if (t >= model_cap_radius(cd) || s <= 0.0) return 0.0;
  return std::pow(s, cd.N - 1.0);
}

double model_volume(CurvatureDimension cd, double r) {
  require_N_above_one(cd, "model_volume");
  if (!(r >= 0)) throw std::invalid_argument("model_volume: r must be non-negative");
  const double w = omega(cd.N);
  if (cd.K == 0.0) return w * std::pow(r, cd.N);
  const double upper = std::min(r, model_cap_radius(cd));
  const double integral = numerics::adaptive_simpson(
      [cd](double t) { return model_radial_density(cd, t); }, 0.0, upper);
  return cd.N * w * integral;
}

double model_boundary(CurvatureDimension cd, double r) {
  require_N_above_one(cd, "model_boundary");
  return cd.N * omega(cd.N) * model_radial_density(cd, r);
}

double rbar(CurvatureDimension cd) {
  require_N_above_one(cd, "rbar");
  // flat case in closed form: omega_N r^N = 1
  if (cd.K == 0.0) return std::pow(omega(cd.N), -1.0 / cd.N);
  auto g = [cd](double r) { return model_volume(cd, r) - 1.0; };
  double hi;
  if (cd.K > 0) {
    hi = model_cap_radius(cd);
    if (g(hi) < 0.0) return hi;
  } else {
    hi = 1.0;
    while (g(hi) < 0.0) hi *= 2.0;
  }
  return numerics::bisect(g, 0.0, hi, 1e-12);
}

}  // namespace needleiso
