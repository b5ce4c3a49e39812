#pragma once

#include <limits>

namespace needleiso {

struct CurvatureDimension {
  double K = 0.0;
  double N = 2.0;
};

// Real number or +infinity; the infinite value only comes out of the
// tau branch K*theta^2 >= (N-1)*pi^2 (and the matching sigma branch).
struct ExtendedReal {
  double value = 0.0;
  bool infinite = false;

  static ExtendedReal finite(double v) { return {v, false}; }
  static ExtendedReal inf() { return {std::numeric_limits<double>::infinity(), true}; }
  bool is_finite() const { return !infinite; }
};

struct TrigDeltaPair {
  double s;
  double c;
  double delta;
};

// Generalized sine/cosine: sin(sqrt(d) t)/sqrt(d), cos(sqrt(d) t) for d > 0,
// (t, 1) for d = 0 and the sinh/cosh forms for d < 0.
TrigDeltaPair trig_delta(double delta, double t);

ExtendedReal tau(CurvatureDimension cd, double t, double theta);
ExtendedReal sigma(CurvatureDimension cd, double t, double theta);

// Volume of the unit ball of R^N: pi^{N/2} / Gamma(N/2 + 1).
double omega(double N);

// pi*sqrt((N-1)/K) for K > 0, +inf otherwise.
double model_cap_radius(CurvatureDimension cd);

// s_{K/(N-1)}(t)^{N-1}, clamped at zero past the cap.
double model_radial_density(CurvatureDimension cd, double t);

double model_volume(CurvatureDimension cd, double r);

// d/dr model_volume: N*omega_N*s_{K/(N-1)}(r)^{N-1}.
double model_boundary(CurvatureDimension cd, double r);

double rbar(CurvatureDimension cd);

}  // namespace needleiso
