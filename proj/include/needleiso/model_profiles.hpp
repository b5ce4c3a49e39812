#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "needleiso/model_geometry.hpp"

namespace needleiso {

struct JacobianSpec {
  double H = 0.0;
  double K = 0.0;
  double N = 2.0;
};

struct TruncationRoots {
  double xi_minus = -std::numeric_limits<double>::infinity();
  double xi_plus = std::numeric_limits<double>::infinity();
  bool minus_infinite = true;
  bool plus_infinite = true;
};

struct ModelProfileQuery {
  CurvatureDimension cd;
  double D = std::numeric_limits<double>::infinity();  // +inf allowed
  double v = 0.0;
};

TruncationRoots truncation_roots(const JacobianSpec& spec);
double jacobian(const JacobianSpec& spec, double t);

// J_{H,K,N} with the truncation roots resolved once.
class JacobianDensity {
 public:
  explicit JacobianDensity(const JacobianSpec& spec);
  double operator()(double t) const;
  const TruncationRoots& roots() const { return roots_; }
  const JacobianSpec& spec() const { return spec_; }

 private:
  JacobianSpec spec_;
  double delta_;
  TruncationRoots roots_;
};

struct GeneralSearchOptions {
  std::size_t h_grid = 201;
  std::size_t a_grid = 101;
  std::size_t cells = 2048;         // per-H table over [-D, D]
  std::size_t refine_cells = 2048;  // per-point table during local refinement
  std::size_t refine_starts = 3;
};

double model_profile_general(const ModelProfileQuery& q, const GeneralSearchOptions& opt = {});
double model_profile_cases(const ModelProfileQuery& q);

// N * omega_N^{1/N} * v^{(N-1)/N}
double small_volume_expansion(CurvatureDimension cd, double v);
// model_profile_cases(cd, rbar(cd), v) minus the leading term
double expansion_residual(CurvatureDimension cd, double v);

struct ExpansionFit {
  std::vector<double> v;
  std::vector<double> residual;
  double slope = 0.0;
  double expected = 0.0;   // 3(N-1)/N
  double threshold = 0.0;  // expected - 0.1
  bool vanishing = false;  // residual identically zero to rounding
  bool passed = false;
};

ExpansionFit expansion_probe(CurvatureDimension cd, std::span<const double> vs);

}  // namespace needleiso
