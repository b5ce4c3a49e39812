#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "needleiso/detail/mass_table.hpp"
#include "needleiso/model_geometry.hpp"

namespace needleiso {

inline constexpr std::size_t kProfileGrid = 4096;
inline constexpr std::size_t kCDGrid = 512;

using Density = std::function<double(double)>;

struct Interval {
  double lo;
  double hi;
};

class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> parts);

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }
  // sorted, disjoint, inside [a, b]
  void validate(double a, double b) const;

 private:
  std::vector<Interval> parts_;
};

// ([a, b], |.|, h Leb). Immutable; copies share the mass table.
class WeightedInterval {
 public:
  WeightedInterval(double a, double b, Density h, std::vector<double> breakpoints = {},
                   std::size_t cells = kProfileGrid);

  static WeightedInterval uniform(double a, double b, double value = 1.0);
  // linear interpolation through samples (t_i, h_i), t strictly increasing
  static WeightedInterval from_samples(std::vector<double> t, std::vector<double> h);
  static WeightedInterval from_csv(const std::string& path);

  double a() const { return a_; }
  double b() const { return b_; }
  double length() const { return b_ - a_; }
  double mass() const { return table_->total(); }
  double density(double t) const { return table_->density(t); }
  double mass_between(double x, double y) const;
  const detail::MassTable& table() const { return *table_; }

  // same interval, density divided by mass()
  WeightedInterval normalized() const;
  WeightedInterval restricted(double a, double b) const;

 private:
  double a_;
  double b_;
  Density h_;
  std::vector<double> breaks_;
  std::shared_ptr<const detail::MassTable> table_;
};

// Named densities: uniform(c), power(p): t^p, sin-power(k,p): sin(kt)^p,
// sinh-power(k,p), cosh-power(k,p), exp(rate). Negative bases are clamped to 0.
Density named_density(std::string_view name, std::span<const double> params);

double measure(const WeightedInterval& w, const IntervalSet& s);
double minkowski_content_1d(const WeightedInterval& w, const IntervalSet& s);
double minkowski_content_estimate(const WeightedInterval& w, const IntervalSet& s,
                                  double rho);

struct ProfileResult {
  double value;
  IntervalSet set;
};

ProfileResult iso_profile_1d(const WeightedInterval& w, double v);

struct CDCheckReport {
  bool passed = true;
  double worst_slack = 0.0;  // lhs - rhs at the most violated triple
  double x0 = 0.0;
  double x1 = 0.0;
  double t = 0.0;
};

CDCheckReport check_cd_density(const WeightedInterval& w, CurvatureDimension cd,
                               std::size_t grid = kCDGrid, double tolerance = 1e-9);

double density_sup_bound(CurvatureDimension cd, double length);

}  // namespace needleiso
