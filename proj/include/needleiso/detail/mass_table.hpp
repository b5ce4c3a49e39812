#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace needleiso::detail {

// Cumulative mass of a density on [lo, hi]: 8-point Gauss-Legendre per cell,
// cells aligned with the supplied breakpoints (kinks, roots).
class MassTable {
 public:
  using Density = std::function<double(double)>;

  MassTable(Density h, double lo, double hi, std::size_t cells,
            std::vector<double> breakpoints = {});

  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }
  double total() const { return cum_.back(); }
  double density(double t) const;

  // mass of [lo, x]
  double cumulative(double x) const;
  // smallest x with cumulative(x) = m, m clamped to [0, total]
  double inverse(double m) const;

  std::size_t nodes() const { return x_.size(); }
  double node(std::size_t i) const { return x_[i]; }
  double node_mass(std::size_t i) const { return cum_[i]; }
  double node_density(std::size_t i) const { return h_[i]; }

 private:
  std::size_t cell_of(double x) const;

  Density f_;
  std::vector<double> x_;
  std::vector<double> cum_;
  std::vector<double> h_;
};

struct WindowProfile {
  double cost = 0.0;  // boundary density, not normalized
  double x0 = 0.0;
  double x1 = 0.0;
  bool found = false;
};

// Cheapest interval [x0, x1] inside [wlo, whi] with mass m; boundary points
// equal to wlo or whi cost nothing.
WindowProfile window_profile(const MassTable& t, double wlo, double whi, double m,
                             bool interior = true);

}  // namespace needleiso::detail
