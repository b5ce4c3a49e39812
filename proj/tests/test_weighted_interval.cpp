#include <initializer_list>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "needleiso/model_profiles.hpp"
#include "needleiso/weighted_interval.hpp"

using namespace needleiso;
using std::numbers::pi;

namespace {

WeightedInterval sin_half() {
  return WeightedInterval(0.0, pi, [](double t) { return std::sin(t) / 2; });
}

// k components of total mass v, separated by positive gaps, drawn by mass
IntervalSet random_set(const WeightedInterval& w, double v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const int k = std::uniform_int_distribution<int>(1, 3)(rng);
  std::vector<double> parts(k), gaps(k + 1);
  for (auto& p : parts) p = u(rng);
  for (auto& g : gaps) g = u(rng);
  double sp = 0, sg = 0;
  for (double p : parts) sp += p;
  for (double g : gaps) sg += g;
  const double M = w.mass();
  std::vector<Interval> out;
  double m = 0.0;
  for (int i = 0; i < k; ++i) {
    m += gaps[i] / sg * (M - v);
    const double lo = w.table().inverse(m);
    m += parts[i] / sp * v;
    out.push_back({lo, w.table().inverse(m)});
  }
  return IntervalSet(out);
}

}  // namespace

TEST_SUITE("weighted_interval") {
  TEST_CASE("measure examples") {
    auto u = WeightedInterval::uniform(0, 1);
    CHECK(measure(u, IntervalSet({{0.2, 0.5}})) == doctest::Approx(0.3).epsilon(1e-13));
    WeightedInterval lin(0, 1, [](double t) { return 2 * t; });
    for (double x : {0.1, 0.5, 0.9}) CHECK(measure(lin, IntervalSet({{0, x}})) == doctest::Approx(x * x).epsilon(1e-12));
    WeightedInterval s(0, pi, [](double t) { return std::sin(t); });
    const double m = measure(s, IntervalSet({{0, pi / 2}, {3 * pi / 4, pi}}));
    CHECK(m == doctest::Approx(1 + (1 - std::cos(pi / 4))).epsilon(1e-12));
    CHECK(s.mass() == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("interval set validation") {
    CHECK_THROWS_AS(IntervalSet({{0.5, 0.4}}).validate(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(IntervalSet({{0.1, 0.4}, {0.4, 0.6}}).validate(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(IntervalSet({{-0.1, 0.4}}).validate(0, 1), std::invalid_argument);
    CHECK_NOTHROW(IntervalSet({{0.0, 0.2}, {0.3, 1.0}}).validate(0, 1));
  }

  TEST_CASE("minkowski content examples") {
    auto u = WeightedInterval::uniform(0, 1);
    CHECK(minkowski_content_1d(u, IntervalSet({{0, 0.4}})) == doctest::Approx(1.0));
    CHECK(minkowski_content_1d(u, IntervalSet({{0, 1}})) == 0.0);
    CHECK(minkowski_content_1d(u, IntervalSet({{0.2, 0.3}, {0.5, 0.6}})) == doctest::Approx(4.0));
    auto s = sin_half();
    CHECK(minkowski_content_1d(s, IntervalSet({{0, pi / 2}})) == doctest::Approx(0.5).epsilon(1e-12));
    for (double rho : {1e-4, 1e-5})
      CHECK(std::abs(minkowski_content_estimate(s, IntervalSet({{0, pi / 2}}), rho) - 0.5) < 1e-3);
  }

  TEST_CASE("finite-rho estimate converges at first order") {
    WeightedInterval w(0, 2, [](double t) { return 1 + t * t; });
    const IntervalSet S({{0.3, 0.8}, {1.1, 1.5}});
    const double exact = minkowski_content_1d(w, S);
    double prev = 1e300;
    for (double rho : {1e-3, 1e-4, 1e-5}) {
      const double err = std::abs(minkowski_content_estimate(w, S, rho) - exact);
      CHECK(err < prev);
      prev = err;
    }
    // dilations that overlap are merged
    CHECK(minkowski_content_estimate(w, IntervalSet({{0.3, 0.5}, {0.6, 0.8}}), 0.2) ==
          doctest::Approx((measure(w, IntervalSet({{0.1, 1.0}})) - measure(w, IntervalSet({{0.3, 0.5}, {0.6, 0.8}}))) / 0.2));
  }

  TEST_CASE("iso profile examples") {
    auto u = WeightedInterval::uniform(0, 1);
    CHECK(iso_profile_1d(u, 0.3).value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(iso_profile_1d(sin_half(), 0.5).value == doctest::Approx(0.5).epsilon(1e-9));
    const double r = 1 / std::sqrt(pi);
    WeightedInterval disk(0, r, [](double t) { return 2 * pi * t; });
    auto p = iso_profile_1d(disk, 0.01);
    CHECK(p.value == doctest::Approx(2 * std::sqrt(pi * 0.01)).epsilon(1e-7));
    CHECK(p.value == doctest::Approx(0.3544908).epsilon(1e-6));
    CHECK(measure(disk, p.set) == doctest::Approx(0.01).epsilon(1e-9));
    CHECK_THROWS_AS(iso_profile_1d(u, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(iso_profile_1d(u, u.mass()), std::invalid_argument);
  }

  TEST_CASE("iso profile agrees with a brute-force half-interval grid") {
    auto s = sin_half();
    double best = 1e300;
    for (int i = 1; i < 10000; ++i) {
      const double x = pi * i / 10000.0;
      const double m = measure(s, IntervalSet({{0, x}}));
      if (std::abs(m - 0.5) < 1e-4) best = std::min(best, s.density(x));
    }
    CHECK(iso_profile_1d(s, 0.5).value <= best + 1e-9);
  }

  TEST_CASE("iso profile symmetric for symmetric densities") {
    WeightedInterval w(0, 1, [](double t) { return 1 + std::sin(pi * t); });
    for (double v : {0.05, 0.2, 0.4}) {
      const double M = w.mass();
      CHECK(std::abs(iso_profile_1d(w, v * M).value - iso_profile_1d(w, (1 - v) * M).value) < 1e-6);
    }
  }

  TEST_CASE("iso profile is below random sets of equal measure") {
    std::mt19937_64 rng(1234);
    const WeightedInterval ws[] = {sin_half(), WeightedInterval(0, 1, [](double t) { return 0.5 + t * t; }),
                                   WeightedInterval(0, 2, [](double t) { return std::exp(-t); })};
    int bad = 0, total = 0;
    for (const auto& w : ws) {
      for (double frac : {0.1, 0.35, 0.6}) {
        const double v = frac * w.mass();
        const double I = iso_profile_1d(w, v).value;
        for (int k = 0; k < 1111; ++k) {
          auto S = random_set(w, v, rng);
          ++total;
          if (minkowski_content_1d(w, S) < I - 1e-9) ++bad;
        }
      }
    }
    CHECK(total >= 9999);
    CHECK(bad == 0);
  }

  TEST_CASE("cd density examples") {
    WeightedInterval s2(0, pi, [](double t) { return std::pow(std::sin(t), 2); });
    CHECK(check_cd_density(s2, {2, 3}).passed);
    CHECK(check_cd_density(WeightedInterval::uniform(0, 1), {0, 3}).passed);
    auto r = check_cd_density(WeightedInterval(0, 1, [](double t) { return t * t; }), {0, 2});
    CHECK_FALSE(r.passed);
    CHECK(r.worst_slack < -1e-9);
    // a sin density fails a larger curvature
    CHECK_FALSE(check_cd_density(s2, {3, 3}, 128).passed);
  }

  TEST_CASE("named densities and samples") {
    std::vector<double> p2{2.0};
    auto pw = named_density("power", p2);
    CHECK(pw(3.0) == doctest::Approx(9.0));
    std::vector<double> sp{1.0, 2.0};
    CHECK(named_density("sin-power", sp)(pi / 2) == doctest::Approx(1.0));
    CHECK(named_density("sin-power", sp)(4.0) == 0.0);
    CHECK(named_density("cosh-power", sp)(0.0) == doctest::Approx(1.0));
    std::vector<double> rate{-1.0};
    CHECK(named_density("exp", rate)(1.0) == doctest::Approx(std::exp(-1.0)));
    CHECK_THROWS(named_density("gaussian", rate));
    auto w = WeightedInterval::from_samples({0, 1, 2}, {0, 2, 0});
    CHECK(w.mass() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w.density(0.5) == doctest::Approx(1.0));
  }

  TEST_CASE("density sup bound examples") {
    CHECK(density_sup_bound({0, 4}, 2) == doctest::Approx(2.0));
    CHECK(density_sup_bound({-1, 2}, 1) == doctest::Approx(std::sinh(1.0) / (std::cosh(1.0) - 1)).epsilon(1e-9));
    CHECK(density_sup_bound({-1, 2}, 1) == doctest::Approx(2.16395).epsilon(1e-5));
    CHECK(density_sup_bound({1, 2}, 0.5) == doctest::Approx(4.0));
  }

  TEST_CASE("sup bound holds on random truncated Jacobian densities") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0, 1);
    int checked = 0;
    while (checked < 40) {
      const double K = -2 + 4 * u(rng), N = 2 + 2 * u(rng), H = -3 + 6 * u(rng);
      JacobianDensity J({H, K, N});
      const double lo = std::max(J.roots().xi_minus, -3.0), hi = std::min(J.roots().xi_plus, 3.0);
      const double a = lo + (hi - lo) * 0.5 * u(rng), b = hi - (hi - lo) * 0.5 * u(rng);
      if (!(b - a > 1e-3)) continue;
      WeightedInterval w(a, b, [&J](double t) { return J(t); });
      if (!(w.mass() > 1e-12)) continue;
      auto n = w.normalized();
      double sup = 0;
      for (int i = 0; i <= 2000; ++i) sup = std::max(sup, n.density(a + (b - a) * i / 2000.0));
      CHECK(sup <= density_sup_bound({K, N}, b - a) + 1e-8);
      ++checked;
    }
  }
}
