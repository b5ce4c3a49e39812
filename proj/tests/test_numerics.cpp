#include <initializer_list>
#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "needleiso/numerics.hpp"

using namespace needleiso::numerics;

TEST_SUITE("numerics") {
  TEST_CASE("adaptive simpson on smooth integrands") {
    CHECK(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi) ==
          doctest::Approx(2.0).epsilon(1e-11));
    CHECK(adaptive_simpson([](double x) { return std::exp(x); }, 0.0, 1.0) ==
          doctest::Approx(std::numbers::e - 1.0).epsilon(1e-11));
    // narrow bump that a coarse first pass would miss
    const double I = adaptive_simpson([](double x) { return std::exp(-1e4 * (x - 0.3) * (x - 0.3)); }, 0.0, 1.0);
    CHECK(I == doctest::Approx(std::sqrt(std::numbers::pi / 1e4)).epsilon(1e-8));
    CHECK(adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0) == 0.0);
  }

  TEST_CASE("gauss legendre 8 is exact through degree 15") {
    auto p = [](double x) { return std::pow(x, 15) - 3.0 * std::pow(x, 8) + x; };
    const double exact = (std::pow(2.0, 16) - 1.0) / 16.0 - 3.0 * (std::pow(2.0, 9) - 1.0) / 9.0 + 1.5;
    CHECK(gauss_legendre8(p, 1.0, 2.0) == doctest::Approx(exact).epsilon(1e-13));
  }

  TEST_CASE("bisect and golden section") {
    CHECK(bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0), std::invalid_argument);
    auto m = golden_section([](double x) { return (x - 0.7) * (x - 0.7) + 3.0; }, 0.0, 2.0);
    CHECK(m.x == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(m.fx == doctest::Approx(3.0).epsilon(1e-14));
    // minimum at an endpoint
    auto e = golden_section([](double x) { return x; }, 1.0, 4.0);
    CHECK(e.x == 1.0);
  }

  TEST_CASE("nelder mead on a tilted quadratic") {
    auto f = [](const std::array<double, 2>& x) {
      const double u = x[0] - 1.0, v = x[1] + 2.0;
      return 3.0 * u * u + u * v + v * v;
    };
    auto r = nelder_mead_2d(f, {0.0, 0.0}, {0.5, 0.5}, 1e-16, 2000);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r.x[1] == doctest::Approx(-2.0).epsilon(1e-5));
    CHECK(r.evaluations <= 2000);
  }

  TEST_CASE("lanczos gamma against the standard library") {
    for (double x = 0.5; x <= 30.0; x += 0.125) {
      CHECK(lanczos_gamma(x) == doctest::Approx(std::tgamma(x)).epsilon(1e-12));
    }
    CHECK(lanczos_gamma(0.5) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-14));
  }

  TEST_CASE("least squares line and grids") {
    std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    auto f = least_squares_line(x, y);
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.max_abs_residual < 1e-12);
    auto l = linspace(0.0, 1.0, 5);
    CHECK(l.size() == 5);
    CHECK(l[2] == doctest::Approx(0.5));
    auto g = logspace(1e-6, 1e-3, 4);
    CHECK(g.front() == doctest::Approx(1e-6));
    CHECK(g[1] == doctest::Approx(1e-5));
    CHECK(g.back() == doctest::Approx(1e-3));
  }

  TEST_CASE("parallel_for visits each index once and rethrows") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    bool once = true;
    for (auto& h : hits) once = once && h.load() == 1;
    CHECK(once);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                      if (i == 7) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    CHECK(thread_count() >= 1);
  }
}
