#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace needleiso::numerics {

struct SimpsonOptions {
  double abs_tol = 1e-10;
  int max_depth = 40;
  // subdivisions forced before the error test, so narrow peaks are not missed
  int min_depth = 5;
};

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, SimpsonOptions opt = {});

// 8-point Gauss-Legendre nodes/weights on [-1, 1]
inline constexpr std::array<double, 8> kGLNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
    -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
    0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGLWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
    0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
    0.2223810344533745, 0.1012285362903763};

template <class F>
double gauss_legendre8(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < 8; ++i) s += kGLWeights[i] * f(mid + half * kGLNodes[i]);
  return s * half;
}

// Bisection on [lo, hi]; f(lo) and f(hi) must have opposite signs (or be zero).
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double tol = 1e-12, int max_iter = 200);

struct ScalarMin {
  double x;
  double fx;
};

ScalarMin golden_section(const std::function<double(double)>& f, double lo,
                         double hi, double tol = 1e-10, int max_iter = 200);

struct NelderMeadResult {
  std::array<double, 2> x;
  double fx;
  int evaluations;
};

NelderMeadResult nelder_mead_2d(
    const std::function<double(const std::array<double, 2>&)>& f,
    std::array<double, 2> start, std::array<double, 2> step, double ftol = 1e-12,
    int max_eval = 400);

// Lanczos approximation, g = 7, 9 coefficients; relative error ~1e-15 for x >= 0.5.
double lanczos_gamma(double x);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_residual = 0.0;
};

LineFit least_squares_line(std::span<const double> x, std::span<const double> y);

std::vector<double> linspace(double a, double b, std::size_t n);
std::vector<double> logspace(double a, double b, std::size_t n);

// Worker count: hardware concurrency capped by NEEDLE_ISO_THREADS (>= 1).
unsigned thread_count();

// Runs body(i) for i in [0, n). Results must be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace needleiso::numerics
