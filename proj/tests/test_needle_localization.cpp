#include <initializer_list>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "needleiso/model_geometry.hpp"
#include "needleiso/needle_localization.hpp"
#include "support/random_spaces.hpp"

using namespace needleiso;

namespace {

DiscreteMMSpace line_space(const std::vector<double>& x, const std::vector<double>& w) {
  std::vector<MMPoint> pts;
  for (std::size_t i = 0; i < x.size(); ++i) pts.push_back({"p" + std::to_string(i), w[i], {x[i]}});
  std::vector<double> d(x.size() * x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) d[i * x.size() + j] = std::abs(x[i] - x[j]);
  return DiscreteMMSpace(pts, d, 0);
}

DiscreteMMSpace line200() {
  std::vector<double> x(200), w(200, 1.0 / 200);
  for (int i = 0; i < 200; ++i) x[i] = i / 199.0;
  return line_space(x, w);
}

struct Pipeline {
  LocalizationProblem prob;
  TransportSolution sol;
  Relation gamma;
  BranchingSets branch;
  NeedlePartition part;
};

Pipeline run(const DiscreteMMSpace& s, const std::vector<std::size_t>& E, double delta, double rbar) {
  Pipeline p;
  p.prob = build_localization(s, E, delta, rbar);
  p.sol = solve_l1(s, p.prob);
  const double tol = default_tolerance(s);
  p.gamma = transport_relation(s, p.sol, delta, rbar, tol);
  p.branch = branching_sets(s, p.gamma);
  p.part = needle_partition(s, p.prob, p.sol, p.gamma, p.branch, tol);
  return p;
}

void check_solution_invariants(const DiscreteMMSpace& s, const LocalizationProblem& prob,
                               const TransportSolution& sol) {
  const std::size_t n = s.size();
  std::vector<double> out(n, 0.0), in(n, 0.0);
  for (const auto& e : sol.plan) {
    CHECK(e.mass >= 0.0);
    out[e.source] += e.mass;
    in[e.sink] += e.mass;
    CHECK(std::abs(sol.potential[e.source] - sol.potential[e.sink] - s.d(e.source, e.sink)) < 1e-9);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double m = prob.mbar[i] * prob.f[i] / prob.c_E;
    CHECK(std::abs(out[i] - std::max(m, 0.0)) < 1e-10);
    CHECK(std::abs(in[i] - std::max(-m, 0.0)) < 1e-10);
    for (std::size_t j = 0; j < n; ++j) CHECK(sol.potential[i] - sol.potential[j] <= s.d(i, j) + 1e-9);
  }
}

}  // namespace

TEST_SUITE("needle_localization") {
  TEST_CASE("space validation") {
    std::vector<MMPoint> pts{{"a", 1, {}}, {"b", 1, {}}, {"c", 1, {}}};
    CHECK_THROWS_AS(DiscreteMMSpace(pts, {0, 1, 5, 1, 0, 1, 5, 1, 0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMMSpace(pts, {0, 1, 2, 1, 0, 1, 2, 2, 0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(DiscreteMMSpace(pts, {0, 1, 2, 1, 0, 1, 2, 1, 0}, 3), std::invalid_argument);
    CHECK_NOTHROW(DiscreteMMSpace(pts, {0, 1, 2, 1, 0, 1, 2, 1, 0}, 0));
    // {0, 3} with mesh 1 has no intermediate point
    std::vector<MMPoint> two{{"a", 1, {}}, {"b", 1, {}}};
    CHECK_THROWS_AS(DiscreteMMSpace(two, {0, 3, 3, 0}, 0, {true, 1.0, 1e-9}), std::invalid_argument);
  }

  TEST_CASE("space from json") {
    nlohmann::json j = {{"metric", "euclidean"},
                        {"center", "o"},
                        {"points", {{{"id", "o"}, {"weight", 1}, {"coords", {0, 0}}},
                                    {{"id", "q"}, {"weight", 2}, {"coords", {3, 4}}}}}};
    auto s = DiscreteMMSpace::from_json(j);
    CHECK(s.d(0, 1) == doctest::Approx(5.0));
    CHECK(s.index_of("q") == 1);
    CHECK(DiscreteMMSpace::from_json(s.to_json()).d(0, 1) == doctest::Approx(5.0));
    j["metric"] = "sphere";
    j["radius"] = 1.0;
    j["points"] = {{{"id", "o"}, {"weight", 1}, {"coords", {0, 0, 1}}}, {{"id", "q"}, {"weight", 1}, {"coords", {1, 0, 0}}}};
    CHECK(DiscreteMMSpace::from_json(j).d(0, 1) == doctest::Approx(std::numbers::pi / 2));
    j["metric"] = "hamming";
    CHECK_THROWS(DiscreteMMSpace::from_json(j));
  }

  TEST_CASE("zero-mean localization function") {
    auto s = line_space({0, 0.05, 0.5}, {1, 1, 2});
    auto p = build_localization(s, {0}, 0.06, 0.6);
    CHECK(p.f[0] == doctest::Approx(0.75));
    CHECK(p.f[1] == doctest::Approx(-0.25));
    CHECK(p.f[2] == doctest::Approx(-0.25));
    double sum = 0, pos = 0;
    for (int i = 0; i < 3; ++i) {
      sum += p.mbar[i] * p.f[i];
      pos += p.mbar[i] * std::max(p.f[i], 0.0);
    }
    CHECK(std::abs(sum) < 1e-12);
    CHECK(std::abs(pos - p.c_E) < 1e-12);
    // E equal to the whole ball is degenerate
    auto t = line_space({0, 0.01, 0.02}, {1, 1, 1});
    CHECK_THROWS_AS(build_localization(t, {0, 1, 2}, 0.05, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(build_localization(s, {2}, 0.06, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(build_localization(s, {}, 0.06, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(build_localization(s, {0}, 0.1, 0.6), std::invalid_argument);
  }

  TEST_CASE("zero mean on a random 50-point space") {
    auto s = testspaces::random_tree(50, 5);
    auto inst = testspaces::random_instance(s, 6);
    auto p = build_localization(s, inst.E, inst.delta, inst.rbar);
    double sum = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sum += p.mbar[i] * p.f[i];
      pos += p.mbar[i] * std::max(p.f[i], 0.0);
      neg += p.mbar[i] * std::max(-p.f[i], 0.0);
      const bool in_e = std::count(inst.E.begin(), inst.E.end(), i) > 0;
      if (in_e) CHECK(p.f[i] > 0);
      else if (p.in_ball[i]) CHECK(p.f[i] < 0);
      else CHECK(p.f[i] == 0.0);
    }
    CHECK(std::abs(sum) < 1e-12);
    CHECK(std::abs(pos - neg) < 1e-12);
  }

  TEST_CASE("transport examples") {
    auto s = line_space({0, 1, 2}, {1, 0, 1});
    auto p = build_localization(s, {0}, 0.5, 5.0);
    auto sol = solve_l1(s, p);
    CHECK(sol.cost == doctest::Approx(2.0));
    REQUIRE(sol.plan.size() == 1);
    CHECK(sol.plan[0].source == 0);
    CHECK(sol.plan[0].sink == 2);
    CHECK(sol.plan[0].mass == doctest::Approx(1.0));
    CHECK(sol.potential[0] - sol.potential[2] == doctest::Approx(2.0));

    // two unit sources, two unit sinks: every matching costs 4 in unit masses
    auto t = line_space({0, 1, 2, 3}, {1, 1, 1, 1});
    auto q = build_localization(t, {0, 1}, 1.5, 15.0);
    auto sol2 = solve_l1(t, q);
    CHECK(sol2.cost == doctest::Approx(2.0));  // per unit of source mass: 4 / 2
    CHECK(sol2.cost == doctest::Approx(brute_force_transport_cost(t, q)));
    check_solution_invariants(t, q, sol2);
  }

  TEST_CASE("transport against brute force on small spaces") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      auto s = seed % 2 ? testspaces::random_tree(4 + seed % 5, seed) : testspaces::random_line(4 + seed % 5, seed);
      auto inst = testspaces::random_instance(s, seed + 100);
      auto p = build_localization(s, inst.E, inst.delta, inst.rbar);
      auto sol = solve_l1(s, p);
      CHECK(std::abs(sol.cost - brute_force_transport_cost(s, p)) <= 1e-12 * std::max(1.0, sol.cost));
      check_solution_invariants(s, p, sol);
    }
  }

  TEST_CASE("line: gamma bar is the full order, no branching, single ray") {
    auto s = line200();
    std::vector<std::size_t> E(10);
    std::iota(E.begin(), E.end(), std::size_t{0});
    auto p = run(s, E, 0.05, 1.0);
    check_solution_invariants(s, p.prob, p.sol);
    for (std::size_t u = 0; u < 199; u += 7)
      for (std::size_t v = u; v < 199; v += 5) CHECK(p.gamma.test(u, v));
    CHECK_FALSE(p.gamma.test(50, 10));
    CHECK(p.branch.plus.empty());
    CHECK(p.branch.minus.empty());
    REQUIRE(p.part.rays.size() == 1);
    auto a = audit_partition(s, p.prob, p.sol, p.part);
    CHECK(a.zero_mean <= 1e-9);
    CHECK(a.ok());
  }

  TEST_CASE("tree: gamma bar equals the closure of path orders") {
    for (std::uint64_t seed = 11; seed <= 16; ++seed) {
      std::vector<std::size_t> parent;
      auto s = testspaces::random_tree(12 + seed % 8, seed, &parent);
      auto inst = testspaces::random_instance(s, seed);
      auto prob = build_localization(s, inst.E, inst.delta, inst.rbar);
      auto sol = solve_l1(s, prob);
      const double tol = default_tolerance(s);
      auto g = transport_relation(s, sol, inst.delta, inst.rbar, tol);
      const std::size_t n = s.size();
      auto path = [&](std::size_t x, std::size_t y) {
        std::vector<std::size_t> up, down;
        std::vector<char> anc(n, 0);
        for (std::size_t a = x;; a = parent[a]) {
          anc[a] = 1;
          if (a == 0) break;
        }
        std::size_t m = y;
        while (!anc[m]) {
          down.push_back(m);
          m = parent[m];
        }
        for (std::size_t a = x; a != m; a = parent[a]) up.push_back(a);
        up.push_back(m);
        up.insert(up.end(), down.rbegin(), down.rend());
        return up;
      };
      std::vector<std::vector<char>> oracle(n, std::vector<char>(n, 0));
      const std::size_t c = s.center();
      for (std::size_t x = 0; x < n; ++x) {
        if (s.d(c, x) > inst.delta + tol) continue;
        for (std::size_t y = 0; y < n; ++y) {
          if (s.d(c, y) > inst.rbar + tol) continue;
          if (std::abs(sol.potential[x] - sol.potential[y] - s.d(x, y)) > tol) continue;
          auto P = path(x, y);
          for (std::size_t i = 0; i < P.size(); ++i)
            for (std::size_t j = i; j < P.size(); ++j) oracle[P[i]][P[j]] = 1;
        }
      }
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
          if (oracle[i][k])
            for (std::size_t j = 0; j < n; ++j)
              if (oracle[k][j]) oracle[i][j] = 1;
      int mismatch = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) mismatch += (oracle[i][j] != 0) != g.test(i, j);
      CHECK(mismatch == 0);
    }
  }

  TEST_CASE("branching sets: forks and brute force") {
    // Y: centre 0 - 1 - 2, then 2 forks to 3 and 4
    std::vector<MMPoint> pts;
    for (int i = 0; i < 5; ++i) pts.push_back({"y" + std::to_string(i), i == 0 ? 1.0 : 0.5, {}});
    const double D[5][5] = {{0, 1, 2, 3, 3}, {1, 0, 1, 2, 2}, {2, 1, 0, 1, 1}, {3, 2, 1, 0, 2}, {3, 2, 1, 2, 0}};
    std::vector<double> d;
    for (auto& r : D) d.insert(d.end(), r, r + 5);
    DiscreteMMSpace y(pts, d, 0);
    auto p = run(y, {0}, 0.5, 5.0);
    CHECK(std::count(p.branch.plus.begin(), p.branch.plus.end(), 2u) == 1);
    CHECK(std::count(p.branch.plus.begin(), p.branch.plus.end(), 0u) == 1);
    CHECK(p.branch.minus.empty());

    for (std::uint64_t seed = 21; seed <= 26; ++seed) {
      auto s = testspaces::random_tree(15, seed);
      auto inst = testspaces::random_instance(s, seed);
      auto prob = build_localization(s, inst.E, inst.delta, inst.rbar);
      auto sol = solve_l1(s, prob);
      auto g = transport_relation(s, sol, inst.delta, inst.rbar, default_tolerance(s));
      auto b = branching_sets(s, g);
      std::set<std::size_t> plus(b.plus.begin(), b.plus.end()), minus(b.minus.begin(), b.minus.end());
      const std::size_t n = s.size();
      auto inR = [&](std::size_t z, std::size_t w) { return g.test(z, w) || g.test(w, z); };
      for (std::size_t x = 0; x < n; ++x) {
        bool fp = false, fm = false;
        for (std::size_t z = 0; z < n; ++z)
          for (std::size_t w = 0; w < n; ++w) {
            if (g.test(x, z) && g.test(x, w) && !inR(z, w)) fp = true;
            if (g.test(z, x) && g.test(w, x) && !inR(z, w)) fm = true;
          }
        CHECK(fp == (plus.count(x) > 0));
        CHECK(fm == (minus.count(x) > 0));
      }
    }
  }

  TEST_CASE("star: one ray per arm with balanced mass") {
    auto s = testspaces::star(3, 10, 9);
    auto p = run(s, {0}, 0.5, 10.0);
    REQUIRE(p.part.rays.size() == 3);
    std::set<std::size_t> arms;
    for (const auto& ray : p.part.rays) {
      std::set<std::size_t> arm;
      double zm = 0;
      for (std::size_t k = 0; k < ray.points.size(); ++k) {
        const std::size_t q = ray.points[k];
        zm += ray.measure[k] * p.prob.f[q];
        if (q != 0) arm.insert((q - 1) / 10);
      }
      CHECK(arm.size() == 1);
      arms.insert(*arm.begin());
      CHECK(std::abs(zm) < 1e-9);
    }
    CHECK(arms.size() == 3);
    CHECK(audit_partition(s, p.prob, p.sol, p.part).ok());
  }

  TEST_CASE("grid spaces reconstruct the measure") {
    for (std::uint64_t seed = 31; seed <= 34; ++seed) {
      auto s = testspaces::l1_grid(6 + seed % 3, 7, seed % 2 == 0, seed);
      auto inst = testspaces::random_instance(s, seed);
      auto p = run(s, inst.E, inst.delta, inst.rbar);
      auto a = audit_partition(s, p.prob, p.sol, p.part);
      CHECK(a.reconstruction <= 1e-9);
      CHECK(a.zero_mean <= 1e-9);
      CHECK(a.chain_isometry <= 1e-9);
      CHECK(a.diameter_excess <= 1e-9);
      CHECK(a.bt_violations == 0);
    }
  }

  TEST_CASE("partition json") {
    auto s = testspaces::star(2, 5, 3);
    auto p = run(s, {0}, 0.2, 5.0);
    auto j = partition_to_json(s, p.prob, p.part);
    CHECK(j["schema"] == 1);
    CHECK(j["rays"].size() == p.part.rays.size());
  }

  TEST_CASE("radial disintegration") {
    auto flat = radial_disintegration({0, 2}, 0.0, 1.0);
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].needle.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(flat[0].needle.density(0.5) == doctest::Approx(1.0).epsilon(1e-10));  // 2t normalized
    CHECK(check_cd_density(flat[0].needle, {0, 2}).passed);

    auto sph = radial_disintegration({1, 3}, 0.0, std::numbers::pi / 2);
    const auto& w = sph[0].needle;
    const double ratio = w.density(1.0) / w.density(0.5);
    CHECK(ratio == doctest::Approx(std::pow(std::sin(1 / std::sqrt(2.0)) / std::sin(0.5 / std::sqrt(2.0)), 2)).epsilon(1e-9));
    CHECK(check_cd_density(w, {1, 3}).passed);

    auto h = radial_disintegration({1, 3}, 0.1, 1.0);
    CHECK(check_cd_density(h[0].needle, {0.9, 3}).passed);
    CHECK_FALSE(check_cd_density(h[0].needle, {1.1, 3}).passed);
    CHECK_THROWS_AS(radial_disintegration({0, 2}, 0.0, 10.0), std::invalid_argument);
  }
}
