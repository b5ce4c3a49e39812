#include "needleiso/needle_localization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace needleiso {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::invalid_argument("space JSON: point id must be a string or integer");
}

}  // namespace

DiscreteMMSpace::DiscreteMMSpace(std::vector<MMPoint> points, std::vector<double> dist,
                                 std::size_t center, GeodesicCheck geodesic)
    : points_(std::move(points)), dist_(std::move(dist)), center_(center), geodesic_(geodesic) {
  const std::size_t n = points_.size();
  if (n == 0) throw std::invalid_argument("space: no points");
  if (dist_.size() != n * n) throw std::invalid_argument("space: distance matrix must be n x n");
  if (center_ >= n) throw std::invalid_argument("space: center out of range");
  std::set<std::string> ids;
  double total = 0.0;
  for (const auto& p : points_) {
    if (!ids.insert(p.id).second) throw std::invalid_argument("space: duplicate point id '" + p.id + "'");
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw std::invalid_argument("space: weight of '" + p.id + "' must be non-negative");
    }
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("space: total weight must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = d(i, j);
      if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("space: distances must be finite and non-negative");
      diameter_ = std::max(diameter_, v);
    }
  }
  const double tol = 1e-9 * std::max(1.0, diameter_);
  for (std::size_t i = 0; i < n; ++i) {
    if (d(i, i) != 0.0) throw std::invalid_argument("space: non-zero diagonal");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(d(i, j) - d(j, i)) > tol) throw std::invalid_argument("space: asymmetric distances");
      if (d(i, j) == 0.0) throw std::invalid_argument("space: distinct points at distance 0");
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double dik = d(i, k);
      for (std::size_t j = 0; j < n; ++j) {
        if (d(i, j) > dik + d(k, j) + tol) {
          throw std::invalid_argument("space: triangle inequality fails for (" + points_[i].id + ", " +
                                      points_[k].id + ", " + points_[j].id + ")");
        }
      }
    }
  }
  if (geodesic_.required) {
    const double gt = geodesic_.tolerance * std::max(1.0, diameter_);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dij = d(i, j);
        if (dij <= geodesic_.mesh + gt) continue;
        bool found = false;
        for (std::size_t k = 0; k < n && !found; ++k) {
          if (k == i || k == j) continue;
          found = d(i, k) + d(k, j) <= dij + gt && d(i, k) < dij && d(k, j) < dij;
        }
        if (!found) {
          throw std::invalid_argument("space: no intermediate point between '" + points_[i].id + "' and '" +
                                      points_[j].id + "' (not geodesic at the given mesh)");
        }
      }
    }
  }
}

DiscreteMMSpace DiscreteMMSpace::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("points")) throw std::invalid_argument("space JSON: missing 'points'");
  std::vector<MMPoint> pts;
  for (const auto& p : j.at("points")) {
    MMPoint m;
    m.id = id_string(p.at("id"));
    m.weight = p.value("weight", 1.0);
    if (p.contains("coords")) m.coords = p.at("coords").get<std::vector<double>>();
    pts.push_back(std::move(m));
  }
  const std::size_t n = pts.size();
  const std::string metric = j.value("metric", std::string("explicit"));
  std::vector<double> dist(n * n, 0.0);
  if (metric == "explicit") {
    const auto& rows = j.at("dist");
    if (rows.size() != n) throw std::invalid_argument("space JSON: 'dist' must have one row per point");
    for (std::size_t a = 0; a < n; ++a) {
      if (rows[a].size() != n) throw std::invalid_argument("space JSON: 'dist' rows must have n entries");
      for (std::size_t b = 0; b < n; ++b) dist[a * n + b] = rows[a][b].get<double>();
    }
  } else if (metric == "euclidean" || metric == "sphere") {
    const double radius = j.value("radius", 1.0);
    for (const auto& p : pts) {
      if (p.coords.empty() || p.coords.size() != pts.front().coords.size()) {
        throw std::invalid_argument("space JSON: every point needs coords of equal dimension");
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const auto& x = pts[a].coords;
        const auto& y = pts[b].coords;
        double v;
        if (metric == "euclidean") {
          double s = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
          v = std::sqrt(s);
        } else {
          double dot = 0.0, nx = 0.0, ny = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) {
            dot += x[k] * y[k];
            nx += x[k] * x[k];
            ny += y[k] * y[k];
          }
          v = radius * std::acos(std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0));
        }
        dist[a * n + b] = dist[b * n + a] = v;
      }
    }
  } else {
    throw std::invalid_argument("space JSON: unknown metric '" + metric + "'");
  }
  if (!j.contains("center")) throw std::invalid_argument("space JSON: missing 'center'");
  const std::string c = id_string(j.at("center"));
  std::size_t center = n;
  for (std::size_t a = 0; a < n; ++a) {
    if (pts[a].id == c) center = a;
  }
  if (center == n) throw std::invalid_argument("space JSON: center '" + c + "' is not a point id");
  GeodesicCheck g;
  if (j.contains("geodesic")) {
    const auto& gj = j.at("geodesic");
    g.required = true;
    g.mesh = gj.at("mesh").get<double>();
    g.tolerance = gj.value("tolerance", 1e-9);
  }
  return DiscreteMMSpace(std::move(pts), std::move(dist), center, g);
}

nlohmann::json DiscreteMMSpace::to_json() const {
  nlohmann::json j;
  j["metric"] = "explicit";
  j["center"] = points_[center_].id;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : points_) {
    nlohmann::json q{{"id", p.id}, {"weight", p.weight}};
    if (!p.coords.empty()) q["coords"] = p.coords;
    pts.push_back(q);
  }
  auto& rows = j["dist"] = nlohmann::json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    std::vector<double> r(dist_.begin() + static_cast<long>(i * size()),
                          dist_.begin() + static_cast<long>((i + 1) * size()));
    rows.push_back(r);
  }
  if (geodesic_.required) j["geodesic"] = {{"mesh", geodesic_.mesh}, {"tolerance", geodesic_.tolerance}};
  return j;
}

std::size_t DiscreteMMSpace::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (points_[i].id == id) return i;
  }
  throw std::invalid_argument("unknown point id '" + id + "'");
}

double DiscreteMMSpace::eccentricity(std::size_t i) const {
  double e = 0.0;
  for (std::size_t j = 0; j < size(); ++j) e = std::max(e, d(i, j));
  return e;
}

LocalizationProblem build_localization(const DiscreteMMSpace& space, const std::vector<std::size_t>& E,
                                       double delta, double rbar) {
  if (E.empty()) throw std::invalid_argument("localization: E is empty");
  if (!(delta > 0.0) || !(rbar > 0.0)) throw std::invalid_argument("localization: delta and rbar must be positive");
  if (delta > rbar / 10.0 * (1.0 + 1e-12)) throw std::invalid_argument("localization: delta must not exceed rbar/10");
  const std::size_t n = space.size();
  const std::size_t c = space.center();
  LocalizationProblem p;
  p.delta = delta;
  p.rbar = rbar;
  std::vector<char> in_e(n, 0);
  for (std::size_t e : E) {
    if (e >= n) throw std::invalid_argument("localization: E index out of range");
    if (in_e[e]) throw std::invalid_argument("localization: duplicate point in E");
    if (!(space.d(c, e) < delta)) {
      throw std::invalid_argument("localization: point '" + space.point(e).id + "' of E is outside B_delta");
    }
    in_e[e] = 1;
  }
  p.E = E;
  std::sort(p.E.begin(), p.E.end());
  p.in_ball.assign(n, 0);
  p.in_outer.assign(n, 0);
  double outer = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.in_ball[i] = space.d(c, i) < rbar;
    p.in_outer[i] = space.d(c, i) < rbar + 2.0 * delta;
    if (p.in_outer[i]) outer += space.weight(i);
  }
  p.outer_mass = outer;
  p.mbar.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.in_outer[i]) p.mbar[i] = space.weight(i) / outer;
  }
  for (std::size_t e : p.E) {
    p.mbar_E += p.mbar[e];
    p.m_E += space.weight(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (p.in_ball[i]) p.mbar_ball += p.mbar[i];
  }
  if (!(p.mbar_E > 0.0)) throw std::invalid_argument("localization: E has zero measure");
  if (!(p.mbar_E < p.mbar_ball)) throw std::invalid_argument("localization: m(E) must be smaller than m(B_rbar)");
  const double ratio = p.mbar_E / p.mbar_ball;
  p.f.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p.f[i] = (in_e[i] ? 1.0 : 0.0) - (p.in_ball[i] ? ratio : 0.0);
    if (p.f[i] > 0.0) p.c_E += p.mbar[i] * p.f[i];
  }
  return p;
}

TransportSolution solve_l1(const DiscreteMMSpace& space, const LocalizationProblem& prob) {
  const std::size_t n = space.size();
  if (prob.f.size() != n || prob.mbar.size() != n) throw std::invalid_argument("solve_l1: problem does not match space");
  std::vector<std::size_t> src, snk;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = prob.mbar[i] * prob.f[i];
    if (m > 0.0) {
      src.push_back(i);
      a.push_back(m / prob.c_E);
    } else if (m < 0.0) {
      snk.push_back(i);
      b.push_back(-m / prob.c_E);
    }
  }
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (src.empty() || snk.empty() || std::abs(sa - 1.0) > 1e-10 || std::abs(sb - 1.0) > 1e-10) {
    throw std::invalid_argument("solve_l1: unbalanced marginals");
  }
  for (auto& x : b) x *= sa / sb;

  const std::size_t S = src.size(), T = snk.size(), V = S + T;
  std::vector<double> cost(S * T);
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < T; ++j) cost[i * T + j] = space.d(src[i], snk[j]);
  }
  std::vector<double> flow(S * T, 0.0), ra = a, rb = b, pot(V, 0.0), dist(V);
  std::vector<long> prev(V);
  std::vector<char> done(V);
  const double eps = 1e-15;
  double remaining = sa;
  const std::size_t max_iter = 10 * V * V + 100;
  for (std::size_t iter = 0; remaining > eps && iter < max_iter; ++iter) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < S; ++i) {
      if (ra[i] > eps) dist[i] = 0.0;
    }
    for (std::size_t step = 0; step < V; ++step) {
      std::size_t u = V;
      for (std::size_t v = 0; v < V; ++v) {
        if (!done[v] && dist[v] < kInf && (u == V || dist[v] < dist[u])) u = v;
      }
      if (u == V) break;
      done[u] = 1;
      if (u < S) {
        for (std::size_t j = 0; j < T; ++j) {
          const double nd = dist[u] + std::max(0.0, cost[u * T + j] + pot[u] - pot[S + j]);
          if (nd < dist[S + j]) {
            dist[S + j] = nd;
            prev[S + j] = static_cast<long>(u);
          }
        }
      } else {
        const std::size_t j = u - S;
        for (std::size_t i = 0; i < S; ++i) {
          if (flow[i * T + j] <= eps) continue;
          const double nd = dist[u] + std::max(0.0, -cost[i * T + j] + pot[u] - pot[i]);
          if (nd < dist[i]) {
            dist[i] = nd;
            prev[i] = static_cast<long>(u);
          }
        }
      }
    }
    std::size_t target = V;
    for (std::size_t j = 0; j < T; ++j) {
      if (rb[j] > eps && dist[S + j] < kInf && (target == V || dist[S + j] < dist[target])) target = S + j;
    }
    if (target == V) break;
    const double cap = dist[target];
    for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], cap);

    // bottleneck along the alternating path back to a source with spare supply
    double theta = rb[target - S];
    std::size_t v = target;
    std::size_t start = 0;
    for (;;) {
      const auto i = static_cast<std::size_t>(prev[v]);
      if (prev[i] < 0) {
        start = i;
        break;
      }
      const auto jb = static_cast<std::size_t>(prev[i]) - S;
      theta = std::min(theta, flow[i * T + jb]);
      v = static_cast<std::size_t>(prev[i]);
    }
    theta = std::min(theta, ra[start]);
    v = target;
    for (;;) {
      const auto i = static_cast<std::size_t>(prev[v]);
      flow[i * T + (v - S)] += theta;
      if (prev[i] < 0) break;
      const auto jb = static_cast<std::size_t>(prev[i]) - S;
      flow[i * T + jb] -= theta;
      if (flow[i * T + jb] < eps) flow[i * T + jb] = 0.0;
      v = static_cast<std::size_t>(prev[i]);
    }
    ra[start] -= theta;
    rb[target - S] -= theta;
    if (ra[start] < eps) ra[start] = 0.0;
    if (rb[target - S] < eps) rb[target - S] = 0.0;
    remaining = std::accumulate(ra.begin(), ra.end(), 0.0);
  }
  if (remaining > 1e-12) throw std::runtime_error("solve_l1: flow did not converge");

  TransportSolution sol;
  std::vector<double> phi_sink(T);
  for (std::size_t j = 0; j < T; ++j) phi_sink[j] = -pot[S + j];
  sol.potential.assign(n, kInf);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t j = 0; j < T; ++j) {
      sol.potential[x] = std::min(sol.potential[x], phi_sink[j] + space.d(x, snk[j]));
    }
  }
  const double shift = sol.potential[space.center()];
  for (auto& p : sol.potential) p -= shift;
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      const double m = flow[i * T + j];
      if (m > eps) {
        sol.plan.push_back({src[i], snk[j], m});
        sol.cost += m * cost[i * T + j];
      }
    }
  }
  return sol;
}

double brute_force_transport_cost(const DiscreteMMSpace& space, const LocalizationProblem& prob) {
  std::vector<std::size_t> src, snk;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double m = prob.mbar[i] * prob.f[i] / prob.c_E;
    if (m > 0) {
      src.push_back(i);
      a.push_back(m);
    } else if (m < 0) {
      snk.push_back(i);
      b.push_back(-m);
    }
  }
  const std::size_t S = src.size(), T = snk.size();
  if (S + T > 8) throw std::invalid_argument("brute_force_transport_cost: support exceeds 8 points");
  if (S == 0 || T == 0) return 0.0;
  const std::size_t cells = S * T, basis = S + T - 1;
  double best = kInf;
  std::vector<char> pick(cells, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(basis), 1);
  std::sort(pick.begin(), pick.end(), std::greater<>());
  do {
    // a spanning tree of the bipartite graph; flows fixed by peeling leaves
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < cells; ++c) {
      if (pick[c]) chosen.push_back(c);
    }
    std::vector<double> ra = a, rb = b, x(cells, 0.0);
    std::vector<char> used(cells, 0);
    bool ok = true;
    for (std::size_t round = 0; round < basis && ok; ++round) {
      bool progressed = false;
      for (std::size_t node = 0; node < S + T && !progressed; ++node) {
        std::size_t deg = 0, last = 0;
        for (std::size_t c : chosen) {
          if (used[c]) continue;
          const std::size_t i = c / T, j = c % T;
          if ((node < S && i == node) || (node >= S && j == node - S)) {
            ++deg;
            last = c;
          }
        }
        if (deg != 1) continue;
        const std::size_t i = last / T, j = last % T;
        const double v = node < S ? ra[i] : rb[j];
        x[last] = v;
        ra[i] -= v;
        rb[j] -= v;
        used[last] = 1;
        progressed = true;
      }
      if (!progressed) ok = false;
    }
    if (!ok) continue;
    double c = 0.0;
    for (std::size_t k = 0; k < cells && ok; ++k) {
      if (x[k] < -1e-12) ok = false;
      c += x[k] * space.d(src[k / T], snk[k % T]);
    }
    for (double r : ra) ok = ok && std::abs(r) < 1e-10;
    for (double r : rb) ok = ok && std::abs(r) < 1e-10;
    if (ok) best = std::min(best, c);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

Relation::Relation(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * ((n + 63) / 64), 0) {}

Relation Relation::transposed() const {
  Relation t(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (test(i, j)) t.set(j, i);
    }
  }
  return t;
}

Relation Relation::symmetrized() const {
  Relation s = transposed();
  for (std::size_t k = 0; k < bits_.size(); ++k) s.bits_[k] |= bits_[k];
  return s;
}

void Relation::transitive_closure() {
  for (std::size_t k = 0; k < n_; ++k) {
    const std::uint64_t* rk = row(k);
    for (std::size_t i = 0; i < n_; ++i) {
      if (!test(i, k)) continue;
      std::uint64_t* ri = row(i);
      for (std::size_t w = 0; w < words_; ++w) ri[w] |= rk[w];
    }
  }
}

std::size_t Relation::count() const {
  std::size_t c = 0;
  for (auto w : bits_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

double default_tolerance(const DiscreteMMSpace& space) { return 1e-7 * std::max(space.diameter(), 1e-300); }

Relation transport_relation(const DiscreteMMSpace& space, const TransportSolution& sol, double delta,
                            double rbar, double tol) {
  const std::size_t n = space.size();
  const auto& phi = sol.potential;
  const std::size_t c = space.center();
  auto in_gamma = [&](std::size_t x, std::size_t y) { return phi[x] - phi[y] >= space.d(x, y) - tol; };

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t x = 0; x < n; ++x) {
    if (space.d(c, x) > delta + tol) continue;
    for (std::size_t y = 0; y < n; ++y) {
      if (y == x || space.d(c, y) > rbar + tol) continue;
      if (in_gamma(x, y)) pairs.emplace_back(x, y);
    }
  }
  const std::size_t P = pairs.size();
  const std::size_t pw = (P + 63) / 64;
  // membership of each point in the geodesic hull I(x, y) of each pair
  std::vector<std::uint64_t> memb(n * pw, 0);
  for (std::size_t k = 0; k < P; ++k) {
    const auto [x, y] = pairs[k];
    const double dxy = space.d(x, y);
    for (std::size_t z = 0; z < n; ++z) {
      if (space.d(x, z) + space.d(z, y) <= dxy + tol) memb[z * pw + k / 64] |= std::uint64_t{1} << (k % 64);
    }
  }
  Relation g(n);
  for (std::size_t u = 0; u < n; ++u) {
    const std::uint64_t* mu = &memb[u * pw];
    bool any = false;
    for (std::size_t w = 0; w < pw; ++w) any = any || mu[w];
    if (!any) continue;
    g.set(u, u);
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u || !in_gamma(u, v)) continue;
      const std::uint64_t* mv = &memb[v * pw];
      for (std::size_t w = 0; w < pw; ++w) {
        if (mu[w] & mv[w]) {
          g.set(u, v);
          break;
        }
      }
    }
  }
  g.transitive_closure();
  return g;
}

namespace {

std::vector<char> transport_mask(const Relation& r) {
  std::vector<char> t(r.size(), 0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (i != j && r.test(i, j)) {
        t[i] = t[j] = 1;
      }
    }
  }
  return t;
}

std::vector<std::size_t> forks(const Relation& g, const Relation& R, const std::vector<char>& in_t) {
  std::vector<std::size_t> out;
  const std::size_t n = g.size(), W = g.words();
  for (std::size_t x = 0; x < n; ++x) {
    if (!in_t[x]) continue;
    const std::uint64_t* fx = g.row(x);
    bool branch = false;
    for (std::size_t z = 0; z < n && !branch; ++z) {
      if (!g.test(x, z) || !in_t[z]) continue;
      const std::uint64_t* rz = R.row(z);
      for (std::size_t w = 0; w < W && !branch; ++w) {
        std::uint64_t bad = fx[w] & ~rz[w];
        while (bad && !branch) {
          const std::size_t q = w * 64 + static_cast<std::size_t>(std::countr_zero(bad));
          branch = in_t[q];
          bad &= bad - 1;
        }
      }
    }
    if (branch) out.push_back(x);
  }
  return out;
}

}  // namespace

BranchingSets branching_sets(const DiscreteMMSpace& space, const Relation& gamma_bar) {
  if (gamma_bar.size() != space.size()) throw std::invalid_argument("branching_sets: relation size mismatch");
  const Relation R = gamma_bar.symmetrized();
  const auto in_t = transport_mask(R);
  BranchingSets b;
  b.plus = forks(gamma_bar, R, in_t);
  b.minus = forks(gamma_bar.transposed(), R, in_t);
  // forward propagation: a non-branching point only reaches non-branching points
  std::vector<char> plus(space.size(), 0);
  for (auto x : b.plus) plus[x] = 1;
  for (std::size_t x = 0; x < space.size(); ++x) {
    if (!in_t[x] || plus[x]) continue;
    for (std::size_t y = 0; y < space.size(); ++y) {
      if (gamma_bar.test(x, y) && plus[y]) {
        throw std::logic_error("branching_sets: forward branching point reached from a non-branching point");
      }
    }
  }
  return b;
}

namespace {

struct RayBuild {
  std::map<std::size_t, double> nu;  // unnormalized mbar mass per point
  double flow = 0.0;
};

bool isometric_union(const DiscreteMMSpace& space, const std::vector<double>& phi, const RayBuild& r,
                     const std::vector<std::size_t>& extra, double tol, double max_len) {
  double top = -kInf, bot = kInf;
  for (const auto& [p, m] : r.nu) {
    top = std::max(top, phi[p]);
    bot = std::min(bot, phi[p]);
  }
  for (std::size_t e : extra) {
    top = std::max(top, phi[e]);
    bot = std::min(bot, phi[e]);
  }
  if (top - bot > max_len + tol) return false;
  for (std::size_t e : extra) {
    for (const auto& [p, m] : r.nu) {
      if (std::abs(std::abs(phi[e] - phi[p]) - space.d(e, p)) > tol) return false;
    }
    for (std::size_t e2 : extra) {
      if (std::abs(std::abs(phi[e] - phi[e2]) - space.d(e, e2)) > tol) return false;
    }
  }
  return true;
}

}  // namespace

NeedlePartition needle_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                 const TransportSolution& sol, const Relation& gamma_bar,
                                 const BranchingSets& branch, double tol) {
  const std::size_t n = space.size();
  const auto& phi = sol.potential;
  const Relation R = gamma_bar.symmetrized();
  const auto in_t = transport_mask(R);
  NeedlePartition part;
  part.branch = branch;
  std::vector<char> branched(n, 0);
  for (auto x : branch.plus) branched[x] = 1;
  for (auto x : branch.minus) branched[x] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_t[i]) {
      part.transport_set.push_back(i);
      if (branched[i]) part.branch_mass += prob.mbar[i];
    } else {
      part.residual.push_back(i);
      if (prob.in_ball[i] && prob.mbar[i] > 0.0) {
        throw std::runtime_error("needle_partition: positive-mass point '" + space.point(i).id +
                                 "' of B_rbar lies outside the transport set");
      }
    }
  }

  // R-classes on the non-branched transport set
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_t[i] || branched[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (in_t[j] && !branched[j] && R.test(i, j)) parent[find(j)] = find(i);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_t[i] && !branched[i]) classes[find(i)].push_back(i);
  }
  for (auto& [root, pts] : classes) {
    std::stable_sort(pts.begin(), pts.end(), [&](std::size_t x, std::size_t y) { return phi[x] > phi[y]; });
    part.cores.push_back(pts);
  }

  const double max_len = prob.rbar + prob.delta;
  std::vector<PlanEntry> entries = sol.plan;
  std::stable_sort(entries.begin(), entries.end(), [&](const PlanEntry& x, const PlanEntry& y) {
    if (phi[x.source] != phi[y.source]) return phi[x.source] > phi[y.source];
    if (x.source != y.source) return x.source < y.source;
    return x.sink < y.sink;
  });
  std::vector<RayBuild> rays;
  for (const auto& e : entries) {
    const double m = e.mass * prob.c_E;
    std::size_t target = rays.size();
    for (std::size_t r = 0; r < rays.size(); ++r) {
      if (isometric_union(space, phi, rays[r], {e.source, e.sink}, tol, max_len)) {
        target = r;
        break;
      }
    }
    if (target == rays.size()) rays.emplace_back();
    rays[target].nu[e.source] += m / prob.f[e.source];
    rays[target].nu[e.sink] += m / -prob.f[e.sink];
    rays[target].flow += m;
  }
  for (bool merged = true; merged;) {
    merged = false;
    for (std::size_t a = 0; a < rays.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < rays.size() && !merged; ++b) {
        std::vector<std::size_t> pts;
        for (const auto& [p, m] : rays[b].nu) pts.push_back(p);
        if (isometric_union(space, phi, rays[a], pts, tol, max_len)) {
          for (const auto& [p, m] : rays[b].nu) rays[a].nu[p] += m;
          rays[a].flow += rays[b].flow;
          rays.erase(rays.begin() + static_cast<long>(b));
          merged = true;
        }
      }
    }
  }

  // transport points without f-mass: shared among compatible rays by flow
  for (std::size_t z = 0; z < n; ++z) {
    if (!in_t[z] || prob.f[z] != 0.0 || !(prob.mbar[z] > 0.0)) continue;
    std::vector<std::size_t> ok;
    double total = 0.0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      if (rays[r].nu.count(z) || isometric_union(space, phi, rays[r], {z}, tol, max_len)) {
        ok.push_back(r);
        total += rays[r].flow;
      }
    }
    if (ok.empty() || !(total > 0.0)) {
      RayBuild lone;
      lone.nu[z] = prob.mbar[z];
      rays.push_back(lone);
      continue;
    }
    for (std::size_t r : ok) rays[r].nu[z] += prob.mbar[z] * rays[r].flow / total;
  }

  double lo = kInf, hi = -kInf;
  for (const auto& rb : rays) {
    double q = 0.0;
    for (const auto& [p, m] : rb.nu) q += m;
    if (!(q > 0.0)) continue;
    Ray ray;
    ray.quotient_weight = q;
    for (const auto& [p, m] : rb.nu) ray.points.push_back(p);
    std::stable_sort(ray.points.begin(), ray.points.end(),
                     [&](std::size_t x, std::size_t y) { return phi[x] > phi[y]; });
    for (std::size_t p : ray.points) {
      ray.measure.push_back(rb.nu.at(p) / q);
      lo = std::min(lo, phi[p]);
      hi = std::max(hi, phi[p]);
    }
    // chain point nearest the median potential level
    ray.representative = ray.points[(ray.points.size() - 1) / 2];
    part.rays.push_back(std::move(ray));
  }
  part.potential_range = part.rays.empty() ? 0.0 : hi - lo;
  return part;
}

bool PartitionAudit::ok(double tol) const {
  return chain_step <= tol && chain_isometry <= tol && reconstruction <= tol && zero_mean <= tol &&
         proportionality <= tol && diameter_excess <= tol && containment_excess <= tol && bt_violations == 0;
}

PartitionAudit audit_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                               const TransportSolution& sol, const NeedlePartition& part) {
  PartitionAudit a;
  const auto& phi = sol.potential;
  const std::size_t n = space.size();
  std::vector<double> recon(n, 0.0);
  std::vector<char> in_t(n, 0);
  for (auto p : part.transport_set) in_t[p] = 1;
  for (const auto& ray : part.rays) {
    double zm = 0.0, me = 0.0, mb = 0.0, diam = 0.0;
    for (std::size_t k = 0; k < ray.points.size(); ++k) {
      const std::size_t p = ray.points[k];
      recon[p] += ray.quotient_weight * ray.measure[k];
      zm += ray.measure[k] * prob.f[p];
      if (prob.f[p] > 0.0) me += ray.measure[k];
      if (prob.in_ball[p]) mb += ray.measure[k];
      a.containment_excess =
          std::max(a.containment_excess, space.d(space.center(), p) - (prob.rbar + 2.0 * prob.delta));
      if (k + 1 < ray.points.size()) {
        const std::size_t q = ray.points[k + 1];
        a.chain_step = std::max(a.chain_step, std::abs(phi[p] - phi[q] - space.d(p, q)));
      }
      for (std::size_t l = k + 1; l < ray.points.size(); ++l) {
        const std::size_t q = ray.points[l];
        a.chain_isometry = std::max(a.chain_isometry, std::abs(std::abs(phi[p] - phi[q]) - space.d(p, q)));
        diam = std::max(diam, space.d(p, q));
      }
    }
    a.zero_mean = std::max(a.zero_mean, std::abs(zm));
    a.proportionality = std::max(a.proportionality, std::abs(me - mb / prob.mbar_ball * prob.mbar_E));
    a.diameter_excess = std::max(a.diameter_excess, diam - (prob.rbar + prob.delta));
  }
  for (std::size_t p = 0; p < n; ++p) {
    a.reconstruction = std::max(a.reconstruction, std::abs(recon[p] - (in_t[p] ? prob.mbar[p] : 0.0)));
    if (prob.in_ball[p] && prob.mbar[p] > 0.0 && !in_t[p]) ++a.bt_violations;
  }
  return a;
}

nlohmann::json partition_to_json(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                 const NeedlePartition& part) {
  auto ids = [&](const std::vector<std::size_t>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto i : v) a.push_back(space.point(i).id);
    return a;
  };
  nlohmann::json j;
  j["schema"] = 1;
  j["center"] = space.point(space.center()).id;
  j["delta"] = prob.delta;
  j["rbar"] = prob.rbar;
  j["E"] = ids(prob.E);
  auto& rays = j["rays"] = nlohmann::json::array();
  for (std::size_t r = 0; r < part.rays.size(); ++r) {
    const auto& ray = part.rays[r];
    rays.push_back({{"id", r},
                    {"points", ids(ray.points)},
                    {"measure", ray.measure},
                    {"quotient_weight", ray.quotient_weight},
                    {"representative", space.point(ray.representative).id}});
  }
  j["branch_plus"] = ids(part.branch.plus);
  j["branch_minus"] = ids(part.branch.minus);
  j["branch_mass"] = part.branch_mass;
  j["residual"] = ids(part.residual);
  j["transport_set_size"] = part.transport_set.size();
  j["cores"] = part.cores.size();
  return j;
}

std::vector<RadialNeedle> radial_disintegration(CurvatureDimension cd, double epsilon, double R,
                                                std::size_t grid) {
  if (!(cd.N > 1.0)) throw std::invalid_argument("radial_disintegration: N must exceed 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("radial_disintegration: epsilon must be non-negative");
  if (!(R > 0.0) || R > 4.0 * rbar(cd) * (1.0 + 1e-12)) {
    throw std::invalid_argument("radial_disintegration: R must lie in (0, 4 rbar]");
  }
  const double len = std::min(R, model_cap_radius(cd));
  WeightedInterval w(0.0, len, [cd](double t) { return model_radial_density(cd, t); }, {}, grid);
  return {{w.normalized(), model_volume(cd, len)}};
}

}  // namespace needleiso
