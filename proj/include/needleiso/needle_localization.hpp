#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "needleiso/model_geometry.hpp"
#include "needleiso/weighted_interval.hpp"

namespace needleiso {

struct MMPoint {
  std::string id;
  double weight = 0.0;
  std::vector<double> coords;
};

struct GeodesicCheck {
  bool required = false;
  // pairs farther apart than mesh must have an aligned intermediate point
  double mesh = 0.0;
  double tolerance = 1e-9;
};

class DiscreteMMSpace {
 public:
  DiscreteMMSpace(std::vector<MMPoint> points, std::vector<double> dist, std::size_t center,
                  GeodesicCheck geodesic = {});

  // {points:[{id, weight, coords?}], metric: explicit|euclidean|sphere, dist?, center,
  //  geodesic?: {mesh, tolerance?}}
  static DiscreteMMSpace from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::size_t size() const { return points_.size(); }
  double d(std::size_t i, std::size_t j) const { return dist_[i * points_.size() + j]; }
  double weight(std::size_t i) const { return points_[i].weight; }
  const MMPoint& point(std::size_t i) const { return points_[i]; }
  std::size_t center() const { return center_; }
  std::size_t index_of(const std::string& id) const;
  double diameter() const { return diameter_; }
  double eccentricity(std::size_t i) const;
  bool geodesic() const { return geodesic_.required; }

 private:
  std::vector<MMPoint> points_;
  std::vector<double> dist_;
  std::size_t center_;
  GeodesicCheck geodesic_;
  double diameter_ = 0.0;
};

struct LocalizationProblem {
  std::vector<std::size_t> E;
  double delta = 0.0;
  double rbar = 0.0;
  std::vector<double> mbar;  // restricted to B_{rbar+2delta}, normalized
  std::vector<double> f;
  double c_E = 0.0;
  double outer_mass = 0.0;  // m(B_{rbar+2delta}) before normalization
  double m_E = 0.0;         // m(E) before normalization
  double mbar_E = 0.0;
  double mbar_ball = 0.0;   // mbar(B_rbar)
  std::vector<char> in_ball;   // d(center, p) < rbar
  std::vector<char> in_outer;  // d(center, p) < rbar + 2 delta
};

LocalizationProblem build_localization(const DiscreteMMSpace& space,
                                       const std::vector<std::size_t>& E, double delta,
                                       double rbar);

struct PlanEntry {
  std::size_t source;
  std::size_t sink;
  double mass;  // probability units of mu_0
};

struct TransportSolution {
  std::vector<PlanEntry> plan;
  std::vector<double> potential;
  double cost = 0.0;
};

TransportSolution solve_l1(const DiscreteMMSpace& space, const LocalizationProblem& prob);

// Enumerates basic feasible solutions of the transportation polytope; for
// small supports only (throws beyond 8 support points).
double brute_force_transport_cost(const DiscreteMMSpace& space, const LocalizationProblem& prob);

// Square bit matrix.
class Relation {
 public:
  explicit Relation(std::size_t n = 0);
  std::size_t size() const { return n_; }
  bool test(std::size_t i, std::size_t j) const {
    return (bits_[i * words_ + j / 64] >> (j % 64)) & 1u;
  }
  void set(std::size_t i, std::size_t j) { bits_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64); }
  const std::uint64_t* row(std::size_t i) const { return &bits_[i * words_]; }
  std::uint64_t* row(std::size_t i) { return &bits_[i * words_]; }
  std::size_t words() const { return words_; }
  Relation transposed() const;
  Relation symmetrized() const;  // this union transpose
  void transitive_closure();
  std::size_t count() const;

 private:
  std::size_t n_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

double default_tolerance(const DiscreteMMSpace& space);

Relation transport_relation(const DiscreteMMSpace& space, const TransportSolution& sol,
                            double delta, double rbar, double tol);

struct BranchingSets {
  std::vector<std::size_t> plus;
  std::vector<std::size_t> minus;
};

BranchingSets branching_sets(const DiscreteMMSpace& space, const Relation& gamma_bar);

struct Ray {
  std::vector<std::size_t> points;  // ordered by decreasing potential
  std::vector<double> measure;      // mbar_q on points, sums to 1
  double quotient_weight = 0.0;     // q(ray), normalized mbar units
  std::size_t representative = 0;
};

struct NeedlePartition {
  std::vector<Ray> rays;
  BranchingSets branch;
  std::vector<std::size_t> transport_set;
  std::vector<std::size_t> residual;
  std::vector<std::vector<std::size_t>> cores;  // R-classes on the non-branched set
  double branch_mass = 0.0;
  double potential_range = 0.0;
};

NeedlePartition needle_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                 const TransportSolution& sol, const Relation& gamma_bar,
                                 const BranchingSets& branch, double tol);

// Worst deviation of each partition invariant.
struct PartitionAudit {
  double chain_step = 0.0;       // consecutive phi drop vs distance
  double chain_isometry = 0.0;   // all pairs in a chain
  double reconstruction = 0.0;   // sum_q q * mbar_q vs mbar on T
  double zero_mean = 0.0;        // per-ray integral of f
  double proportionality = 0.0;  // mbar_q(E) vs ratio * mbar(E)
  double diameter_excess = 0.0;  // max(ray diameter - (rbar + delta), 0)
  double containment_excess = 0.0;  // max(d(center, p) - (rbar + 2 delta), 0) over ray points
  std::size_t bt_violations = 0;    // positive-mass ball points outside T
  bool ok(double tol = 1e-9) const;
};

PartitionAudit audit_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                               const TransportSolution& sol, const NeedlePartition& part);

nlohmann::json partition_to_json(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                 const NeedlePartition& part);

struct RadialNeedle {
  WeightedInterval needle;
  double quotient_weight;
};

// Exact radial needles of the model space M_{K,N}: a single needle on [0, R]
// with density s_{K/(N-1)}^{N-1}, normalized to unit mass.
std::vector<RadialNeedle> radial_disintegration(CurvatureDimension cd, double epsilon, double R,
                                                std::size_t grid = kProfileGrid);

}  // namespace needleiso
