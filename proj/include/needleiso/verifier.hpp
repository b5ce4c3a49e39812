#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "needleiso/model_geometry.hpp"
#include "needleiso/needle_localization.hpp"

namespace needleiso {

enum class Direction { GreaterEq, LessEq };

struct CheckRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  Direction relation = Direction::GreaterEq;
  double tolerance = 0.0;
  double margin = 0.0;  // lhs - rhs for >=, rhs - lhs for <=
  bool passed = false;
  std::optional<double> deficit;  // slack the bound consumes, where meaningful
};

struct VerificationReport {
  std::vector<CheckRow> checks;
  std::optional<double> fitted_constant;

  void add(std::string name, double lhs, Direction rel, double rhs, double tol,
           std::optional<double> deficit = std::nullopt);
  bool all_passed() const;
  const CheckRow* find(const std::string& name) const;
  double worst_margin() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

using VolumeTable = std::map<double, double>;  // radius -> m(B_r)

VerificationReport bishop_gromov_check(const VolumeTable& volumes, CurvatureDimension cd,
                                       double epsilon, double tolerance = 1e-9);
VerificationReport annuli_check(const VolumeTable& volumes, CurvatureDimension cd, double epsilon,
                                double tolerance = 1e-9);

struct NeedleSummary {
  double length = 0.0;
  double quotient_weight = 0.0;
  double ball_ratio = 1.0;  // mbar_q(B_rbar) / mbar(B_rbar)
};

double needle_profile_bound(std::span<const NeedleSummary> needles, CurvatureDimension cd,
                            double epsilon, double delta, double rbar, double vE);

struct NeedleData {
  double length = 0.0;
  double quotient_weight = 0.0;
  double mass_ball = 0.0;     // mbar_q(B_rbar)
  double mass_annulus = 0.0;  // mbar_q(B_{rbar+2delta} \ B_rbar)
  double mass_e = 0.0;        // mbar_q(E)
  std::optional<double> min_annulus_param;
};

struct ChainData {
  double rbar = 0.0;
  double delta = 0.0;
  double mbar_ball = 0.0;
  double mbar_e = 0.0;
  std::optional<double> mbar_plus_e;
  double outer_mass = 0.0;  // m(B_{rbar+2delta})
  double m_ball = 0.0;      // m(B_rbar)
  double m_e = 0.0;
  std::optional<double> m_plus_e;
  std::vector<NeedleData> needles;
};

// Radial needle data of the model space `space`, scaled by (1 - eta), with
// E the centred ball of radius cap_radius (default delta/2).
ChainData model_chain_data(CurvatureDimension space, double rbar, double delta, double eta,
                           std::optional<double> cap_radius = std::nullopt);

ChainData chain_data_from_partition(const DiscreteMMSpace& space, const LocalizationProblem& prob,
                                    const TransportSolution& sol, const NeedlePartition& part);

VerificationReport proof_chain_check(const ChainData& data, CurvatureDimension cd, double epsilon,
                                     double delta, double eta);

struct DeficitFit {
  std::vector<double> deltas;
  std::vector<double> deficits;  // clamped at 0
  std::vector<double> residuals;
  double C = 0.0;           // least squares through the origin
  double C_envelope = 0.0;  // max deficit / delta
  double max_residual = 0.0;
  double finite_rho_gap = 0.0;  // closed-form vs finite-rho boundary, relative
};

// Empty volume_grid: volumes Vol(delta) * 2^-k, k = 0..5, for each delta.
DeficitFit deficit_fit(CurvatureDimension cd, std::span<const double> delta_grid,
                       std::span<const double> volume_grid = {});

}  // namespace needleiso
