#include "needleiso/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "needleiso/model_geometry.hpp"
#include "needleiso/model_profiles.hpp"
#include "needleiso/numerics.hpp"
#include "needleiso/verifier.hpp"

namespace needleiso::cli {

namespace {

struct HelpRequested {
  std::string text;
};

const std::map<Command, std::vector<std::string>> kRequired = {
    {Command::Profile, {"K", "N", "D", "vmin", "vmax", "steps"}},
    {Command::Volume, {"K", "N", "rmax", "steps"}},
    {Command::Needle, {"space", "E", "delta"}},
    {Command::Verify, {"K", "N", "eps", "delta", "eta"}},
    {Command::Expansion, {"K", "N"}},
};

std::string g12(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

double num(const RunConfig& c, const std::string& key) {
  const std::string& s = c.params.at(key);
  if (s == "inf" || s == "Inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("parameter " + key + " is not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("parameter " + key + " is not a number: '" + s + "'");
  return x;
}

double num_or(const RunConfig& c, const std::string& key, double fallback) {
  return c.params.count(key) ? num(c, key) : fallback;
}

std::size_t count(const RunConfig& c, const std::string& key) {
  const double x = num(c, key);
  if (!(x >= 1.0) || x != std::floor(x) || x > 1e7)
    throw ConfigError("parameter " + key + " must be a positive integer");
  return static_cast<std::size_t>(x);
}

CurvatureDimension cd_of(const RunConfig& c) {
  const CurvatureDimension cd{num(c, "K"), num(c, "N")};
  if (!std::isfinite(cd.K)) throw ConfigError("K must be finite");
  if (!(cd.N > 1.0) || !std::isfinite(cd.N)) throw ConfigError("N must be a finite number > 1");
  return cd;
}

class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigError("cannot open output file " + path);
      out_ = &file_;
    }
  }
  std::ostream& operator*() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

int run_profile(const RunConfig& c, std::ostream& os) {
  const auto cd = cd_of(c);
  const double D = num(c, "D");
  const double vmin = num(c, "vmin"), vmax = num(c, "vmax");
  const std::size_t steps = count(c, "steps");
  const double tol = num_or(c, "tolerance", 1e-4);
  if (!(D > 0.0)) throw ConfigError("D must be positive");
  if (!(vmin > 0.0) || !(vmax < 1.0) || vmax < vmin) throw ConfigError("need 0 < vmin <= vmax < 1");
  const auto vs = steps == 1 ? std::vector<double>{vmin} : numerics::linspace(vmin, vmax, steps);
  std::vector<double> gen(vs.size()), cas(vs.size());
  numerics::parallel_for(vs.size(), [&](std::size_t i) {
    const ModelProfileQuery q{cd, D, vs[i]};
    gen[i] = model_profile_general(q);
    cas[i] = model_profile_cases(q);
  });
  bool ok = true;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const double diff = std::abs(gen[i] - cas[i]);
    ok = ok && diff <= tol * std::max(std::abs(cas[i]), 1e-300);
    rows.push_back({vs[i], gen[i], cas[i], diff});
  }
  if (c.format == Format::Json) {
    os << nlohmann::json{{"schema", 1}, {"command", "profile"}, {"columns", {"v", "I_general", "I_cases", "abs_diff"}},
                         {"rows", rows}, {"passed", ok}}
              .dump(2)
       << "\n";
  } else {
    os << "v,I_general,I_cases,abs_diff\n";
    for (const auto& r : rows)
      os << g12(r[0]) << ',' << g12(r[1]) << ',' << g12(r[2]) << ',' << g12(r[3]) << '\n';
  }
  return ok ? 0 : 1;
}

int run_volume(const RunConfig& c, std::ostream& os) {
  const auto cd = cd_of(c);
  const double rmax = num(c, "rmax");
  const std::size_t steps = count(c, "steps");
  if (!(rmax > 0.0) || !std::isfinite(rmax)) throw ConfigError("rmax must be positive");
  const double w = omega(cd.N);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 1; i <= steps; ++i) {
    const double r = rmax * double(i) / double(steps);
    const double vol = model_volume(cd, r);
    rows.push_back({r, vol, vol / (w * std::pow(r, cd.N))});
  }
  if (c.format == Format::Json) {
    os << nlohmann::json{{"schema", 1}, {"command", "volume"}, {"columns", {"r", "volume", "bg_ratio"}}, {"rows", rows}}
              .dump(2)
       << "\n";
  } else {
    os << "r,volume,bg_ratio\n";
    for (const auto& r : rows) os << g12(r[0]) << ',' << g12(r[1]) << ',' << g12(r[2]) << '\n';
  }
  return 0;
}

int run_needle(const RunConfig& c, std::ostream& os) {
  std::ifstream in(c.params.at("space"));
  if (!in) throw ConfigError("cannot read space file " + c.params.at("space"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("space file is not valid JSON: ") + e.what());
  }
  const auto space = DiscreteMMSpace::from_json(j);
  const double delta = num(c, "delta");
  double rb = space.eccentricity(space.center());
  if (j.contains("rbar")) rb = j.at("rbar").get<double>();
  rb = num_or(c, "rbar", rb);
  const auto E = parse_e_spec(space, c.params.at("E"));

  const auto prob = build_localization(space, E, delta, rb);
  const auto sol = solve_l1(space, prob);
  const double tol = default_tolerance(space);
  const auto gamma = transport_relation(space, sol, delta, rb, tol);
  const auto branch = branching_sets(space, gamma);
  const auto part = needle_partition(space, prob, sol, gamma, branch, tol);
  const auto audit = audit_partition(space, prob, sol, part);
  const bool ok = audit.ok();

  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < part.rays.size(); ++r) {
    const auto& ray = part.rays[r];
    double length = space.d(ray.points.front(), ray.points.back());
    double fsum = 0.0, zm = 0.0;
    for (std::size_t k = 0; k < ray.points.size(); ++k) {
      fsum += prob.f[ray.points[k]];
      zm += ray.measure[k] * prob.f[ray.points[k]];
    }
    rows.push_back({r, length, ray.quotient_weight, fsum / double(ray.points.size()), std::abs(zm)});
  }
  nlohmann::json audit_j{{"chain_step", audit.chain_step},
                         {"chain_isometry", audit.chain_isometry},
                         {"reconstruction", audit.reconstruction},
                         {"zero_mean", audit.zero_mean},
                         {"proportionality", audit.proportionality},
                         {"diameter_excess", audit.diameter_excess},
                         {"containment_excess", audit.containment_excess},
                         {"bt_violations", audit.bt_violations},
                         {"passed", ok}};
  auto pj = partition_to_json(space, prob, part);
  pj["transport_cost"] = sol.cost;
  pj["audit"] = audit_j;

  const std::string ppath = c.params.count("partition") ? c.params.at("partition") : "";
  if (!ppath.empty()) {
    std::ofstream pf(ppath);
    if (!pf) throw ConfigError("cannot open partition file " + ppath);
    pf << pj.dump(2) << "\n";
  }
  if (c.format == Format::Json) {
    pj["columns"] = {"ray", "length", "mass", "f_mean", "zero_mean_residual"};
    pj["per_ray"] = rows;
    os << pj.dump(2) << "\n";
  } else {
    os << "ray,length,mass,f_mean,zero_mean_residual\n";
    for (const auto& r : rows)
      os << r[0].get<std::size_t>() << ',' << g12(r[1]) << ',' << g12(r[2]) << ',' << g12(r[3]) << ','
         << g12(r[4]) << '\n';
  }
  return ok ? 0 : 1;
}

int run_verify(const RunConfig& c, std::ostream& os) {
  const auto cd = cd_of(c);
  const double eps = num(c, "eps"), delta = num(c, "delta"), eta = num(c, "eta");
  if (!(eps >= 0.0) || !(eta >= 0.0) || !(eta < 1.0)) throw ConfigError("need eps >= 0 and 0 <= eta < 1");
  const double rb = rbar(cd);
  if (!(delta > 0.0) || delta > rb / 10.0 * (1.0 + 1e-12))
    throw ConfigError("delta must lie in (0, rbar/10], rbar = " + g12(rb));
  const CurvatureDimension space{num_or(c, "model-K", cd.K - eps), cd.N};

  const auto data = model_chain_data(space, rb, delta, eta);
  auto rep = proof_chain_check(data, cd, eps, delta, eta);
  const std::vector<double> grid{delta / 8, delta / 4, delta / 2, delta};
  const auto fit = deficit_fit(cd, grid);
  const auto chain_constant = rep.fitted_constant;
  rep.fitted_constant = fit.C;

  if (c.format == Format::Json) {
    auto j = rep.to_json();
    j["command"] = "verify";
    j["rbar"] = rb;
    j["model_K"] = space.K;
    j["chain_constant"] = chain_constant ? nlohmann::json(*chain_constant) : nlohmann::json();
    j["deficit_fit"] = {{"deltas", fit.deltas},       {"deficits", fit.deficits},
                        {"residuals", fit.residuals}, {"C", fit.C},
                        {"C_envelope", fit.C_envelope}, {"max_residual", fit.max_residual},
                        {"finite_rho_gap", fit.finite_rho_gap}};
    os << j.dump(2) << "\n";
  } else {
    os << "name,lhs,relation,rhs,margin,tolerance,passed,deficit\n";
    for (const auto& r : rep.checks)
      os << r.name << ',' << g12(r.lhs) << ',' << (r.relation == Direction::GreaterEq ? ">=" : "<=") << ','
         << g12(r.rhs) << ',' << g12(r.margin) << ',' << g12(r.tolerance) << ',' << (r.passed ? 1 : 0) << ','
         << (r.deficit ? g12(*r.deficit) : "") << '\n';
    os << "deficit_fit_C,," << ",," << g12(fit.C) << ",,,\n";
  }
  return rep.all_passed() ? 0 : 1;
}

int run_expansion(const RunConfig& c, std::ostream& os) {
  const auto cd = cd_of(c);
  const double vmin = num_or(c, "vmin", 1e-6), vmax = num_or(c, "vmax", 1e-3);
  const std::size_t steps = c.params.count("steps") ? count(c, "steps") : 13;
  if (!(vmin > 0.0) || !(vmax <= 0.01) || vmax <= vmin || steps < 2)
    throw ConfigError("need 0 < vmin < vmax <= 0.01 and steps >= 2");
  const auto vs = numerics::logspace(vmin, vmax, steps);
  const auto fit = expansion_probe(cd, vs);
  if (c.format == Format::Json) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < fit.v.size(); ++i)
      rows.push_back({fit.v[i], small_volume_expansion(cd, fit.v[i]), fit.residual[i]});
    os << nlohmann::json{{"schema", 1},
                         {"command", "expansion"},
                         {"columns", {"v", "leading", "residual"}},
                         {"rows", rows},
                         {"slope", fit.slope},
                         {"expected", fit.expected},
                         {"threshold", fit.threshold},
                         {"vanishing", fit.vanishing},
                         {"passed", fit.passed}}
              .dump(2)
       << "\n";
  } else {
    os << "v,leading,residual\n";
    for (std::size_t i = 0; i < fit.v.size(); ++i)
      os << g12(fit.v[i]) << ',' << g12(small_volume_expansion(cd, fit.v[i])) << ',' << g12(fit.residual[i])
         << '\n';
    os << "# slope " << g12(fit.slope) << " expected " << g12(fit.expected) << " threshold "
       << g12(fit.threshold) << (fit.vanishing ? " vanishing" : "") << (fit.passed ? " pass" : " FAIL")
       << '\n';
  }
  return fit.passed ? 0 : 1;
}

void error_json(std::ostream& err, const std::string& kind, const std::string& msg) {
  err << nlohmann::json{{"schema", 1}, {"error", kind}, {"message", msg}}.dump() << "\n";
}

}  // namespace

std::vector<std::size_t> parse_e_spec(const DiscreteMMSpace& space, const std::string& spec) {
  std::vector<std::size_t> out;
  const std::size_t n = space.size();
  const std::size_t c = space.center();
  if (spec.rfind("left", 0) == 0 && spec.size() > 7 && spec.substr(spec.size() - 3) == "pct") {
    double pct = 0.0;
    try {
      pct = std::stod(spec.substr(4, spec.size() - 7));
    } catch (const std::exception&) {
      throw ConfigError("bad E-spec " + spec);
    }
    if (!(pct > 0.0) || pct > 100.0) throw ConfigError("E-spec percentage must lie in (0, 100]");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return space.d(c, a) < space.d(c, b); });
    const auto k = static_cast<std::size_t>(std::llround(pct / 100.0 * double(n)));
    out.assign(idx.begin(), idx.begin() + std::max<std::size_t>(1, std::min(k, n)));
  } else if (spec.rfind("ball:", 0) == 0) {
    double r = 0.0;
    try {
      r = std::stod(spec.substr(5));
    } catch (const std::exception&) {
      throw ConfigError("bad E-spec " + spec);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (space.d(c, i) < r) out.push_back(i);
  } else if (spec.rfind("ids:", 0) == 0) {
    std::stringstream ss(spec.substr(4));
    std::string id;
    while (std::getline(ss, id, ',')) {
      try {
        out.push_back(space.index_of(id));
      } catch (const std::exception&) {
        throw ConfigError("unknown point id '" + id + "' in E-spec");
      }
    }
  } else {
    throw ConfigError("unknown E-spec '" + spec + "' (expected leftNpct, ball:r or ids:a,b,...)");
  }
  if (out.empty()) throw ConfigError("E-spec " + spec + " selects no points");
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig parse_args(const std::vector<std::string>& args) {
  CLI::App app{"needleiso: model isoperimetric profiles, needle decompositions and proof-chain checks"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string format;
  app.add_option("-o,--output", cfg.output_path, "write output here instead of stdout");
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  std::map<std::string, std::string> p;
  auto positional = [&](CLI::App* sub, const std::vector<std::string>& keys) {
    for (const auto& k : keys) sub->add_option(k, p[k])->required();
  };
  auto* profile = app.add_subcommand("profile", "I_general vs I_cases table over v");
  positional(profile, kRequired.at(Command::Profile));
  profile->add_option("--tolerance", p["tolerance"], "relative agreement required (default 1e-4)");
  auto* volume = app.add_subcommand("volume", "model volume and Bishop-Gromov ratio table");
  positional(volume, kRequired.at(Command::Volume));
  auto* needle = app.add_subcommand("needle", "needle decomposition of a discrete space");
  positional(needle, kRequired.at(Command::Needle));
  needle->add_option("--rbar", p["rbar"], "ball radius (default: JSON rbar, else centre eccentricity)");
  needle->add_option("--partition", p["partition"], "write partition JSON here");
  auto* verify = app.add_subcommand("verify", "proof-chain check and deficit fit on model data");
  positional(verify, kRequired.at(Command::Verify));
  verify->add_option("--model-K", p["model-K"], "curvature of the model space supplying the data (default K-eps)");
  auto* expansion = app.add_subcommand("expansion", "small-volume residual slope table");
  positional(expansion, kRequired.at(Command::Expansion));
  expansion->add_option("--vmin", p["vmin"]);
  expansion->add_option("--vmax", p["vmax"]);
  expansion->add_option("--steps", p["steps"]);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  const std::pair<CLI::App*, Command> subs[] = {{profile, Command::Profile},
                                                {volume, Command::Volume},
                                                {needle, Command::Needle},
                                                {verify, Command::Verify},
                                                {expansion, Command::Expansion}};
  for (const auto& [sub, cmd] : subs) {
    if (sub->parsed()) cfg.command = cmd;
  }
  cfg.format = cfg.command == Command::Verify ? Format::Json : Format::Csv;
  if (format == "csv") cfg.format = Format::Csv;
  if (format == "json") cfg.format = Format::Json;
  for (auto& [k, v] : p)
    if (!v.empty()) cfg.params[k] = v;
  validate(cfg);
  return cfg;
}

void validate(const RunConfig& cfg) {
  for (const auto& k : kRequired.at(cfg.command))
    if (!cfg.params.count(k)) throw ConfigError("missing required parameter " + k);
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    validate(cfg);
    Sink sink(cfg.output_path, out);
    switch (cfg.command) {
      case Command::Profile: return run_profile(cfg, *sink);
      case Command::Volume: return run_volume(cfg, *sink);
      case Command::Needle: return run_needle(cfg, *sink);
      case Command::Verify: return run_verify(cfg, *sink);
      case Command::Expansion: return run_expansion(cfg, *sink);
    }
  } catch (const ConfigError& e) {
    error_json(err, "config", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    error_json(err, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    error_json(err, "runtime", e.what());
    return 1;
  }
  return 2;
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  RunConfig cfg;
  try {
    cfg = parse_args(args);
  } catch (const HelpRequested& h) {
    std::cout << h.text;
    return 0;
  } catch (const ConfigError& e) {
    error_json(std::cerr, "config", e.what());
    return 2;
  }
  return run(cfg, std::cout, std::cerr);
}

}  // namespace needleiso::cli
