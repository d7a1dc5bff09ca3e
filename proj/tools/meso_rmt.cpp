// meso_rmt: command-line front end for the Dyson solver, stability certification, local-law,
// variance and CLT experiments. Exit codes: 0 success, 2 config error, 3 numerical failure,
// 4 acceptance-threshold violation under --check.
#include "meso/acceptance.hpp"
#include "meso/clt.hpp"
#include "meso/dyson.hpp"
#include "meso/ensemble.hpp"
#include "meso/errors.hpp"
#include "meso/io.hpp"
#include "meso/parallel.hpp"
#include "meso/stability.hpp"
#include "meso/twopoint.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace meso;
using io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheck = 4;

struct Context {
  std::string command;
  Json config;
  io::OutputDir* out = nullptr;
  bool check = false;
};

RVec linspace(Real lo, Real hi, int points) {
  if (points < 1) throw ConfigError("grid needs at least one point");
  return points == 1 ? RVec::Constant(1, lo) : RVec(RVec::LinSpaced(points, lo, hi));
}

/// Prints a gate verdict and maps it to the exit code.
int gate(const Context& ctx, bool ok, const std::string& what) {
  if (!ctx.check) return kExitOk;
  std::cout << (ok ? "CHECK PASS: " : "CHECK FAIL: ") << what << "\n";
  return ok ? kExitOk : kExitCheck;
}

int cmd_density(const Context& ctx) {
  const Json& c = ctx.config;
  const Json& g = c.at("grid");
  const auto p = build_variance_profile(io::recipe_from_json(c.at("profile")), c.at("n").get<int>());
  const DensityGrid grid =
      density_grid(p, g.at("e_min").get<Real>(), g.at("e_max").get<Real>(), g.at("points").get<int>(),
                   g.at("eta").get<Real>(), g.at("kappa").get<Real>(), g.at("threshold").get<Real>(),
                   io::solver_from_json(c.at("solver")));

  io::CsvTable table({"energy", "rho", "in_bulk"});
  for (Eigen::Index i = 0; i < grid.energies.size(); ++i)
    table.add_row({grid.energies(i), grid.rho(i), grid.in_bulk[static_cast<std::size_t>(i)] ? 1.0 : 0.0});
  ctx.out->write("density.csv", table.str());
  ctx.out->write_json("density.json", Json{{"config", c}, {"report", io::to_json(grid)}});

  std::vector<io::Series> series{{"rho", grid.energies, grid.rho, false}};
  if (p.kind() == ProfileKind::constant) {
    // Semicircle of radius 2√scale for s_jk = scale/n.
    const Real r = 2 * std::sqrt(p.params().scale);
    RVec sc(grid.energies.size());
    for (Eigen::Index i = 0; i < sc.size(); ++i) {
      const Real e = grid.energies(i);
      sc(i) = std::abs(e) < r ? 2 * std::sqrt(r * r - e * e) / (kPi * r * r) : 0.0;
    }
    series.push_back({"semicircle", grid.energies, sc, false});
  }
  ctx.out->write("density.svg", io::svg_plot(series, {"Self-consistent density (" + to_string(p.kind()) + ")",
                                                      "E", "rho(E)"}));

  std::cout << "density: " << grid.energies.size() << " points, integral " << grid.integral() << ", max residual "
            << grid.max_residual << "\n";
  for (const auto& b : grid.bulk_intervals) std::cout << "  bulk [" << b.lo << ", " << b.hi << "]\n";
  return gate(ctx, grid.max_residual <= 1e-9, "max Dyson residual " + io::format_number(grid.max_residual) + " <= 1e-9");
}

int cmd_stability(const Context& ctx) {
  const Json& c = ctx.config;
  const Json& g = c.at("grid");
  const Json& s = c.at("stability");
  const auto p = build_variance_profile(io::recipe_from_json(c.at("profile")), c.at("n").get<int>());
  const auto bulk = profile_bulk(p, c.at("kappa").get<Real>());
  const RVec xs = linspace(g.at("e_min").get<Real>(), g.at("e_max").get<Real>(), g.at("points").get<int>());
  const RVec ds = linspace(g.at("delta_min").get<Real>(), g.at("delta_max").get<Real>(), g.at("delta_points").get<int>());
  const Real eta = g.at("eta").get<Real>();
  const Real eta_zeta = g.at("eta_zeta").get<Real>();
  StabilityOptions so;
  so.proximity = s.at("proximity").get<Real>();
  so.min_nodes = s.at("min_nodes").get<int>();
  so.max_nodes = s.at("max_nodes").get<int>();
  if (s.at("restrict_to_bulk").get<bool>()) so.bulk = bulk;

  struct Cell {
    std::string status = "ok";
    std::string message;
    Real gap = NAN;
    Real restricted = NAN;
    Real inverse = NAN;
    Real idempotency = NAN;
    Real radius = NAN;
    int nodes = 0;
    Complex smallest{NAN, NAN};
  };
  const auto nx = static_cast<int>(xs.size());
  const auto nd = static_cast<int>(ds.size());
  std::vector<Cell> cells(static_cast<std::size_t>(nx * nd));
  parallel_for(nx * nd, [&](int k) {
    Cell& cell = cells[static_cast<std::size_t>(k)];
    const Complex z{xs(k % nx), eta};
    const Complex zeta{xs(k % nx) + ds(k / nx), -eta_zeta};
    try {
      const StabilityReport rep = build_stability_report(p, solve_vde(p, z), solve_vde(p, zeta), so);
      cell.gap = rep.gap;
      cell.restricted = rep.restricted_inverse_norm;
      cell.inverse = inverse_norm(rep);
      cell.idempotency = rep.idempotency_residual;
      cell.radius = rep.contour_radius;
      cell.nodes = rep.quadrature_nodes;
      cell.smallest = rep.smallest_eig;
    } catch (const SeparationError& e) {
      cell.status = "separation_failure";
      cell.message = e.what();
    } catch (const DomainError& e) {
      cell.status = "outside_domain";
      cell.message = e.what();
    } catch (const NumericalError& e) {
      cell.status = "numerical_failure";
      cell.message = e.what();
    }
  });

  Json out = Json::array();
  io::CsvTable table({"re_z", "re_zeta", "status", "gap", "restricted_inverse_norm", "inverse_norm",
                      "quadrature_nodes", "idempotency_residual"});
  RMat gap_map(nd, nx);
  RMat norm_map(nd, nx);
  int ok = 0;
  bool healthy = true;
  bool wigner_gap = true;
  for (int k = 0; k < nx * nd; ++k) {
    const Cell& cell = cells[static_cast<std::size_t>(k)];
    const Real re_z = xs(k % nx);
    const Real re_zeta = re_z + ds(k / nx);
    gap_map(k / nx, k % nx) = cell.gap;
    norm_map(k / nx, k % nx) = std::log10(cell.restricted);
    Json j{{"re_z", re_z},     {"im_z", eta},       {"re_zeta", re_zeta}, {"im_zeta", -eta_zeta},
           {"status", cell.status}, {"quadrature_nodes", cell.nodes}};
    if (cell.status == "ok") {
      ++ok;
      healthy = healthy && cell.idempotency <= 1e-8;
      wigner_gap = wigner_gap && cell.gap >= 0.05;
      j["gap"] = cell.gap;
      j["restricted_inverse_norm"] = cell.restricted;
      j["inverse_norm"] = cell.inverse;
      j["idempotency_residual"] = cell.idempotency;
      j["contour_radius"] = cell.radius;
      j["smallest_eig"] = Json::array({cell.smallest.real(), cell.smallest.imag()});
    } else {
      j["message"] = cell.message;
    }
    out.push_back(j);
    table.add_row(std::vector<std::string>{io::format_number(re_z), io::format_number(re_zeta), cell.status,
                                           io::format_number(cell.gap), io::format_number(cell.restricted),
                                           io::format_number(cell.inverse), std::to_string(cell.nodes),
                                           io::format_number(cell.idempotency)});
  }
  Json bulk_json = Json::array();
  for (const auto& b : bulk) bulk_json.push_back(Json::array({b.lo, b.hi}));
  ctx.out->write_json("stability.json", Json{{"config", c}, {"bulk", bulk_json}, {"cells", out}});
  ctx.out->write("stability.csv", table.str());
  ctx.out->write("gap.svg", io::svg_heatmap(xs, ds, gap_map, {"Spectral gap of F", "Re z", "Re zeta - Re z"}));
  ctx.out->write("restricted_norm.svg",
                 io::svg_heatmap(xs, ds, norm_map, {"log10 |B^-1 (1 - Pi)|", "Re z", "Re zeta - Re z"}));
  std::map<std::string, int> failures;
  for (const auto& cell : cells)
    if (cell.status != "ok") ++failures[cell.status];
  std::cout << "stability: " << ok << "/" << nx * nd << " cells certified";
  for (const auto& [status, count] : failures) std::cout << ", " << count << " " << status;
  std::cout << "\n";
  int code = gate(ctx, ok > 0 && healthy, "certified cells have |Pi^2 - Pi| <= 1e-8");
  if (code == kExitOk && p.kind() == ProfileKind::constant)
    code = gate(ctx, wigner_gap, "Wigner gap >= 0.05 on certified cells");
  return code;
}

int cmd_local_law(const Context& ctx) {
  const LocalLawConfig cfg = io::local_law_config_from_json(ctx.config);
  const LocalLawReport rep = local_law_experiment(cfg);
  io::CsvTable table({"n", "err_entrywise", "err_averaged", "err_T", "psi", "theta", "t_bound", "t_within_fraction"});
  RVec n(static_cast<Eigen::Index>(rep.rows.size()));
  RVec ent(n.size()), avg(n.size()), t(n.size()), psi(n.size()), theta(n.size());
  Real within = 0;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    table.add_row({Real(r.n), r.err_entrywise, r.err_averaged, r.err_T, r.psi, r.theta, r.t_bound, r.t_within_fraction});
    const auto k = static_cast<Eigen::Index>(i);
    n(k) = r.n;
    ent(k) = r.err_entrywise;
    avg(k) = r.err_averaged;
    t(k) = r.err_T;
    psi(k) = r.psi;
    theta(k) = r.theta;
    within += r.t_within_fraction / static_cast<Real>(rep.rows.size());
  }
  ctx.out->write("local_law.csv", table.str());
  ctx.out->write_json("local_law.json", Json{{"config", ctx.config}, {"report", io::to_json(rep)}});
  ctx.out->write("local_law.svg",
                 io::svg_plot({{"entrywise", n, ent, true},
                               {"averaged", n, avg, true},
                               {"two-point", n, t, true},
                               {"Psi", n, psi, false},
                               {"Theta", n, theta, false}},
                              {"Local-law errors", "n", "error", true, true}));
  std::cout << "local-law slopes: entrywise " << rep.fit_entrywise.slope << ", averaged " << rep.fit_averaged.slope
            << ", two-point " << rep.fit_T.slope << "; two-point within bound " << within << "\n";
  const bool ok = std::abs(rep.fit_entrywise.slope + 0.5) <= 0.15 && std::abs(rep.fit_averaged.slope + 1) <= 0.2 &&
                  within >= 0.95;
  return gate(ctx, ok, "entrywise slope -0.5 +- 0.15, averaged slope -1 +- 0.2, two-point fraction >= 0.95");
}

EnsembleSpec spec_from(const Json& c, std::uint64_t seed) {
  const int n = c.at("n").get<int>();
  return {build_variance_profile(io::recipe_from_json(c.at("profile")), n), io::law_from_json(c.at("law")), seed};
}

int cmd_clt(const Context& ctx) {
  const Json& c = ctx.config;
  const EnsembleSpec spec = spec_from(c, c.at("seed").get<std::uint64_t>());
  const TestFunction tf = io::test_function_from_json(c.at("test_function"), spec.profile.n());
  CLTOptions opt;
  opt.kernel_variance = c.at("kernel_variance").get<bool>();
  opt.variance = io::variance_options_from_json(c.at("variance"));
  const CLTReport rep = run_clt_experiment(spec, tf, c.at("samples").get<int>(), opt);

  Json doc = io::to_json(rep);
  doc["config"] = c;
  ctx.out->write_json("clt.json", doc);
  io::CsvTable table({"sample", "trace_f", "centered"});
  for (Eigen::Index i = 0; i < rep.raw.size(); ++i) table.add_row({Real(i), rep.raw(i), rep.statistics(i)});
  ctx.out->write("statistics.csv", table.str());
  ctx.out->write("histogram.svg",
                 io::svg_histogram_overlay(rep.statistics, rep.predicted_variance_hhalf, c.at("histogram_bins").get<int>(),
                                           {"Centered linear statistic vs N(0, V)", "Tr f(H) - mean", "density"}));
  std::cout << "clt: sample variance " << rep.sample_variance << " +- " << rep.variance_stderr << ", predicted "
            << rep.predicted_variance_hhalf;
  if (rep.predicted_variance_kernel) std::cout << " (kernel " << *rep.predicted_variance_kernel << ")";
  std::cout << ", KS p " << rep.ks_p << ", skewness " << rep.skewness << ", excess kurtosis " << rep.excess_kurtosis
            << "\n";
  return gate(ctx, std::abs(rep.z_score()) <= 3 && rep.ks_p > 0.01, "variance within 3 stderr and KS p > 0.01");
}

int cmd_variance(const Context& ctx) {
  const Json& c = ctx.config;
  const EnsembleSpec spec = spec_from(c, 0);
  const TestFunction tf = io::test_function_from_json(c.at("test_function"), spec.profile.n());
  const VarianceReport rep = variance_via_kernel(spec.profile, tf, fourth_cumulant_matrix(spec), spec.law.beta,
                                                 io::variance_options_from_json(c.at("variance")));
  ctx.out->write_json("variance.json", Json{{"config", c}, {"report", io::to_json(rep)}});
  const Real rel = rep.v_hhalf == 0 && rep.v_kernel == 0 ? 0.0 : rep.relative_discrepancy();
  std::cout << "variance: v_kernel " << rep.v_kernel << ", v_hhalf " << rep.v_hhalf << ", relative discrepancy " << rel;
  if (rep.v_4d) std::cout << ", v_4d " << *rep.v_4d;
  if (rep.flagged) std::cout << " (flagged: outside [1e-3, 1e3])";
  std::cout << "\n";
  return gate(ctx, rel <= 0.15, "relative discrepancy <= 0.15");
}

int cmd_check_all(const Context& ctx) {
  const AcceptanceOptions opt = io::acceptance_options_from_json(ctx.config);
  Json results = Json::array();
  io::CsvTable table({"id", "title", "passed", "seconds"});
  bool all = true;
  for (int id : ctx.config.at("criteria").get<std::vector<int>>()) {
    const CriterionResult r = run_criterion(id, opt);
    std::cout << format_result(r) << std::endl;
    results.push_back(io::to_json(r));
    table.add_row(std::vector<std::string>{std::to_string(r.id), r.title, r.passed ? "1" : "0", io::format_number(r.seconds)});
    all = all && r.passed;
  }
  ctx.out->write_json("acceptance.json", Json{{"config", ctx.config}, {"results", results}});
  ctx.out->write("acceptance.csv", table.str());
  return gate(ctx, all, "all selected acceptance criteria");
}

int dispatch(const Context& ctx) {
  if (ctx.command == "density") return cmd_density(ctx);
  if (ctx.command == "stability") return cmd_stability(ctx);
  if (ctx.command == "local-law") return cmd_local_law(ctx);
  if (ctx.command == "clt") return cmd_clt(ctx);
  if (ctx.command == "variance") return cmd_variance(ctx);
  return cmd_check_all(ctx);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesoscopic random-matrix experiments"};
  app.require_subcommand(1);
  struct Flags {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string out;
    int threads = 0;
    bool check = false;
    bool print_config = false;
  };
  Flags flags;
  for (const auto& name : io::commands()) {
    CLI::App* sub = app.add_subcommand(name, "Run the " + name + " experiment");
    sub->add_option("-c,--config", flags.config_file, "JSON config file");
    sub->add_option("--set", flags.overrides, "Override a config field: dotted.path=value")->take_all();
    sub->add_option("-o,--out", flags.out, "Output directory");
    sub->add_option("-j,--threads", flags.threads, "Worker threads (default: MESO_RMT_THREADS or all cores)");
    sub->add_flag("--check", flags.check, "Exit with code 4 when an acceptance threshold is violated");
    sub->add_flag("--print-config", flags.print_config, "Print the resolved config and exit");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.check = flags.check;
  std::optional<io::OutputDir> out;
  try {
    const Json user = flags.config_file.empty() ? Json::object() : io::read_json_file(flags.config_file);
    ctx.config = io::resolve_config(ctx.command, user);
    for (const auto& o : flags.overrides) io::apply_override(ctx.config, o);
    if (!flags.out.empty()) ctx.config["out"] = flags.out;
    if (flags.threads > 0) ctx.config["threads"] = flags.threads;
    if (flags.print_config) {
      std::cout << ctx.config.dump(2) << "\n";
      return kExitOk;
    }
    set_worker_count(ctx.config.at("threads").get<int>());
    out.emplace(ctx.config.at("out").get<std::string>());
    ctx.out = &*out;
    const int code = dispatch(ctx);
    out->finish(ctx.command, ctx.config, code);
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    if (out) out->finish(ctx.command, ctx.config, kExitConfig);
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error (domain): " << e.what() << "\n";
    if (out) out->finish(ctx.command, ctx.config, kExitConfig);
    return kExitConfig;
  } catch (const io::Json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    if (out) out->finish(ctx.command, ctx.config, kExitConfig);
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    if (out) out->finish(ctx.command, ctx.config, kExitNumerical);
    return kExitNumerical;
  }
}
