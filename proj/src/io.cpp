#include "meso/io.hpp"

#include "meso/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace meso::io {

namespace {

Json profile_defaults() {
  return Json{{"kind", "constant"},
              {"scale", 1.0},
              {"kernel", {{"family", "cosine"}, {"a", 1.0}, {"b", 0.5}, {"width", 0.2}}},
              {"block", Json::array({Json::array({1.0, 0.6}), Json::array({0.6, 1.4})})},
              {"block_sizes", Json::array()}};
}

Json law_defaults() { return Json{{"family", "gaussian"}, {"beta", 1}}; }

Json test_function_defaults() {
  return Json{{"family", "gaussian"}, {"amplitude", 1.0}, {"width", 1.0}, {"e0", 0.0},
              {"eta0", nullptr},      {"eta0_exponent", -0.3}};
}

Json variance_defaults() {
  return Json{{"eta_star_factor", 1e-6}, {"kappa", 0.1},         {"epsilon", nullptr},
              {"diagnostic_4d", false},  {"alpha", 0.1},         {"max_relative_error", 0.1},
              {"outer_max_intervals", 4000}, {"inner_max_intervals", 4000}};
}

Json solver_defaults() {
  return Json{{"tol", 1e-12}, {"max_iterations", 100000}, {"damping", 0.5}, {"newton", true}};
}

bool compatible(const Json& def, const Json& value) {
  if (def.is_null()) return value.is_null() || value.is_number();
  if (def.is_number()) return value.is_number();
  return def.type() == value.type();
}

void merge_into(Json& target, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config" + (path.empty() ? "" : " section '" + path + "'") + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    Json& slot = target[key];
    if (slot.is_object()) {
      merge_into(slot, value, where);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config key '" + where + "' expects " + std::string(slot.is_null() ? "number or null" : slot.type_name()) +
                        ", got " + value.type_name());
    } else {
      slot = value;
    }
  }
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

Json fit_json(const LinearFit& f) {
  return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"slope_stderr", f.slope_stderr}};
}

Json finite_or_null(Real x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"density", "stability", "local-law", "clt", "variance", "check-all"};
  return names;
}

Json default_config(const std::string& command) {
  if (command == "density")
    return Json{{"profile", profile_defaults()},
                {"n", 512},
                {"grid", {{"e_min", -3.0}, {"e_max", 3.0}, {"points", 601}, {"eta", 1e-5}, {"kappa", 0.1}, {"threshold", 0.05}}},
                {"solver", solver_defaults()},
                {"out", "meso_out"},
                {"threads", 0}};
  if (command == "stability")
    return Json{{"profile", profile_defaults()},
                {"n", 256},
                {"grid",
                 {{"e_min", -1.5},
                  {"e_max", 1.5},
                  {"points", 25},
                  {"delta_min", -0.1},
                  {"delta_max", 0.1},
                  {"delta_points", 9},
                  {"eta", 1e-3},
                  {"eta_zeta", 1e-3}}},
                {"stability", {{"proximity", 0.1}, {"restrict_to_bulk", true}, {"min_nodes", 32}, {"max_nodes", 16384}}},
                {"kappa", 0.1},
                {"out", "meso_out"},
                {"threads", 0}};
  if (command == "local-law")
    return Json{{"profile", profile_defaults()},
                {"law", law_defaults()},
                {"seed", 1},
                {"z", Json::array({0.3, 0.1})},
                {"zeta", Json::array({0.3, -0.1})},
                {"n_values", Json::array({256, 512, 1024, 2048})},
                {"samples_per_n", 20},
                {"structured_probes", 64},
                {"random_probes", 64},
                {"t_columns", 16},
                {"t_rows_per_column", 8},
                {"slack_exponent", 0.1},
                {"out", "meso_out"},
                {"threads", 0}};
  if (command == "clt")
    return Json{{"profile", profile_defaults()},
                {"n", 2000},
                {"law", law_defaults()},
                {"seed", 1},
                {"samples", 2000},
                {"test_function", test_function_defaults()},
                {"kernel_variance", false},
                {"variance", variance_defaults()},
                {"histogram_bins", 40},
                {"out", "meso_out"},
                {"threads", 0}};
  if (command == "variance")
    return Json{{"profile", profile_defaults()},
                {"n", 2000},
                {"law", law_defaults()},
                {"test_function", test_function_defaults()},
                {"variance", variance_defaults()},
                {"out", "meso_out"},
                {"threads", 0}};
  if (command == "check-all") {
    const AcceptanceOptions a;
    return Json{{"criteria", acceptance_criteria()},
                {"seed", a.seed},
                {"stability_n", a.stability_n},
                {"stability_pairs", a.stability_pairs},
                {"local_law_samples", a.local_law_samples},
                {"variance_n", a.variance_n},
                {"clt_n", a.clt_n},
                {"clt_samples", a.clt_samples},
                {"clt_reference_workers", a.clt_reference_workers},
                {"out", "meso_out"},
                {"threads", 0}};
  }
  throw ConfigError("unknown command '" + command + "'");
}

Json resolve_config(const std::string& command, const Json& user) {
  Json config = default_config(command);
  merge_into(config, user, "");
  return config;
}

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_json(buffer.str(), path.string());
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  // Build the nested object {a: {b: {c: value}}} and merge it with the usual checks.
  Json patch = value;
  std::string rest = path;
  std::vector<std::string> keys;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    keys.push_back(rest.substr(0, pos));
  keys.push_back(rest);
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
    if (it->empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    patch = Json{{*it, patch}};
  }
  merge_into(config, patch, "");
}

ProfileRecipe recipe_from_json(const Json& profile) {
  ProfileRecipe r;
  r.kind = parse_profile_kind(get<std::string>(profile, "kind"));
  r.params.scale = get<Real>(profile, "scale");
  const Json& k = profile.at("kernel");
  r.params.kernel.family = parse_kernel_family(get<std::string>(k, "family"));
  r.params.kernel.a = get<Real>(k, "a");
  r.params.kernel.b = get<Real>(k, "b");
  r.params.kernel.width = get<Real>(k, "width");
  const auto block = get<std::vector<std::vector<Real>>>(profile, "block");
  const auto p = static_cast<Eigen::Index>(block.size());
  r.params.block.resize(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (static_cast<Eigen::Index>(block[i].size()) != p) throw ConfigError("profile.block must be a square matrix");
    for (Eigen::Index j = 0; j < p; ++j) r.params.block(i, j) = block[i][j];
  }
  r.params.block_sizes = get<std::vector<int>>(profile, "block_sizes");
  return r;
}

Json to_json(const ProfileRecipe& recipe) {
  Json j = profile_defaults();
  j["kind"] = to_string(recipe.kind);
  j["scale"] = recipe.params.scale;
  j["kernel"] = {{"family", to_string(recipe.params.kernel.family)},
                 {"a", recipe.params.kernel.a},
                 {"b", recipe.params.kernel.b},
                 {"width", recipe.params.kernel.width}};
  Json block = Json::array();
  for (Eigen::Index i = 0; i < recipe.params.block.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < recipe.params.block.cols(); ++k) row.push_back(recipe.params.block(i, k));
    block.push_back(row);
  }
  j["block"] = block;
  j["block_sizes"] = recipe.params.block_sizes;
  return j;
}

EntryLaw law_from_json(const Json& law) {
  return {parse_entry_family(get<std::string>(law, "family")), get<int>(law, "beta")};
}

Json to_json(const EntryLaw& law) { return Json{{"family", to_string(law.family)}, {"beta", law.beta}}; }

TestFunction test_function_from_json(const Json& tf, int n) {
  TestFunction out;
  out.g.family = parse_base_family(get<std::string>(tf, "family"));
  out.g.amplitude = get<Real>(tf, "amplitude");
  out.g.width = get<Real>(tf, "width");
  out.e0 = get<Real>(tf, "e0");
  const Json& eta0 = tf.at("eta0");
  out.eta0 = eta0.is_number() ? eta0.get<Real>() : std::pow(static_cast<Real>(n), get<Real>(tf, "eta0_exponent"));
  return out;
}

Json to_json(const TestFunction& tf) {
  return Json{{"family", to_string(tf.g.family)}, {"amplitude", tf.g.amplitude}, {"width", tf.g.width},
              {"e0", tf.e0},                      {"eta0", tf.eta0}};
}

SolverOptions solver_from_json(const Json& solver) {
  SolverOptions o;
  o.tol = get<Real>(solver, "tol");
  o.max_iterations = get<int>(solver, "max_iterations");
  o.damping = get<Real>(solver, "damping");
  o.newton = get<bool>(solver, "newton");
  return o;
}

VarianceOptions variance_options_from_json(const Json& v) {
  VarianceOptions o;
  o.eta_star_factor = get<Real>(v, "eta_star_factor");
  o.kappa = get<Real>(v, "kappa");
  if (v.at("epsilon").is_number()) o.epsilon = v.at("epsilon").get<Real>();
  o.diagnostic_4d = get<bool>(v, "diagnostic_4d");
  o.alpha = get<Real>(v, "alpha");
  o.max_relative_error = get<Real>(v, "max_relative_error");
  o.outer.max_intervals = get<int>(v, "outer_max_intervals");
  o.inner.max_intervals = get<int>(v, "inner_max_intervals");
  return o;
}

LocalLawConfig local_law_config_from_json(const Json& c) {
  LocalLawConfig cfg;
  cfg.recipe = recipe_from_json(c.at("profile"));
  cfg.law = law_from_json(c.at("law"));
  cfg.seed = get<std::uint64_t>(c, "seed");
  const auto z = get<std::vector<Real>>(c, "z");
  const auto zeta = get<std::vector<Real>>(c, "zeta");
  if (z.size() != 2 || zeta.size() != 2) throw ConfigError("z and zeta must be [re, im] pairs");
  cfg.z = {z[0], z[1]};
  cfg.zeta = {zeta[0], zeta[1]};
  cfg.n_values = get<std::vector<int>>(c, "n_values");
  cfg.samples_per_n = get<int>(c, "samples_per_n");
  cfg.structured_probes = get<int>(c, "structured_probes");
  cfg.random_probes = get<int>(c, "random_probes");
  cfg.t_columns = get<int>(c, "t_columns");
  cfg.t_rows_per_column = get<int>(c, "t_rows_per_column");
  cfg.slack_exponent = get<Real>(c, "slack_exponent");
  return cfg;
}

AcceptanceOptions acceptance_options_from_json(const Json& c) {
  AcceptanceOptions a;
  a.seed = get<std::uint64_t>(c, "seed");
  a.stability_n = get<int>(c, "stability_n");
  a.stability_pairs = get<int>(c, "stability_pairs");
  a.local_law_samples = get<int>(c, "local_law_samples");
  a.variance_n = get<int>(c, "variance_n");
  a.clt_n = get<int>(c, "clt_n");
  a.clt_samples = get<int>(c, "clt_samples");
  a.clt_reference_workers = get<int>(c, "clt_reference_workers");
  return a;
}

Json to_json(const DensityGrid& grid) {
  Json bulk = Json::array();
  for (const auto& i : grid.bulk_intervals) bulk.push_back(interval_json(i));
  return Json{{"bulk_intervals", bulk},         {"eta_probe", grid.eta_probe},
              {"kappa", grid.kappa},            {"threshold", grid.threshold},
              {"integral", grid.integral()},    {"total_iterations", grid.total_iterations},
              {"max_residual", grid.max_residual}, {"points", grid.energies.size()}};
}

Json to_json(const LocalLawReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows)
    rows.push_back(Json{{"n", r.n},
                        {"samples", r.samples},
                        {"err_entrywise", r.err_entrywise},
                        {"err_averaged", r.err_averaged},
                        {"err_T", r.err_T},
                        {"psi", r.psi},
                        {"theta", r.theta},
                        {"psi_zeta", r.psi_zeta},
                        {"theta_zeta", r.theta_zeta},
                        {"t_bound", r.t_bound},
                        {"t_within_fraction", r.t_within_fraction},
                        {"max_ward_residual", r.max_ward_residual},
                        {"max_reconstruction_error", r.max_reconstruction_error}});
  return Json{{"rows", rows},
              {"fit_entrywise", fit_json(report.fit_entrywise)},
              {"fit_averaged", fit_json(report.fit_averaged)},
              {"fit_T", fit_json(report.fit_T)},
              {"psi_pred", fit_json(report.psi_pred)},
              {"theta_pred", fit_json(report.theta_pred)},
              {"t_bound_pred", fit_json(report.t_bound_pred)}};
}

Json to_json(const VarianceReport& r) {
  return Json{{"beta", r.beta},
              {"eta0", r.eta0},
              {"eta_star", r.eta_star},
              {"epsilon_hat", r.epsilon_hat},
              {"band", r.band},
              {"v_kernel", r.v_kernel},
              {"v_hhalf", r.v_hhalf},
              {"relative_discrepancy", finite_or_null(r.relative_discrepancy())},
              {"quadrature_error_estimate", r.quadrature_error_estimate},
              {"evaluations", r.evaluations},
              {"flagged", r.flagged},
              {"v_4d", r.v_4d ? Json(*r.v_4d) : Json(nullptr)}};
}

Json to_json(const CLTReport& r) {
  return Json{{"config",
               {{"profile", to_json(r.recipe)},
                {"n", r.n},
                {"law", to_json(r.law)},
                {"seed", r.seed},
                {"samples", r.n_samples},
                {"test_function", to_json(r.tf)}}},
              {"sample_variance", r.sample_variance},
              {"stderr", r.variance_stderr},
              {"predicted_variance_kernel", r.predicted_variance_kernel ? Json(*r.predicted_variance_kernel) : Json(nullptr)},
              {"predicted_variance_hhalf", r.predicted_variance_hhalf},
              {"ks_stat", r.ks_statistic},
              {"ks_p", r.ks_p},
              {"skewness", r.skewness},
              {"kurtosis", r.excess_kurtosis},
              {"mean", r.mean},
              {"z_score", finite_or_null(r.z_score())}};
}

Json to_json(const CriterionResult& r) {
  return Json{{"id", r.id},
              {"title", r.title},
              {"passed", r.passed},
              {"detail", r.detail},
              {"seconds", r.seconds},
              {"budget_seconds", r.budget_seconds},
              {"budget_in_core_seconds", r.budget_in_core_seconds}};
}

std::string format_number(Real x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto res = std::to_chars(buffer, buffer + sizeof buffer, x);
  return {buffer, res.ptr};
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != header_.size()) throw ConfigError("CSV row width does not match the header");
  rows_.push_back(cells);
}

void CsvTable::add_row(const std::vector<Real>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (Real v : values) cells.push_back(format_number(v));
  add_row(cells);
}

std::string CsvTable::str() const {
  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return out;
}

namespace {

constexpr Real kWidth = 640;
constexpr Real kHeight = 420;
constexpr Real kLeft = 70;
constexpr Real kRight = 20;
constexpr Real kTop = 40;
constexpr Real kBottom = 55;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(Real x) {
  char buffer[32];
  const auto res = std::to_chars(buffer, buffer + sizeof buffer, x, std::chars_format::fixed, 2);
  return {buffer, res.ptr};
}

std::string tick_label(Real x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

/// Maps data coordinates to the plot frame, linear or log10.
struct Axis {
  Real lo = 0;
  Real hi = 1;
  bool log = false;
  Real px_lo = 0;
  Real px_hi = 1;

  [[nodiscard]] Real t(Real v) const { return log ? std::log10(v) : v; }
  [[nodiscard]] Real map(Real v) const { return px_lo + (t(v) - t(lo)) / (t(hi) - t(lo)) * (px_hi - px_lo); }
  [[nodiscard]] std::vector<Real> ticks() const {
    std::vector<Real> out;
    if (log) {
      for (Real e = std::ceil(std::log10(lo)); e <= std::floor(std::log10(hi)); ++e) out.push_back(std::pow(10.0, e));
      if (out.size() >= 2) return out;
      out.clear();
    }
    for (int i = 0; i <= 4; ++i) out.push_back(lo + (hi - lo) * i / 4.0);
    return out;
  }
};

Axis make_axis(Real lo, Real hi, bool log, Real px_lo, Real px_hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = log ? 1 : 0;
    hi = log ? 10 : 1;
  }
  if (hi <= lo) {
    const Real pad = lo == 0 ? 1 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
  if (!log) {
    const Real pad = 0.04 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log, px_lo, px_hi};
}

std::string frame(const Axis& x, const Axis& y, const PlotAxes& axes) {
  std::ostringstream s;
  s << "<rect x=\"" << fixed(kLeft) << "\" y=\"" << fixed(kTop) << "\" width=\"" << fixed(kWidth - kLeft - kRight)
    << "\" height=\"" << fixed(kHeight - kTop - kBottom) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (Real v : x.ticks()) {
    const Real px = x.map(v);
    s << "<line x1=\"" << fixed(px) << "\" y1=\"" << fixed(kHeight - kBottom) << "\" x2=\"" << fixed(px) << "\" y2=\""
      << fixed(kHeight - kBottom + 5) << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << fixed(px) << "\" y=\"" << fixed(kHeight - kBottom + 18)
      << "\" font-size=\"11\" text-anchor=\"middle\">" << tick_label(v) << "</text>\n";
  }
  for (Real v : y.ticks()) {
    const Real py = y.map(v);
    s << "<line x1=\"" << fixed(kLeft - 5) << "\" y1=\"" << fixed(py) << "\" x2=\"" << fixed(kLeft) << "\" y2=\""
      << fixed(py) << "\" stroke=\"#333\"/>\n";
    s << "<text x=\"" << fixed(kLeft - 8) << "\" y=\"" << fixed(py + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
      << tick_label(v) << "</text>\n";
  }
  s << "<text x=\"" << fixed(kWidth / 2) << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" << escape(axes.title)
    << "</text>\n";
  s << "<text x=\"" << fixed((kLeft + kWidth - kRight) / 2) << "\" y=\"" << fixed(kHeight - 12)
    << "\" font-size=\"12\" text-anchor=\"middle\">" << escape(axes.x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << fixed((kTop + kHeight - kBottom) / 2) << "\" font-size=\"12\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 16 " << fixed((kTop + kHeight - kBottom) / 2) << ")\">" << escape(axes.y_label)
    << "</text>\n";
  return s.str();
}

std::string open_svg() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n"
         "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
}

bool usable(Real v, bool log) { return std::isfinite(v) && (!log || v > 0); }

/// Piecewise-linear blue–green–yellow ramp for t ∈ [0, 1].
std::string ramp(Real t) {
  static const Real stops[][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4;
  const int i = std::min(3, static_cast<int>(t));
  const Real f = t - i;
  char buffer[8];
  std::snprintf(buffer, sizeof buffer, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
  return buffer;
}

}  // namespace

std::string svg_plot(const std::vector<Series>& series, const PlotAxes& axes) {
  Real xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series)
    for (Eigen::Index i = 0; i < s.x.size(); ++i)
      if (usable(s.x(i), axes.log_x) && usable(s.y(i), axes.log_y)) {
        xlo = std::min(xlo, s.x(i));
        xhi = std::max(xhi, s.x(i));
        ylo = std::min(ylo, s.y(i));
        yhi = std::max(yhi, s.y(i));
      }
  const Axis x = make_axis(xlo, xhi, axes.log_x, kLeft, kWidth - kRight);
  const Axis y = make_axis(ylo, yhi, axes.log_y, kHeight - kBottom, kTop);
  std::string out = open_svg() + frame(x, y, axes);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const std::string color = kPalette[k % std::size(kPalette)];
    std::string points;
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x(i), axes.log_x) || !usable(s.y(i), axes.log_y)) continue;
      const std::string px = fixed(x.map(s.x(i)));
      const std::string py = fixed(y.map(s.y(i)));
      if (s.markers)
        out += "<circle cx=\"" + px + "\" cy=\"" + py + "\" r=\"3\" fill=\"" + color + "\"/>\n";
      else
        points += px + "," + py + " ";
    }
    if (!s.markers && !points.empty())
      out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    const std::string ly = fixed(kTop + 16 + 16 * static_cast<Real>(k));
    out += "<rect x=\"" + fixed(kWidth - kRight - 150) + "\" y=\"" + fixed(kTop + 8 + 16 * static_cast<Real>(k)) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    out += "<text x=\"" + fixed(kWidth - kRight - 135) + "\" y=\"" + ly + "\" font-size=\"11\">" + escape(s.label) +
           "</text>\n";
  }
  return out + "</svg>\n";
}

std::string svg_heatmap(const RVec& xs, const RVec& ys, const RMat& values, const PlotAxes& axes) {
  if (values.rows() != ys.size() || values.cols() != xs.size()) throw ConfigError("heat map shape mismatch");
  Real lo = INFINITY, hi = -INFINITY;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::isfinite(values.data()[i])) {
      lo = std::min(lo, values.data()[i]);
      hi = std::max(hi, values.data()[i]);
    }
  const Real right = kWidth - kRight - 40;
  const Axis x = make_axis(xs.minCoeff(), xs.maxCoeff(), false, kLeft, right);
  const Axis y = make_axis(ys.minCoeff(), ys.maxCoeff(), false, kHeight - kBottom, kTop);
  std::string out = open_svg();
  const Real cw = (right - kLeft) / static_cast<Real>(std::max<Eigen::Index>(xs.size(), 1));
  const Real ch = (kHeight - kBottom - kTop) / static_cast<Real>(std::max<Eigen::Index>(ys.size(), 1));
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const Real v = values(r, c);
      const std::string fill = std::isfinite(v) ? ramp(hi > lo ? (v - lo) / (hi - lo) : 0.5) : "#bbbbbb";
      out += "<rect x=\"" + fixed(kLeft + cw * static_cast<Real>(c)) + "\" y=\"" +
             fixed(kHeight - kBottom - ch * static_cast<Real>(r + 1)) + "\" width=\"" + fixed(cw) + "\" height=\"" +
             fixed(ch) + "\" fill=\"" + fill + "\"/>\n";
    }
  out += frame(x, y, axes);
  for (int i = 0; i <= 10; ++i) {
    const Real t = i / 10.0;
    out += "<rect x=\"" + fixed(right + 12) + "\" y=\"" + fixed(kHeight - kBottom - (kHeight - kBottom - kTop) * (t + 0.1) / 1.1) +
           "\" width=\"14\" height=\"" + fixed((kHeight - kBottom - kTop) / 11) + "\" fill=\"" + ramp(t) + "\"/>\n";
  }
  if (std::isfinite(lo)) {
    out += "<text x=\"" + fixed(right + 30) + "\" y=\"" + fixed(kHeight - kBottom) + "\" font-size=\"10\">" +
           tick_label(lo) + "</text>\n";
    out += "<text x=\"" + fixed(right + 30) + "\" y=\"" + fixed(kTop + 8) + "\" font-size=\"10\">" + tick_label(hi) +
           "</text>\n";
  }
  return out + "</svg>\n";
}

std::string svg_histogram_overlay(const RVec& samples, Real variance, int bins, const PlotAxes& axes) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  const Real sigma = std::sqrt(std::max(variance, 0.0));
  Real lo = samples.size() ? samples.minCoeff() : -1;
  Real hi = samples.size() ? samples.maxCoeff() : 1;
  if (sigma > 0) {
    lo = std::min(lo, -4 * sigma);
    hi = std::max(hi, 4 * sigma);
  }
  if (hi <= lo) hi = lo + 1;
  const Real width = (hi - lo) / bins;
  RVec density = RVec::Zero(bins);
  for (Eigen::Index i = 0; i < samples.size(); ++i)
    density(std::min(bins - 1, static_cast<int>((samples(i) - lo) / width))) += 1;
  if (samples.size()) density /= static_cast<Real>(samples.size()) * width;
  const int curve_points = 200;
  RVec cx(curve_points), cy(curve_points);
  for (int i = 0; i < curve_points; ++i) {
    cx(i) = lo + (hi - lo) * i / (curve_points - 1.0);
    cy(i) = sigma > 0 ? std::exp(-cx(i) * cx(i) / (2 * variance)) / (sigma * std::sqrt(2 * kPi)) : 0;
  }
  const Axis x = make_axis(lo, hi, false, kLeft, kWidth - kRight);
  const Axis y = make_axis(0, std::max(density.maxCoeff(), cy.maxCoeff()), false, kHeight - kBottom, kTop);
  std::string out = open_svg() + frame(x, y, axes);
  for (int b = 0; b < bins; ++b) {
    const Real x0 = x.map(lo + b * width);
    const Real x1 = x.map(lo + (b + 1) * width);
    const Real top = y.map(density(b));
    out += "<rect x=\"" + fixed(x0) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(x1 - x0) + "\" height=\"" +
           fixed(y.map(0) - top) + "\" fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"0.5\"/>\n";
  }
  std::string points;
  for (int i = 0; i < curve_points; ++i) points += fixed(x.map(cx(i))) + "," + fixed(y.map(cy(i))) + " ";
  out += "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  return out + "</svg>\n";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

OutputDir::OutputDir(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create output directory " + root_.string() + ": " + ec.message());
}

void OutputDir::write(const std::string& name, const std::string& content) {
  std::ofstream out(root_ / name, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + (root_ / name).string());
  out << content;
  files_.push_back(Json{{"name", name}, {"bytes", content.size()}, {"fnv1a64", fnv1a_hex(content)}});
}

void OutputDir::write_json(const std::string& name, const Json& doc) { write(name, doc.dump(2) + "\n"); }

void OutputDir::finish(const std::string& command, const Json& config, int exit_code) {
  const Json manifest{{"command", command}, {"exit_code", exit_code}, {"config", config}, {"files", files_}};
  std::ofstream out(root_ / "manifest.json", std::ios::binary);
  if (!out) throw ConfigError("cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

}  // namespace meso::io
