#pragma once

#include "meso/acceptance.hpp"
#include "meso/clt.hpp"
#include "meso/dyson.hpp"
#include "meso/ensemble.hpp"
#include "meso/twopoint.hpp"
#include "meso/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace meso::io {

using Json = nlohmann::ordered_json;

/// Subcommands with a configuration schema.
[[nodiscard]] const std::vector<std::string>& commands();

/// Full default configuration of a subcommand. Every accepted key appears here.
[[nodiscard]] Json default_config(const std::string& command);

/// Merges `user` into the defaults of `command`. Unknown keys and type mismatches raise ConfigError.
[[nodiscard]] Json resolve_config(const std::string& command, const Json& user);

/// Parses a JSON document, raising ConfigError with the parser diagnostic on failure.
[[nodiscard]] Json parse_json(const std::string& text, const std::string& source);
[[nodiscard]] Json read_json_file(const std::filesystem::path& path);

/// Applies "a.b.c=value". The value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(Json& config, const std::string& assignment);

// Config sections to domain types.
[[nodiscard]] ProfileRecipe recipe_from_json(const Json& profile);
[[nodiscard]] Json to_json(const ProfileRecipe& recipe);
[[nodiscard]] EntryLaw law_from_json(const Json& law);
[[nodiscard]] Json to_json(const EntryLaw& law);
/// η₀ is taken from "eta0" when it is a number, otherwise n^eta0_exponent.
[[nodiscard]] TestFunction test_function_from_json(const Json& tf, int n);
[[nodiscard]] Json to_json(const TestFunction& tf);
[[nodiscard]] SolverOptions solver_from_json(const Json& solver);
[[nodiscard]] VarianceOptions variance_options_from_json(const Json& variance);
[[nodiscard]] LocalLawConfig local_law_config_from_json(const Json& config);
[[nodiscard]] AcceptanceOptions acceptance_options_from_json(const Json& config);

// Reports.
[[nodiscard]] Json to_json(const DensityGrid& grid);
[[nodiscard]] Json to_json(const LocalLawReport& report);
[[nodiscard]] Json to_json(const VarianceReport& report);
/// {config, sample_variance, stderr, predicted_variance_kernel, predicted_variance_hhalf, ks_stat, ks_p,
/// skewness, kurtosis} plus run metadata.
[[nodiscard]] Json to_json(const CLTReport& report);
[[nodiscard]] Json to_json(const CriterionResult& result);

/// Shortest decimal form that round-trips, so equal inputs give byte-identical files.
[[nodiscard]] std::string format_number(Real x);

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  void add_row(const std::vector<Real>& values);
  [[nodiscard]] std::string str() const;
  [[nodiscard]] std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Series {
  std::string label;
  RVec x;
  RVec y;
  /// Draw markers instead of a polyline.
  bool markers = false;
};

struct PlotAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

/// Line or scatter plot as a standalone SVG document.
[[nodiscard]] std::string svg_plot(const std::vector<Series>& series, const PlotAxes& axes);
/// Heat map of values(row, col) over x (columns) and y (rows); non-finite cells are drawn grey.
[[nodiscard]] std::string svg_heatmap(const RVec& x, const RVec& y, const RMat& values, const PlotAxes& axes);
/// Density histogram of `samples` with the 𝒩(0, variance) density overlaid.
[[nodiscard]] std::string svg_histogram_overlay(const RVec& samples, Real variance, int bins, const PlotAxes& axes);

/// 64-bit FNV-1a digest, hex encoded.
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

/// Output directory that records every written file in manifest.json.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);
  void write(const std::string& name, const std::string& content);
  void write_json(const std::string& name, const Json& doc);
  /// Writes manifest.json with the command, its resolved config and the file list.
  void finish(const std::string& command, const Json& config, int exit_code);
  [[nodiscard]] const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  Json files_ = Json::array();
};

}  // namespace meso::io
