#pragma once

#include "meso/dyson.hpp"
#include "meso/ensemble.hpp"
#include "meso/linalg.hpp"
#include "meso/stability.hpp"
#include "meso/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace meso {

/// Eigendecomposition H = U Λ U* of one sample, from which any resolvent entry
/// G_xy(z) = Σ_k U_xk conj(U_yk)/(λ_k − z) costs O(n).
class ResolventCache {
 public:
  explicit ResolventCache(const RMat& h, std::string source = {});
  explicit ResolventCache(const CMat& h, std::string source = {});

  [[nodiscard]] int n() const { return static_cast<int>(lambda_.size()); }
  [[nodiscard]] bool is_real() const { return real_; }
  [[nodiscard]] const RVec& eigenvalues() const { return lambda_; }
  [[nodiscard]] CMat eigenvectors() const;
  [[nodiscard]] const std::string& source() const { return source_; }
  /// ‖UΛU* − H‖_max over eight evenly spaced columns, measured at construction.
  [[nodiscard]] Real reconstruction_error() const { return reconstruction_error_; }
  /// ‖H‖_max.
  [[nodiscard]] Real h_max() const { return h_max_; }

  [[nodiscard]] Complex entry(Eigen::Index x, Eigen::Index y, Complex z) const;
  /// Row x of G(z).
  [[nodiscard]] CVec row(Eigen::Index x, Complex z) const;
  /// Column y of G(z).
  [[nodiscard]] CVec column(Eigen::Index y, Complex z) const;
  [[nodiscard]] CVec diagonal(Complex z) const;
  [[nodiscard]] Complex trace(Complex z) const;

 private:
  RVec lambda_;
  RMat ur_;
  CMat uc_;
  bool real_ = true;
  std::string source_;
  Real reconstruction_error_ = 0;
  Real h_max_ = 0;
};

/// Rows of G(z) for the given indices (|rows| × n).
[[nodiscard]] CMat resolvent_entries(const ResolventCache& cache, Complex z, const std::vector<int>& rows);

/// |Σ_a |G_xa|² − Im G_xx / Im z| relative to Im G_xx / Im z.
[[nodiscard]] Real ward_residual(const ResolventCache& cache, Complex z, Eigen::Index x);

/// ‖(z − ζ) G(z) G(ζ) − (G(z) − G(ζ))‖_max on the rows × cols block, relative to ‖G(z) − G(ζ)‖_max there.
[[nodiscard]] Real resolvent_identity_residual(const ResolventCache& cache, Complex z, Complex zeta,
                                               const std::vector<int>& rows, const std::vector<int>& cols);

/// T_xy = Σ_{a≠y} S_xa G_ay(z) G_ya(ζ); `exclude = false` keeps the a = y term.
[[nodiscard]] Complex empirical_T(const ResolventCache& cache, const VarianceProfile& profile, Complex z,
                                  Complex zeta, Eigen::Index x, Eigen::Index y, bool exclude = true);
/// Column T_{·y}.
[[nodiscard]] CVec empirical_T_column(const ResolventCache& cache, const VarianceProfile& profile, Complex z,
                                      Complex zeta, Eigen::Index y, bool exclude = true);

/// Deterministic limit X²(1 − X)⁻¹ with X = S diag(m m̃), evaluated as (1 − X)⁻¹ − 1 − X. In opposite
/// half-planes (1 − X)⁻¹ goes through the Π-split of `SplitInverse`; otherwise it is solved directly.
class TwoPointLimit {
 public:
  TwoPointLimit(const VarianceProfile& profile, const DysonSolution& sol_z, const DysonSolution& sol_zeta,
                const StabilityOptions& options = {});

  [[nodiscard]] bool uses_split() const { return split_ != nullptr; }
  [[nodiscard]] const StabilityReport* report() const { return report_.get(); }

  /// (1 − X)⁻¹ e_y.
  [[nodiscard]] CVec inverse_column(Eigen::Index y) const;
  [[nodiscard]] Complex entry(Eigen::Index x, Eigen::Index y) const;
  [[nodiscard]] CVec column(Eigen::Index y) const;
  /// Tr[A (1 − X)⁻¹ X²].
  [[nodiscard]] Complex trace(const CMat& a) const;

 private:
  VarianceProfile profile_;
  CVec d_;
  std::unique_ptr<StabilityOperator> op_;
  std::unique_ptr<StabilityReport> report_;
  std::unique_ptr<SplitInverse> split_;
};

[[nodiscard]] Complex deterministic_T_entry(const VarianceProfile& profile, const DysonSolution& sol_z,
                                            const DysonSolution& sol_zeta, Eigen::Index x, Eigen::Index y,
                                            const StabilityOptions& options = {});
[[nodiscard]] CVec deterministic_T_column(const VarianceProfile& profile, const DysonSolution& sol_z,
                                          const DysonSolution& sol_zeta, Eigen::Index y,
                                          const StabilityOptions& options = {});
[[nodiscard]] Complex deterministic_T_trace(const VarianceProfile& profile, const DysonSolution& sol_z,
                                            const DysonSolution& sol_zeta, const CMat& a,
                                            const StabilityOptions& options = {});

/// Bound shape (Ψ + Ψ̃)(ΨΨ̃ + 1{η η̃ < 0} min(Θ, Θ̃)) of the entrywise two-point law.
[[nodiscard]] Real two_point_entry_bound(const ControlParameters& a, const ControlParameters& b, bool opposite);

struct LocalLawConfig {
  ProfileRecipe recipe;
  EntryLaw law;
  std::uint64_t seed = 1;
  Complex z{0.3, 0.1};
  Complex zeta{0.3, -0.1};
  std::vector<int> n_values{256, 512, 1024, 2048};
  int samples_per_n = 20;
  /// Entrywise probes: structured (diagonal, near-diagonal, corners) plus random pairs.
  int structured_probes = 64;
  int random_probes = 64;
  /// Two-point probes: `t_columns` distinct y, each with `t_rows_per_column` x values.
  int t_columns = 16;
  int t_rows_per_column = 8;
  /// Slack factor n^slack on the two-point bound.
  Real slack_exponent = 0.1;
  StabilityOptions stability;
};

struct LocalLawRow {
  int n = 0;
  int samples = 0;
  /// Mean over samples of the per-sample maximum over probes.
  Real err_entrywise = 0;
  Real err_averaged = 0;
  Real err_T = 0;
  Real psi = 0;
  Real theta = 0;
  Real psi_zeta = 0;
  Real theta_zeta = 0;
  Real t_bound = 0;
  /// Fraction of (sample, probe) pairs with |T_emp − T_det| ≤ n^slack · t_bound.
  Real t_within_fraction = 0;
  Real max_ward_residual = 0;
  Real max_reconstruction_error = 0;
};

struct LocalLawReport {
  LocalLawConfig config;
  std::vector<LocalLawRow> rows;
  LinearFit fit_entrywise;
  LinearFit fit_averaged;
  LinearFit fit_T;
  /// Slopes of log Ψ, log Θ and log(two-point bound) against log n.
  LinearFit psi_pred;
  LinearFit theta_pred;
  LinearFit t_bound_pred;
};

/// Entrywise probe pairs for dimension n (deterministic given the seed).
[[nodiscard]] std::vector<std::pair<int, int>> entrywise_probes(int n, int structured, int random,
                                                                std::uint64_t seed);
/// Two-point probe pairs grouped by column: (y, xs).
[[nodiscard]] std::vector<std::pair<int, std::vector<int>>> two_point_probes(int n, int columns, int rows,
                                                                             std::uint64_t seed);

[[nodiscard]] LocalLawReport local_law_experiment(const LocalLawConfig& config);

}  // namespace meso
