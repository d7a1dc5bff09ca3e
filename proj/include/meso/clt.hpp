#pragma once

#include "meso/dyson.hpp"
#include "meso/ensemble.hpp"
#include "meso/quadrature.hpp"
#include "meso/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace meso {

/// Value and first two derivatives of a scalar function at one point.
struct Jet {
  Real value = 0;
  Real d1 = 0;
  Real d2 = 0;
};

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1, h(t)/(h(t) + h(1−t)) in between with h(t) = e^{−1/t}.
[[nodiscard]] Jet smooth_step(Real t);

/// Even C^∞ cutoff χ with χ = 1 on [−½, ½] and support [−1, 1].
[[nodiscard]] Real cutoff_chi(Real eta);
[[nodiscard]] Real cutoff_chi_derivative(Real eta);

/// Closed-form C² shapes φ on the line, all compactly supported.
///   bump:                 exp(−1/(1−t²)) on |t| < 1
///   smoothed_indicator:   1 on |t| ≤ 1, quintic smoothstep down to 0 at |t| = 2
///   truncated_polynomial: (1−t²)³ on |t| < 1
///   gaussian:             exp(−t²/2) times a smooth window equal to 1 on |t| ≤ 8, 0 beyond 10
enum class BaseFamily { bump, smoothed_indicator, truncated_polynomial, gaussian };

[[nodiscard]] std::string to_string(BaseFamily family);
[[nodiscard]] BaseFamily parse_base_family(const std::string& name);

/// Base function g(t) = amplitude · φ(t / width).
struct BaseFunction {
  BaseFamily family = BaseFamily::gaussian;
  Real amplitude = 1;
  Real width = 1;

  [[nodiscard]] Jet jet(Real t) const;
  [[nodiscard]] Real value(Real t) const { return jet(t).value; }
  [[nodiscard]] Real derivative(Real t) const { return jet(t).d1; }
  [[nodiscard]] Real second_derivative(Real t) const { return jet(t).d2; }
  /// supp g ⊂ [−support_halfwidth, support_halfwidth].
  [[nodiscard]] Real support_halfwidth() const;
  /// Points where g″ is continuous but not smooth, plus the support ends.
  [[nodiscard]] std::vector<Real> breakpoints() const;
  [[nodiscard]] bool is_zero() const { return amplitude == 0; }
};

/// Scaled test function f(x) = g((x − E₀)/η₀) with its quasi-analytic extension
/// f̃(x + iη) = χ(η)(f(x) + iη f′(x)).
struct TestFunction {
  BaseFunction g;
  Real e0 = 0;
  Real eta0 = 0.1;

  [[nodiscard]] Jet jet(Real x) const;
  [[nodiscard]] Real f(Real x) const { return jet(x).value; }
  [[nodiscard]] Real f1(Real x) const { return jet(x).d1; }
  [[nodiscard]] Real f2(Real x) const { return jet(x).d2; }
  [[nodiscard]] Interval support() const;
  [[nodiscard]] std::vector<Real> breakpoints() const;
  [[nodiscard]] Real chi(Real eta) const { return cutoff_chi(eta); }
  [[nodiscard]] Real chi_prime(Real eta) const { return cutoff_chi_derivative(eta); }
  [[nodiscard]] Complex extension(Complex z) const;
};

/// ∂f̃/∂z̄ = ½(−η χ′(η) f′(x) + i(η χ(η) f″(x) + χ′(η) f(x))) at z = x + iη.
[[nodiscard]] Complex dbar_extension(const TestFunction& tf, Complex z);

/// L¹ norms of f, f′, f″ next to those of g, g′, g″. Scaling gives ‖f‖₁ = η₀‖g‖₁,
/// ‖f′‖₁ = ‖g′‖₁ and ‖f″‖₁ = ‖g″‖₁/η₀.
struct NormScaling {
  Real f_l1 = 0;
  Real f1_l1 = 0;
  Real f2_l1 = 0;
  Real g_l1 = 0;
  Real g1_l1 = 0;
  Real g2_l1 = 0;
};
[[nodiscard]] NormScaling norm_scaling(const TestFunction& tf);

/// Bulk intervals of the profile's self-consistent density (each already shrunk by κ).
[[nodiscard]] std::vector<Interval> profile_bulk(const VarianceProfile& profile, Real kappa = 0.1);

/// Throws DomainError unless supp f lies inside one of `bulk` shrunk by 2κ.
void validate_support(const TestFunction& tf, const std::vector<Interval>& bulk, Real kappa = 0.1);

/// Dyson solution at one spectral point together with m′.
struct SpectralPoint {
  DysonSolution sol;
  CVec dm;
  /// Same data at the conjugate point (valid because S is real).
  [[nodiscard]] SpectralPoint conjugate() const;
};
[[nodiscard]] SpectralPoint spectral_point(const VarianceProfile& profile, Complex z, const SolverOptions& options = {});

/// Tr[(m′/m)(1 − S m m̃)⁻¹ S m m̃′ (1 − S m m̃)⁻¹] with m = m(z), m̃ = m(ζ). This is
/// ∂_ζ Tr[(m′/m)(1 − S m m̃)⁻¹].
[[nodiscard]] Complex kernel_trace(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta);

/// Full variance kernel:
///   (2/β) kernel_trace + (1 − 2/β) Σ_j S_jj m′_j m̃′_j + (m′m̃′)ᵀ C⁽⁴⁾ (m m̃) + (m′m̃)ᵀ C⁽⁴⁾ (m m̃′).
/// `c4` may be empty (Gaussian entries).
[[nodiscard]] Complex kernel_K(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta,
                               const RMat& c4, int beta);
[[nodiscard]] Complex kernel_K(const VarianceProfile& profile, Complex z, Complex zeta, const RMat& c4, int beta);

/// K̃(x, y) = −2 Re kernel_trace at z = x + iη_*, ζ = y − iη_*.
[[nodiscard]] Real kernel_K_tilde(const VarianceProfile& profile, Real x, Real y, Real eta_star);
[[nodiscard]] Real kernel_K_tilde(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta);

struct VarianceOptions {
  /// η_* = eta_star_factor · η₀.
  Real eta_star_factor = 1e-6;
  Real kappa = 0.1;
  /// Caps the half-width ε̂ of the integration square at ε/4 when set.
  std::optional<Real> epsilon;
  /// On |x − y| < max(band_factor·η₀, band_eta_multiple·η_*) the kernel is replaced by its
  /// leading diagonal form 2/(x − y)².
  Real band_factor = 1e-4;
  Real band_eta_multiple = 1e3;
  AdaptiveOptions outer{1e-14, 1e-8, 4000};
  AdaptiveOptions inner{1e-14, 1e-10, 4000};
  /// Quadrature error estimate above this fraction of the value raises QuadratureError.
  Real max_relative_error = 0.1;
  /// Admissible band for V(f); values outside are flagged, not rejected.
  Real flag_low = 1e-3;
  Real flag_high = 1e3;
  /// Coarse 4D cross-check of the defining integral.
  bool diagnostic_4d = false;
  /// Ω₀ = {|Im z| > n^{−α} η₀}, Ω₀′ = {|Im z| > 2 n^{−α} η₀}.
  Real alpha = 0.1;
  int grid_x_panels = 8;
  int grid_eta_panels = 6;
  int grid_order = 6;
};

struct VarianceReport {
  int beta = 1;
  Real eta0 = 0;
  Real eta_star = 0;
  Real epsilon_hat = 0;
  Real band = 0;
  /// V(f) from the two-dimensional kernel representation.
  Real v_kernel = 0;
  /// (1/(2βπ²))‖g‖²_{Ḣ^{1/2}}.
  Real v_hhalf = 0;
  /// Outer plus inner Gauss–Kronrod error, plus the leading finite-η_* bias.
  Real quadrature_error_estimate = 0;
  int evaluations = 0;
  /// v_kernel outside [flag_low, flag_high].
  bool flagged = false;
  std::optional<Real> v_4d;
  [[nodiscard]] Real relative_discrepancy() const;
};

/// V(f) = (1/(4βπ²)) ∬ (f(y) − f(x))² K̃(x + iη_*, y − iη_*) dx dy over [E₀ − ε̂, E₀ + ε̂]² by nested
/// adaptive Gauss–Kronrod quadrature, with ε̂ the distance from E₀ to the edge of its bulk interval.
/// The β = 2 value is half the β = 1 value, following the 2/β weight of the leading kernel term.
[[nodiscard]] VarianceReport variance_via_kernel(const VarianceProfile& profile, const TestFunction& tf,
                                                 const RMat& c4, int beta, const VarianceOptions& options = {});

/// (1/π²) ∫_{Ω₀} ∫_{Ω₀′} ∂̄f̃(ζ) ∂̄f̃(z) K(z, ζ) d²ζ d²z on a tensor Gauss grid.
[[nodiscard]] Real variance_4d(const VarianceProfile& profile, const TestFunction& tf, const RMat& c4, int beta,
                               const VarianceOptions& options = {});

/// ‖g‖²_{Ḣ^{1/2}} = ∬ (g(x) − g(y))²/(x − y)² dx dy. The square [−L, L]² is integrated with
/// g′(x)² substituted on |x − y| < 10⁻⁴·2L; the outside strips are reduced to the 1D form
/// 2∫ g²(x)(1/(L − x) + 1/(L + x)) dx.
[[nodiscard]] Real h_half_norm(const BaseFunction& g, Real rel_tol = 1e-10);

/// (1/(2βπ²))‖g‖²_{Ḣ^{1/2}}.
[[nodiscard]] Real predict_variance(const BaseFunction& g, int beta);

/// Σ_i f(λ_i).
[[nodiscard]] Real linear_statistic(const TestFunction& tf, const RVec& eigenvalues);

/// Eigenvalues of sample `index` (real symmetric for β = 1, complex Hermitian for β = 2).
[[nodiscard]] RVec sample_eigenvalues(const EnsembleSpec& spec, std::uint64_t index);

/// Unbiased sample variance.
[[nodiscard]] Real sample_variance(const RVec& x);
/// Jackknife standard error of the unbiased sample variance.
[[nodiscard]] Real jackknife_variance_stderr(const RVec& x);
/// sup_x |F_n(x) − Φ(x/σ)| for the empirical distribution of `x`.
[[nodiscard]] Real ks_statistic_normal(const RVec& x, Real variance);
/// Asymptotic Kolmogorov tail P(K > (√n + 0.12 + 0.11/√n) d).
[[nodiscard]] Real kolmogorov_p_value(Real d, int n);
/// Central-moment skewness m₃/m₂^{3/2}.
[[nodiscard]] Real skewness(const RVec& x);
/// Excess kurtosis m₄/m₂² − 3.
[[nodiscard]] Real excess_kurtosis(const RVec& x);

struct CLTOptions {
  Real kappa = 0.1;
  /// Also evaluate variance_via_kernel for the report.
  bool kernel_variance = false;
  VarianceOptions variance;
  int min_samples = 200;
};

struct CLTReport {
  int n = 0;
  int n_samples = 0;
  int beta = 1;
  EntryLaw law;
  ProfileRecipe recipe;
  TestFunction tf;
  std::uint64_t seed = 0;
  /// Tr f(H) per sample.
  RVec raw;
  /// raw minus its sample mean.
  RVec statistics;
  Real mean = 0;
  Real sample_variance = 0;
  Real variance_stderr = 0;
  Real predicted_variance_hhalf = 0;
  std::optional<Real> predicted_variance_kernel;
  Real ks_statistic = 0;
  Real ks_p = 0;
  Real skewness = 0;
  Real excess_kurtosis = 0;
  /// (sample − predicted)/stderr.
  [[nodiscard]] Real z_score() const;
};

/// Monte Carlo check of the mesoscopic CLT: samples `n_samples` matrices, records Tr f(H),
/// centers by the sample mean and compares against 𝒩(0, predict_variance(g, β)).
[[nodiscard]] CLTReport run_clt_experiment(const EnsembleSpec& spec, const TestFunction& tf, int n_samples,
                                           const CLTOptions& options = {});

}  // namespace meso
