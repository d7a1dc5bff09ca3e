#pragma once

#include "meso/dyson.hpp"
#include "meso/ensemble.hpp"
#include "meso/operator.hpp"
#include "meso/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace meso {

/// F_jk = |m_j m̃_j|^{1/2} S_jk |m_k m̃_k|^{1/2} with its Perron–Frobenius data.
struct SaturatedSelfEnergy {
  RMat f_matrix;
  Real lambda1 = 0;
  RVec v;
  /// λ₁ − λ₂ of |F|.
  Real gap = 0;
  /// Eigenvalue moduli of F, descending (only the nonzero block when S is low rank).
  RVec moduli;
  int power_iterations = 0;
};

struct PowerIterationOptions {
  Real tol = 1e-12;
  int max_iterations = 100000;
  Real min_gap = 1e-10;
};

[[nodiscard]] SaturatedSelfEnergy build_F(const VarianceProfile& profile, const DysonSolution& sol_z,
                                          const DysonSolution& sol_zeta, const PowerIterationOptions& options = {});

/// ‖(1 − F(z,z̄))(Im m/|m|) − η|m|‖_∞.
[[nodiscard]] Real saturation_identity_check(const VarianceProfile& profile, const DysonSolution& sol_z);

/// Rank-revealing representation Π = L·M·R (L: n×r, M: r×r, R: r×n), or a dense n×n matrix.
class Projector {
 public:
  Projector() = default;
  static Projector dense(CMat pi);
  static Projector factored(CMat left, CMat core, CMat right);

  [[nodiscard]] int n() const;
  [[nodiscard]] CMat matrix() const;
  [[nodiscard]] CVec apply(const CVec& x) const;
  [[nodiscard]] CVec column(Eigen::Index k) const;
  [[nodiscard]] CVec row(Eigen::Index k) const;
  [[nodiscard]] Complex trace() const;
  /// Π = u wᵀ for a rank-one projector (wᵀu = 1).
  void rank_one_factors(CVec& u, CVec& w) const;

  [[nodiscard]] bool is_factored() const { return !is_dense_; }
  [[nodiscard]] const CMat& left() const { return left_; }
  [[nodiscard]] const CMat& core() const { return core_; }
  [[nodiscard]] const CMat& right() const { return right_; }

 private:
  bool is_dense_ = true;
  CMat dense_;
  CMat left_, core_, right_;
};

struct StabilityOptions {
  std::optional<Real> radius;
  std::optional<Real> delta;
  /// Proximity bound ε on |Re z − Re ζ|.
  Real proximity = 0.1;
  /// When non-empty, Re z and Re ζ must lie in one of these intervals.
  std::vector<Interval> bulk;
  int min_nodes = 32;
  int max_nodes = 1 << 14;
  Real idempotency_tol = 1e-10;
  bool force_dense = false;
};

/// Spectral data of B = 1 − S m m̃ at a spectral pair.
struct StabilityReport {
  Complex z;
  Complex zeta;
  StabilityOperator op;
  /// Eigenvalues of B and of B₀ = 1 − S|m(z)|², ascending in modulus.
  CVec spectrum{};
  CVec spectrum_b0{};
  Complex smallest_eig{};
  Projector projector{};
  Real contour_radius = 0;
  Real annulus_halfwidth = 0;
  Real restricted_inverse_norm = 0;
  Real pi_one_ratio = 0;
  int quadrature_nodes = 0;
  Real idempotency_residual = 0;
  Real commutator_residual = 0;
  Real lambda1 = 0;
  Real gap = 0;

  [[nodiscard]] CMat b_matrix() const { return op.matrix(); }
};

[[nodiscard]] StabilityReport build_stability_report(const VarianceProfile& profile, const DysonSolution& sol_z,
                                                     const DysonSolution& sol_zeta,
                                                     const StabilityOptions& options = {});

/// ‖B⁻¹(1 − Π)‖_{∞→∞}; with `projector == nullptr` this is ‖B⁻¹‖_{∞→∞}.
[[nodiscard]] Real inverse_complement_norm(const StabilityOperator& op, const Projector* projector);
[[nodiscard]] Real restricted_inverse_norm(const StabilityReport& report);
[[nodiscard]] Real inverse_norm(const StabilityReport& report);

/// B⁻¹ with the destabilizing direction split off: B⁻¹ = (B + Π)⁻¹ + (μ⁻¹ − (1 + μ)⁻¹) Π,
/// where μ is the isolated eigenvalue. B + Π is well conditioned in the bulk.
class SplitInverse {
 public:
  explicit SplitInverse(const StabilityReport& report);

  /// B⁻¹ x.
  [[nodiscard]] CVec apply(const CVec& x) const;
  /// B⁻¹ e_k.
  [[nodiscard]] CVec column(Eigen::Index k) const;
  /// Tr[A B⁻¹].
  [[nodiscard]] Complex trace_product(const CMat& a) const;
  /// μ⁻¹ − (1 + μ)⁻¹.
  [[nodiscard]] Complex split_coefficient() const { return coefficient_; }

 private:
  const StabilityReport* report_;
  Complex coefficient_;
  // Low rank: (B + Π)⁻¹ = 1 + U Q Y.
  CMat q_;
  CMat y_;
  // Dense: LU of B + Π.
  std::optional<Eigen::PartialPivLU<CMat>> lu_;
};

struct WeightDecomposition {
  CMat w_matrix;
  CMat y_matrix;
  CVec s;
};

/// W = Y + 𝟙s* with ΠY = 0. Throws DomainError when pi_one_ratio < c_min.
[[nodiscard]] WeightDecomposition decompose_weight(const StabilityReport& report, const CMat& w,
                                                   Real c_min = 0.05);

/// ‖m m̃ B⁻¹𝟙 − (m − m̃)/(z − ζ)‖_∞.
[[nodiscard]] Real resolvent_difference_identity(const DysonSolution& sol_z, const DysonSolution& sol_zeta,
                                                 const VarianceProfile& profile);

}  // namespace meso
