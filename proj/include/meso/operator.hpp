#pragma once

#include "meso/ensemble.hpp"
#include "meso/types.hpp"

#include <Eigen/LU>

#include <optional>

namespace meso {

/// B = 1 − S·diag(d) for a variance profile S and a complex weight vector d.
///
/// When S carries a low-rank factor S = U Λ Uᵀ of rank r, every operation goes through
/// the r×r capacitance matrix C = Λ Uᵀ diag(d) U (Woodbury), costing O(n r²); otherwise
/// B is formed densely and LU-factorized.
class StabilityOperator {
 public:
  StabilityOperator(const VarianceProfile& profile, CVec d, bool force_dense = false);

  [[nodiscard]] int n() const { return static_cast<int>(d_.size()); }
  [[nodiscard]] const CVec& weights() const { return d_; }
  [[nodiscard]] bool is_low_rank() const { return !dense_.has_value(); }

  /// B as a dense matrix.
  [[nodiscard]] CMat matrix() const;
  /// B x.
  [[nodiscard]] CVec apply(const CVec& x) const;
  /// B⁻¹ x.
  [[nodiscard]] CVec solve(const CVec& rhs) const;
  /// B⁻¹ X, column by column.
  [[nodiscard]] CMat solve(const CMat& rhs) const;
  /// (Bᵀ)⁻¹ x = (1 − diag(d) S)⁻¹ x.
  [[nodiscard]] CVec solve_transposed(const CVec& rhs) const;
  /// B⁻¹ as a dense matrix.
  [[nodiscard]] CMat inverse() const;
  /// All n eigenvalues of B, ascending in modulus.
  [[nodiscard]] CVec spectrum() const;
  /// Estimated 2-norm condition number of B (of its nontrivial block when low rank).
  [[nodiscard]] Real condition_estimate() const;

  /// Low-rank data (valid only when is_low_rank()).
  [[nodiscard]] const RMat& basis() const { return *basis_; }
  [[nodiscard]] const RVec& values() const { return *values_; }
  /// C = Λ Uᵀ diag(d) U.
  [[nodiscard]] const CMat& capacitance() const { return capacitance_; }
  /// K = (1 − C)⁻¹.
  [[nodiscard]] const CMat& capacitance_inverse() const { return capacitance_inverse_; }

 private:
  VarianceProfile profile_;
  CVec d_;
  // Low-rank representation.
  const RMat* basis_ = nullptr;
  const RVec* values_ = nullptr;
  CMat capacitance_;
  CMat capacitance_inverse_;
  // Dense representation.
  std::optional<CMat> dense_;
  std::optional<Eigen::PartialPivLU<CMat>> lu_;
};

/// Real matrix times complex vector, split into real and imaginary parts.
template <class Derived>
[[nodiscard]] CVec real_times(const Eigen::MatrixBase<Derived>& a, const CVec& x) {
  CVec out(a.rows());
  out.real() = a * x.real();
  out.imag() = a * x.imag();
  return out;
}

/// Real matrix times complex matrix.
template <class Derived>
[[nodiscard]] CMat real_times(const Eigen::MatrixBase<Derived>& a, const CMat& x) {
  CMat out(a.rows(), x.cols());
  out.real() = a * x.real();
  out.imag() = a * x.imag();
  return out;
}

}  // namespace meso
