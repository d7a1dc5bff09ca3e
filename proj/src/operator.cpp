#include "meso/operator.hpp"

#include "meso/errors.hpp"
#include "meso/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace meso {

StabilityOperator::StabilityOperator(const VarianceProfile& profile, CVec d, bool force_dense)
    : profile_(profile), d_(std::move(d)) {
  if (d_.size() != profile_.n()) throw DomainError("weight vector length does not match the profile");
  const LowRankFactor* factor = force_dense ? nullptr : profile_.low_rank();
  if (factor != nullptr) {
    basis_ = &factor->basis;
    values_ = &factor->values;
    const CMat du = d_.asDiagonal() * factor->basis.cast<Complex>();
    capacitance_ = factor->values.cast<Complex>().asDiagonal() * real_times(factor->basis.transpose(), du);
    const auto r = capacitance_.rows();
    capacitance_inverse_ = (CMat::Identity(r, r) - capacitance_).partialPivLu().inverse();
    return;
  }
  CMat b = -(profile_.s().cast<Complex>() * d_.asDiagonal());
  b.diagonal().array() += 1.0;
  dense_ = std::move(b);
  lu_.emplace(*dense_);
}

CMat StabilityOperator::matrix() const {
  if (dense_) return *dense_;
  CMat b = -(profile_.s().cast<Complex>() * d_.asDiagonal());
  b.diagonal().array() += 1.0;
  return b;
}

CVec StabilityOperator::apply(const CVec& x) const {
  if (dense_) return *dense_ * x;
  const CVec coeff = values_->cast<Complex>().asDiagonal() * real_times(basis_->transpose(), CVec(d_.cwiseProduct(x)));
  return x - real_times(*basis_, coeff);
}

CVec StabilityOperator::solve(const CVec& rhs) const {
  if (dense_) return lu_->solve(rhs);
  const CVec coeff = capacitance_inverse_ * (values_->cast<Complex>().asDiagonal() *
                                            real_times(basis_->transpose(), CVec(d_.cwiseProduct(rhs))));
  return rhs + real_times(*basis_, coeff);
}

CMat StabilityOperator::solve(const CMat& rhs) const {
  if (dense_) return lu_->solve(rhs);
  const CMat weighted = d_.asDiagonal() * rhs;
  const CMat coeff = capacitance_inverse_ * (values_->cast<Complex>().asDiagonal() * real_times(basis_->transpose(), weighted));
  return rhs + real_times(*basis_, coeff);
}

CVec StabilityOperator::solve_transposed(const CVec& rhs) const {
  if (dense_) return lu_->transpose().solve(rhs);
  const CVec coeff = capacitance_inverse_ * (values_->cast<Complex>().asDiagonal() * real_times(basis_->transpose(), rhs));
  return rhs + d_.cwiseProduct(real_times(*basis_, coeff));
}

CMat StabilityOperator::inverse() const {
  if (dense_) return lu_->inverse();
  const CMat right = capacitance_inverse_ * values_->cast<Complex>().asDiagonal() *
                     (basis_->transpose().cast<Complex>() * d_.asDiagonal());
  CMat inv = real_times(*basis_, right);
  inv.diagonal().array() += 1.0;
  return inv;
}

CVec StabilityOperator::spectrum() const {
  if (dense_) {
    Eigen::ComplexEigenSolver<CMat> eig(*dense_, false);
    return sorted_by_modulus(eig.eigenvalues());
  }
  Eigen::ComplexEigenSolver<CMat> eig(capacitance_, false);
  CVec all = CVec::Ones(n());
  all.head(capacitance_.rows()) = CVec::Ones(capacitance_.rows()) - eig.eigenvalues();
  return sorted_by_modulus(all);
}

Real StabilityOperator::condition_estimate() const {
  if (dense_) {
    const Real rcond = lu_->rcond();
    return rcond > 0 ? 1.0 / rcond : std::numeric_limits<Real>::infinity();
  }
  const auto r = capacitance_.rows();
  Eigen::JacobiSVD<CMat> svd(CMat::Identity(r, r) - capacitance_);
  const RVec& sigma = svd.singularValues();
  const Real hi = std::max<Real>(1.0, sigma.maxCoeff());
  const Real lo = std::min<Real>(1.0, sigma.minCoeff());
  return lo > 0 ? hi / lo : std::numeric_limits<Real>::infinity();
}

}  // namespace meso
