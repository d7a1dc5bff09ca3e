#pragma once

#include "meso/types.hpp"

#include <algorithm>
#include <cmath>

namespace meso {

/// Largest absolute entry.
template <class Derived>
[[nodiscard]] Real max_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.size() == 0) return 0;
  return a.cwiseAbs().maxCoeff();
}

/// Induced ∞→∞ operator norm (largest absolute row sum).
template <class Derived>
[[nodiscard]] Real op_inf_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.size() == 0) return 0;
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

/// Coordinate average ⟨v⟩.
template <class Derived>
[[nodiscard]] typename Derived::Scalar mean(const Eigen::MatrixBase<Derived>& v) {
  return v.sum() / static_cast<Real>(v.size());
}

/// Index of the entry of smallest modulus.
template <class Derived>
[[nodiscard]] Eigen::Index argmin_abs(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index k = 0;
  v.cwiseAbs().minCoeff(&k);
  return k;
}

/// Promote a real dense expression to complex.
template <class Derived>
[[nodiscard]] auto to_complex(const Eigen::MatrixBase<Derived>& a) {
  return a.template cast<Complex>();
}

/// Sorts complex values by modulus, ascending.
inline CVec sorted_by_modulus(CVec v) {
  std::sort(v.data(), v.data() + v.size(),
            [](const Complex& a, const Complex& b) { return std::abs(a) < std::abs(b); });
  return v;
}

/// Ordinary least squares fit y = a + b x with the standard error of b.
struct LinearFit {
  Real intercept = 0;
  Real slope = 0;
  Real slope_stderr = 0;
};

inline LinearFit fit_line(const RVec& x, const RVec& y) {
  const auto n = static_cast<Real>(x.size());
  const Real mx = x.mean();
  const Real my = y.mean();
  const Real sxx = (x.array() - mx).square().sum();
  const Real sxy = ((x.array() - mx) * (y.array() - my)).sum();
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    const Real sse = (y.array() - fit.intercept - fit.slope * x.array()).square().sum();
    fit.slope_stderr = std::sqrt(sse / (n - 2) / sxx);
  }
  return fit;
}

}  // namespace meso
