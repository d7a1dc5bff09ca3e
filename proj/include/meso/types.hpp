#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <vector>

namespace meso {

using Real = double;
using Complex = std::complex<Real>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using RVec = Vec<Real>;
using CVec = Vec<Complex>;
using RMat = Mat<Real>;
using CMat = Mat<Complex>;

/// Closed real interval [lo, hi].
struct Interval {
  Real lo = 0;
  Real hi = 0;

  [[nodiscard]] Real width() const { return hi - lo; }
  [[nodiscard]] Real center() const { return 0.5 * (lo + hi); }
  [[nodiscard]] bool contains(Real x) const { return x >= lo && x <= hi; }
  [[nodiscard]] bool contains(const Interval& o) const { return o.lo >= lo && o.hi <= hi; }
  [[nodiscard]] Interval shrunk(Real by) const { return {lo + by, hi - by}; }
};

inline constexpr Real kPi = 3.14159265358979323846264338327950288;

}  // namespace meso
