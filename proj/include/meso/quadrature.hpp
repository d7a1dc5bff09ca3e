#pragma once

#include "meso/types.hpp"

#include <functional>
#include <vector>

namespace meso {

/// Gauss–Legendre rule on [−1, 1].
struct GaussRule {
  RVec nodes;
  RVec weights;
};

[[nodiscard]] GaussRule gauss_legendre(int order);

struct QuadratureResult {
  Real value = 0;
  Real error = 0;
  int evaluations = 0;
  bool converged = false;
};

struct AdaptiveOptions {
  Real abs_tol = 1e-12;
  Real rel_tol = 1e-10;
  int max_intervals = 2000;
};

/// Globally adaptive Gauss–Kronrod (7/15) integration of f over [a, b]. `breakpoints` inside
/// (a, b) start the subdivision; the error estimate is |K15 − G7| summed over intervals.
[[nodiscard]] QuadratureResult integrate_adaptive(const std::function<Real(Real)>& f, Real a, Real b,
                                                  const AdaptiveOptions& options = {},
                                                  const std::vector<Real>& breakpoints = {});

/// Integrand evaluated on a batch of nodes at once (one Kronrod panel or a pair of halves).
using BatchIntegrand = std::function<RVec(const RVec&)>;

/// Same as integrate_adaptive; each round of nodes is handed to `f` as one batch so the
/// caller can evaluate it concurrently.
[[nodiscard]] QuadratureResult integrate_adaptive_batch(const BatchIntegrand& f, Real a, Real b,
                                                        const AdaptiveOptions& options = {},
                                                        const std::vector<Real>& breakpoints = {});

}  // namespace meso
