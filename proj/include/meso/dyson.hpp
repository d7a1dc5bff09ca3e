#pragma once

#include "meso/ensemble.hpp"
#include "meso/types.hpp"

#include <vector>

namespace meso {

struct SolverOptions {
  Real tol = 1e-12;
  int max_iterations = 100000;
  /// Initial damping α of the fixed-point map, halved whenever the residual grows.
  Real damping = 0.5;
  /// Residual below which Newton steps on (1 − m²S)δ = m²F replace the fixed-point map.
  Real newton_threshold = 1e-2;
  bool newton = true;
};

/// Solution m(z) of −1/m = z + S m with Im m · Im z > 0.
struct DysonSolution {
  Complex z;
  CVec m;
  Real residual = 0;
  int iterations = 0;

  /// ⟨m⟩.
  [[nodiscard]] Complex average() const { return m.mean(); }
  /// π⁻¹ Im⟨m⟩.
  [[nodiscard]] Real density() const { return average().imag() / kPi; }
};

/// Semicircle Stieltjes transform (−z + √(z²−4))/2 on the branch with Im m·Im z > 0.
[[nodiscard]] Complex semicircle_m(Complex z);

/// ‖1/m + z + S m‖_∞.
[[nodiscard]] Real dyson_residual(const VarianceProfile& profile, Complex z, const CVec& m);

[[nodiscard]] DysonSolution solve_vde(const VarianceProfile& profile, Complex z,
                                      const SolverOptions& options = {});
[[nodiscard]] DysonSolution solve_vde(const VarianceProfile& profile, Complex z, const CVec& warm_start,
                                      const SolverOptions& options = {});

struct DensityGrid {
  RVec energies;
  RVec rho;
  std::vector<Interval> bulk_intervals;
  std::vector<bool> in_bulk;
  Real eta_probe = 0;
  Real kappa = 0;
  Real threshold = 0;
  int total_iterations = 0;
  Real max_residual = 0;

  /// Trapezoid integral of rho over the grid.
  [[nodiscard]] Real integral() const;
};

/// Maximal runs with rho ≥ threshold, each shrunk by kappa at both ends; empty runs dropped.
[[nodiscard]] std::vector<Interval> detect_bulk(const RVec& energies, const RVec& rho, Real threshold, Real kappa);

[[nodiscard]] DensityGrid density_grid(const VarianceProfile& profile, Real e_min, Real e_max, int n_points,
                                       Real eta_probe = 1e-5, Real kappa = 0.1, Real threshold = 0.05,
                                       const SolverOptions& options = {});

/// Distance from E to the complement of the union of the intervals (0 when outside).
[[nodiscard]] Real distance_to_complement(const std::vector<Interval>& intervals, Real e);

/// m′(z) = (1 − m²S)⁻¹ m². Throws ConditioningError above `max_condition`.
[[nodiscard]] CVec m_derivative(const VarianceProfile& profile, const DysonSolution& solution,
                                Real max_condition = 1e8);

struct ControlParameters {
  Real psi = 0;
  Real theta = 0;
};

/// Ψ = √(|Im⟨m⟩|/(n|η|)) + 1/(n|η|), Θ = 1/(n|η|).
[[nodiscard]] ControlParameters control_parameters(const DysonSolution& solution, int n);

}  // namespace meso
