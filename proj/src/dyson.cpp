#include "meso/dyson.hpp"

#include "meso/errors.hpp"
#include "meso/operator.hpp"

#include <algorithm>
#include <cmath>

namespace meso {

Complex semicircle_m(Complex z) {
  const Complex root = std::sqrt(z * z - 4.0);
  const Complex a = 0.5 * (-z + root);
  const Complex b = 0.5 * (-z - root);
  if (z.imag() != 0) return a.imag() * z.imag() > 0 ? a : b;
  return std::abs(a) <= std::abs(b) ? a : b;
}

Real dyson_residual(const VarianceProfile& profile, Complex z, const CVec& m) {
  const CVec f = m.cwiseInverse() + profile.apply(m) + CVec::Constant(m.size(), z);
  return f.cwiseAbs().maxCoeff();
}

namespace {

bool in_half_plane(const CVec& m, Real sign) {
  return ((m.imag().array() * sign) > 0).all();
}

CVec initial_guess(const VarianceProfile& profile, Complex z) {
  const Real c = profile.s().rowwise().sum().mean();
  const Real root = std::sqrt(c);
  return CVec::Constant(profile.n(), semicircle_m(z / root) / root);
}

/// Damped fixed-point iteration with Newton polishing, starting from m in place.
int iterate(const VarianceProfile& profile, Complex z, CVec& m, const SolverOptions& opt, int budget) {
  const Real sign = z.imag() > 0 ? 1.0 : -1.0;
  const auto residual_vec = [&](const CVec& v) {
    return CVec(v.cwiseInverse() + profile.apply(v) + CVec::Constant(v.size(), z));
  };
  CVec f = residual_vec(m);
  Real r = f.cwiseAbs().maxCoeff();
  Real alpha = opt.damping;
  int used = 0;
  while (r > opt.tol) {
    if (used >= budget) throw ConvergenceError("vector Dyson solver did not converge", r);
    ++used;

    bool stepped = false;
    if (opt.newton && r < opt.newton_threshold) {
      const CVec m2 = m.cwiseProduct(m);
      const CVec delta = StabilityOperator(profile, m2).solve_transposed(m2.cwiseProduct(f));
      Real t = 1.0;
      for (int halving = 0; halving < 30 && delta.allFinite(); ++halving, t *= 0.5) {
        const CVec trial = m + t * delta;
        if (!in_half_plane(trial, sign)) continue;
        const CVec f_trial = residual_vec(trial);
        const Real r_trial = f_trial.cwiseAbs().maxCoeff();
        if (r_trial < r) {
          m = trial;
          f = f_trial;
          r = r_trial;
          stepped = true;
          break;
        }
      }
    }
    if (stepped) continue;

    const CVec mapped = -(CVec::Constant(m.size(), z) + profile.apply(m)).cwiseInverse();
    const CVec trial = (1.0 - alpha) * m + alpha * mapped;
    const CVec f_trial = residual_vec(trial);
    const Real r_trial = f_trial.cwiseAbs().maxCoeff();
    if (r_trial > r && alpha > 1e-3) {
      alpha *= 0.5;
      continue;
    }
    m = trial;
    f = f_trial;
    r = r_trial;
  }
  return used;
}

DysonSolution finish(const VarianceProfile& profile, Complex z, CVec m, int iterations) {
  const Real sign = z.imag() > 0 ? 1.0 : -1.0;
  if (!in_half_plane(m, sign))
    throw ConvergenceError("vector Dyson solver left the half-plane", dyson_residual(profile, z, m));
  DysonSolution sol;
  sol.z = z;
  sol.residual = dyson_residual(profile, z, m);
  sol.m = std::move(m);
  sol.iterations = iterations;
  return sol;
}

void require_off_axis(Complex z) {
  if (z.imag() == 0 || !std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw DomainError("spectral parameter must satisfy Im z != 0");
}

}  // namespace

DysonSolution solve_vde(const VarianceProfile& profile, Complex z, const SolverOptions& options) {
  require_off_axis(z);
  if (!(options.tol > 0)) throw DomainError("solver tolerance must be positive");
  const Real eta = std::abs(z.imag());
  const Real sign = z.imag() > 0 ? 1.0 : -1.0;

  // Continuation in the height: each level warm-starts the next one closer to the axis.
  std::vector<Real> heights;
  for (Real h = 0.5; h > eta; h *= 0.2) heights.push_back(h);
  heights.push_back(eta);

  CVec m = initial_guess(profile, {z.real(), sign * heights.front()});
  int used = 0;
  SolverOptions level = options;
  for (std::size_t i = 0; i < heights.size(); ++i) {
    const Complex zi{z.real(), sign * heights[i]};
    level.tol = i + 1 == heights.size() ? options.tol : std::max(options.tol, 1e-8);
    used += iterate(profile, zi, m, level, options.max_iterations - used);
  }
  return finish(profile, z, std::move(m), used);
}

DysonSolution solve_vde(const VarianceProfile& profile, Complex z, const CVec& warm_start,
                        const SolverOptions& options) {
  require_off_axis(z);
  if (!(options.tol > 0)) throw DomainError("solver tolerance must be positive");
  const Real sign = z.imag() > 0 ? 1.0 : -1.0;
  if (warm_start.size() != profile.n() || !in_half_plane(warm_start, sign) || !warm_start.allFinite())
    return solve_vde(profile, z, options);
  CVec m = warm_start;
  try {
    const int used = iterate(profile, z, m, options, options.max_iterations);
    return finish(profile, z, std::move(m), used);
  } catch (const ConvergenceError&) {
    return solve_vde(profile, z, options);
  }
}

Real DensityGrid::integral() const {
  Real total = 0;
  for (Eigen::Index i = 1; i < energies.size(); ++i)
    total += 0.5 * (rho(i) + rho(i - 1)) * (energies(i) - energies(i - 1));
  return total;
}

std::vector<Interval> detect_bulk(const RVec& energies, const RVec& rho, Real threshold, Real kappa) {
  std::vector<Interval> intervals;
  Eigen::Index i = 0;
  const Eigen::Index n = energies.size();
  while (i < n) {
    if (rho(i) < threshold) {
      ++i;
      continue;
    }
    Eigen::Index j = i;
    while (j + 1 < n && rho(j + 1) >= threshold) ++j;
    const Interval run{energies(i) + kappa, energies(j) - kappa};
    if (run.lo < run.hi) intervals.push_back(run);
    i = j + 1;
  }
  return intervals;
}

DensityGrid density_grid(const VarianceProfile& profile, Real e_min, Real e_max, int n_points, Real eta_probe,
                         Real kappa, Real threshold, const SolverOptions& options) {
  if (!(e_min < e_max)) throw DomainError("density grid requires e_min < e_max");
  if (!(eta_probe >= 1e-8 && eta_probe <= 1e-2)) throw DomainError("eta_probe must lie in [1e-8, 1e-2]");
  if (n_points < 16) throw DomainError("density grid needs at least 16 points");
  if (kappa < 0) throw DomainError("kappa must be nonnegative");

  DensityGrid grid;
  grid.energies = RVec::LinSpaced(n_points, e_min, e_max);
  grid.rho.resize(n_points);
  grid.eta_probe = eta_probe;
  grid.kappa = kappa;
  grid.threshold = std::max<Real>(0.05, threshold);

  CVec warm;
  for (int i = 0; i < n_points; ++i) {
    const Complex z{grid.energies(i), eta_probe};
    const DysonSolution sol = i == 0 ? solve_vde(profile, z, options) : solve_vde(profile, z, warm, options);
    grid.rho(i) = std::max<Real>(0, sol.density());
    grid.total_iterations += sol.iterations;
    grid.max_residual = std::max(grid.max_residual, sol.residual);
    warm = sol.m;
  }

  grid.bulk_intervals = detect_bulk(grid.energies, grid.rho, grid.threshold, kappa);
  grid.in_bulk.resize(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i)
    grid.in_bulk[static_cast<std::size_t>(i)] =
        std::any_of(grid.bulk_intervals.begin(), grid.bulk_intervals.end(),
                    [&](const Interval& iv) { return iv.contains(grid.energies(i)); });
  return grid;
}

Real distance_to_complement(const std::vector<Interval>& intervals, Real e) {
  for (const auto& iv : intervals)
    if (iv.contains(e)) return std::min(e - iv.lo, iv.hi - e);
  return 0;
}

CVec m_derivative(const VarianceProfile& profile, const DysonSolution& solution, Real max_condition) {
  const CVec m2 = solution.m.cwiseProduct(solution.m);
  const StabilityOperator op(profile, m2);
  const Real condition = op.condition_estimate();
  if (!(condition <= max_condition))
    throw ConditioningError("1 - m^2 S is numerically singular at this spectral point", condition);
  return op.solve_transposed(m2);
}

ControlParameters control_parameters(const DysonSolution& solution, int n) {
  const Real n_eta = static_cast<Real>(n) * std::abs(solution.z.imag());
  ControlParameters cp;
  cp.theta = 1.0 / n_eta;
  cp.psi = std::sqrt(std::abs(solution.average().imag()) / n_eta) + cp.theta;
  return cp;
}

}  // namespace meso
