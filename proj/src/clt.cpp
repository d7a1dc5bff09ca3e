#include "meso/clt.hpp"

#include "meso/errors.hpp"
#include "meso/operator.hpp"
#include "meso/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>

namespace meso {

// ---------------------------------------------------------------------------------------------
// Cutoffs and base functions

Jet smooth_step(Real t) {
  if (t <= 0) return {0, 0, 0};
  if (t >= 1) return {1, 0, 0};
  // s = 1/(1 + e^q) with q = 1/t − 1/(1−t).
  const Real u = 1 - t;
  const Real q = 1 / t - 1 / u;
  const Real q1 = -1 / (t * t) - 1 / (u * u);
  const Real q2 = 2 / (t * t * t) - 2 / (u * u * u);
  const Real s = q > 0 ? std::exp(-q) / (1 + std::exp(-q)) : 1 / (1 + std::exp(q));
  const Real p = s * (1 - s);
  const Real s1 = -p * q1;
  const Real s2 = -(s1 * (1 - 2 * s) * q1 + p * q2);
  return {s, s1, s2};
}

Real cutoff_chi(Real eta) { return smooth_step(2 * (1 - std::abs(eta))).value; }

Real cutoff_chi_derivative(Real eta) {
  if (eta == 0) return 0;
  const Real sign = eta > 0 ? 1.0 : -1.0;
  return -2 * sign * smooth_step(2 * (1 - std::abs(eta))).d1;
}

std::string to_string(BaseFamily family) {
  switch (family) {
    case BaseFamily::bump:
      return "bump";
    case BaseFamily::smoothed_indicator:
      return "smoothed_indicator";
    case BaseFamily::truncated_polynomial:
      return "truncated_polynomial";
    case BaseFamily::gaussian:
      return "gaussian";
  }
  return "unknown";
}

BaseFamily parse_base_family(const std::string& name) {
  for (auto f : {BaseFamily::bump, BaseFamily::smoothed_indicator, BaseFamily::truncated_polynomial,
                 BaseFamily::gaussian})
    if (to_string(f) == name) return f;
  throw ConfigError("unknown base function family '" + name + "'");
}

namespace {

Jet shape_jet(BaseFamily family, Real t) {
  const Real a = std::abs(t);
  const Real sign = t < 0 ? -1.0 : 1.0;
  switch (family) {
    case BaseFamily::bump: {
      if (a >= 1) return {};
      const Real u = 1 - t * t;
      const Real phi = std::exp(-1 / u);
      const Real a1 = -2 * t / (u * u);
      const Real a2 = -2 / (u * u) - 8 * t * t / (u * u * u);
      return {phi, phi * a1, phi * (a1 * a1 + a2)};
    }
    case BaseFamily::smoothed_indicator: {
      if (a <= 1) return {1, 0, 0};
      if (a >= 2) return {};
      const Real u = 2 - a;
      const Real s = u * u * u * (10 + u * (-15 + 6 * u));
      const Real s1 = 30 * u * u * (1 + u * (-2 + u));
      const Real s2 = 60 * u * (1 + u * (-3 + 2 * u));
      return {s, -sign * s1, s2};
    }
    case BaseFamily::truncated_polynomial: {
      if (a >= 1) return {};
      const Real u = 1 - t * t;
      return {u * u * u, -6 * t * u * u, -6 * u * u + 24 * t * t * u};
    }
    case BaseFamily::gaussian: {
      if (a >= 10) return {};
      const Real g = std::exp(-0.5 * t * t);
      const Real g1 = -t * g;
      const Real g2 = (t * t - 1) * g;
      if (a <= 8) return {g, g1, g2};
      const Jet w = smooth_step(0.5 * (10 - a));
      const Real w1 = -0.5 * sign * w.d1;
      const Real w2 = 0.25 * w.d2;
      return {g * w.value, g1 * w.value + g * w1, g2 * w.value + 2 * g1 * w1 + g * w2};
    }
  }
  return {};
}

Real shape_halfwidth(BaseFamily family) {
  switch (family) {
    case BaseFamily::smoothed_indicator:
      return 2;
    case BaseFamily::gaussian:
      return 10;
    default:
      return 1;
  }
}

std::vector<Real> shape_breakpoints(BaseFamily family) {
  switch (family) {
    case BaseFamily::smoothed_indicator:
      return {-2, -1, 1, 2};
    case BaseFamily::gaussian:
      return {-10, -8, 8, 10};
    default:
      return {-1, 1};
  }
}

void require_beta(int beta) {
  if (beta != 1 && beta != 2) throw ConfigError("beta must be 1 or 2");
}

}  // namespace

Jet BaseFunction::jet(Real t) const {
  if (amplitude == 0) return {};
  const Jet s = shape_jet(family, t / width);
  return {amplitude * s.value, amplitude * s.d1 / width, amplitude * s.d2 / (width * width)};
}

Real BaseFunction::support_halfwidth() const { return shape_halfwidth(family) * width; }

std::vector<Real> BaseFunction::breakpoints() const {
  std::vector<Real> out = shape_breakpoints(family);
  for (Real& b : out) b *= width;
  return out;
}

Jet TestFunction::jet(Real x) const {
  const Jet j = g.jet((x - e0) / eta0);
  return {j.value, j.d1 / eta0, j.d2 / (eta0 * eta0)};
}

Interval TestFunction::support() const {
  const Real h = g.support_halfwidth() * eta0;
  return {e0 - h, e0 + h};
}

std::vector<Real> TestFunction::breakpoints() const {
  std::vector<Real> out = g.breakpoints();
  for (Real& b : out) b = e0 + eta0 * b;
  return out;
}

Complex TestFunction::extension(Complex z) const {
  const Jet j = jet(z.real());
  return chi(z.imag()) * Complex{j.value, z.imag() * j.d1};
}

Complex dbar_extension(const TestFunction& tf, Complex z) {
  const Real eta = z.imag();
  const Real c = tf.chi(eta);
  const Real c1 = tf.chi_prime(eta);
  if (c == 0 && c1 == 0) return 0;
  const Jet j = tf.jet(z.real());
  return 0.5 * Complex{-eta * c1 * j.d1, eta * c * j.d2 + c1 * j.value};
}

NormScaling norm_scaling(const TestFunction& tf) {
  const AdaptiveOptions opt{1e-13, 1e-10, 2000};
  const auto l1 = [&](auto fn, Real lo, Real hi, const std::vector<Real>& cuts) {
    return integrate_adaptive([&](Real x) { return std::abs(fn(x)); }, lo, hi, opt, cuts).value;
  };
  NormScaling out;
  const Interval s = tf.support();
  const auto fb = tf.breakpoints();
  out.f_l1 = l1([&](Real x) { return tf.f(x); }, s.lo, s.hi, fb);
  out.f1_l1 = l1([&](Real x) { return tf.f1(x); }, s.lo, s.hi, fb);
  out.f2_l1 = l1([&](Real x) { return tf.f2(x); }, s.lo, s.hi, fb);
  const Real h = tf.g.support_halfwidth();
  const auto gb = tf.g.breakpoints();
  out.g_l1 = l1([&](Real t) { return tf.g.value(t); }, -h, h, gb);
  out.g1_l1 = l1([&](Real t) { return tf.g.derivative(t); }, -h, h, gb);
  out.g2_l1 = l1([&](Real t) { return tf.g.second_derivative(t); }, -h, h, gb);
  return out;
}

std::vector<Interval> profile_bulk(const VarianceProfile& profile, Real kappa) {
  const Real row_max = profile.s().rowwise().sum().maxCoeff();
  const Real half = 2 * std::sqrt(row_max) + 0.3;
  return density_grid(profile, -half, half, 1201, 1e-5, kappa).bulk_intervals;
}

void validate_support(const TestFunction& tf, const std::vector<Interval>& bulk, Real kappa) {
  if (!(tf.eta0 > 0 && tf.eta0 < 1)) throw DomainError("eta0 must lie in (0, 1)");
  const Interval s = tf.support();
  for (const auto& iv : bulk)
    if (iv.shrunk(2 * kappa).contains(s)) return;
  std::ostringstream msg;
  msg << "test function support [" << s.lo << ", " << s.hi << "] is not inside a bulk interval shrunk by 2*kappa;"
      << " bulk:";
  for (const auto& iv : bulk) msg << " [" << iv.lo << ", " << iv.hi << "]";
  throw DomainError(msg.str());
}

// ---------------------------------------------------------------------------------------------
// Kernels

SpectralPoint SpectralPoint::conjugate() const {
  SpectralPoint out;
  out.sol = sol;
  out.sol.z = std::conj(sol.z);
  out.sol.m = sol.m.conjugate();
  out.dm = dm.conjugate();
  return out;
}

SpectralPoint spectral_point(const VarianceProfile& profile, Complex z, const SolverOptions& options) {
  SpectralPoint p;
  p.sol = solve_vde(profile, z, options);
  p.dm = m_derivative(profile, p.sol);
  return p;
}

namespace {

constexpr Real kMaxKernelCondition = 1e13;

SpectralPoint spectral_point_from(const VarianceProfile& profile, Complex z, const CVec& warm) {
  SpectralPoint p;
  p.sol = solve_vde(profile, z, warm);
  p.dm = m_derivative(profile, p.sol);
  return p;
}

}  // namespace

Complex kernel_trace(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta) {
  const CVec d = z.sol.m.cwiseProduct(zeta.sol.m);
  const CVec d1 = z.dm.cwiseQuotient(z.sol.m);
  const CVec d2 = z.sol.m.cwiseProduct(zeta.dm);
  const StabilityOperator op(profile, d);
  const Real condition = op.condition_estimate();
  if (!(condition <= kMaxKernelCondition))
    throw ConditioningError("1 - S m m~ is numerically singular at this spectral pair", condition);
  if (op.is_low_rank()) {
    // B⁻¹ S = U K Λ Uᵀ and B⁻¹ = 1 + U K Λ Uᵀ diag(d), so the trace collapses to r×r blocks.
    const RMat& u = op.basis();
    const CMat k_lambda = op.capacitance_inverse() * op.values().cast<Complex>().asDiagonal();
    const CMat v1 = d1.asDiagonal() * u.cast<Complex>();
    const CMat p = real_times(u.transpose(), CMat(d.asDiagonal() * v1));
    const CMat zmat = v1 + real_times(u, CMat(k_lambda * p));
    const CMat q = real_times(u.transpose(), CMat(d2.asDiagonal() * zmat));
    return (k_lambda * q).trace();
  }
  const CMat w = op.inverse();
  const CMat left = d1.asDiagonal() * w;
  const CMat right = real_times(profile.s(), CMat(d2.asDiagonal() * w));
  return left.cwiseProduct(right.transpose()).sum();
}

Complex kernel_K(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta, const RMat& c4,
                 int beta) {
  require_beta(beta);
  const Real b = static_cast<Real>(beta);
  Complex out = (2 / b) * kernel_trace(profile, z, zeta);
  if (beta != 2) {
    const Complex middle = (profile.s().diagonal().cast<Complex>().array() * z.dm.array() * zeta.dm.array()).sum();
    out += (1 - 2 / b) * middle;
  }
  if (c4.size() > 0) {
    const int n = profile.n();
    if (c4.rows() != n || c4.cols() != n) throw ConfigError("fourth-cumulant matrix has the wrong size");
    const CVec a = z.sol.m.cwiseProduct(zeta.sol.m);
    const CVec a_z = z.dm.cwiseProduct(zeta.sol.m);
    const CVec a_zeta = z.sol.m.cwiseProduct(zeta.dm);
    const CVec a_zz = z.dm.cwiseProduct(zeta.dm);
    out += a_zz.cwiseProduct(real_times(c4, a)).sum() + a_z.cwiseProduct(real_times(c4, a_zeta)).sum();
  }
  return out;
}

Complex kernel_K(const VarianceProfile& profile, Complex z, Complex zeta, const RMat& c4, int beta) {
  return kernel_K(profile, spectral_point(profile, z), spectral_point(profile, zeta), c4, beta);
}

Real kernel_K_tilde(const VarianceProfile& profile, const SpectralPoint& z, const SpectralPoint& zeta) {
  return -2 * kernel_trace(profile, z, zeta).real();
}

Real kernel_K_tilde(const VarianceProfile& profile, Real x, Real y, Real eta_star) {
  if (!(eta_star > 0 && eta_star <= 1e-3)) throw DomainError("eta_star must lie in (0, 1e-3]");
  if (std::abs(x - y) < 1e-10 && eta_star < 1e-10)
    throw ConditioningError("kernel K~ is singular for |x - y| and eta_star both below 1e-10",
                            1 / std::max(std::abs(x - y), eta_star));
  const SpectralPoint a = spectral_point(profile, {x, eta_star});
  const SpectralPoint b = spectral_point(profile, {y, eta_star}).conjugate();
  return kernel_K_tilde(profile, a, b);
}

// ---------------------------------------------------------------------------------------------
// Variance functional

Real VarianceReport::relative_discrepancy() const {
  if (v_hhalf == 0) return v_kernel == 0 ? 0 : std::numeric_limits<Real>::infinity();
  return std::abs(v_kernel - v_hhalf) / v_hhalf;
}

namespace {

/// Read-only table of Dyson solutions along x + iη used to warm-start solves at nearby x.
class WarmTable {
 public:
  WarmTable(const VarianceProfile& profile, Real lo, Real hi, Real eta, Real spacing) : profile_(profile), eta_(eta) {
    const int count = std::max(2, static_cast<int>(std::ceil((hi - lo) / spacing)) + 1);
    lo_ = lo;
    step_ = (hi - lo) / (count - 1);
    points_.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const Complex z{lo + i * step_, eta};
      points_.push_back(i == 0 ? spectral_point(profile, z) : spectral_point_from(profile, z, points_.back().sol.m));
    }
  }

  /// Spectral data at x + iη.
  [[nodiscard]] SpectralPoint at(Real x) const {
    const auto last = static_cast<long>(points_.size()) - 1;
    const long k = std::clamp(std::lround((x - lo_) / step_), 0L, last);
    const SpectralPoint& seed = points_[static_cast<std::size_t>(k)];
    const Real dx = x - seed.sol.z.real();
    if (dx == 0) return seed;
    return spectral_point_from(profile_, {x, eta_}, CVec(seed.sol.m + dx * seed.dm));
  }

 private:
  const VarianceProfile& profile_;
  Real eta_;
  Real lo_ = 0;
  Real step_ = 1;
  std::vector<SpectralPoint> points_;
};

Interval bulk_interval_containing(const std::vector<Interval>& bulk, Real e0) {
  for (const auto& iv : bulk)
    if (iv.contains(e0)) return iv;
  throw DomainError("E0 is not inside a detected bulk interval");
}

}  // namespace

VarianceReport variance_via_kernel(const VarianceProfile& profile, const TestFunction& tf, const RMat& c4, int beta,
                                   const VarianceOptions& options) {
  require_beta(beta);
  if (!(options.eta_star_factor > 0)) throw ConfigError("eta_star_factor must be positive");
  const auto bulk = profile_bulk(profile, options.kappa);
  validate_support(tf, bulk, options.kappa);
  const Interval home = bulk_interval_containing(bulk, tf.e0);

  VarianceReport rep;
  rep.beta = beta;
  rep.eta0 = tf.eta0;
  rep.eta_star = options.eta_star_factor * tf.eta0;
  rep.epsilon_hat = std::min(tf.e0 - home.lo, home.hi - tf.e0);
  if (options.epsilon) rep.epsilon_hat = std::min(rep.epsilon_hat, *options.epsilon / 4);
  rep.band = std::max(options.band_factor * tf.eta0, options.band_eta_multiple * rep.eta_star);
  const Interval a = tf.support();
  const Interval square{tf.e0 - rep.epsilon_hat, tf.e0 + rep.epsilon_hat};
  if (!square.contains(a)) throw DomainError("supp f is not inside [E0 - eps_hat, E0 + eps_hat]");

  rep.v_hhalf = predict_variance(tf.g, beta);
  if (tf.g.is_zero()) {
    rep.flagged = true;
    if (options.diagnostic_4d) rep.v_4d = 0.0;
    return rep;
  }

  const WarmTable table(profile, square.lo, square.hi, rep.eta_star, 1e-2);
  const Real band = rep.band;
  std::vector<Real> cuts = tf.breakpoints();
  cuts.push_back(a.lo);
  cuts.push_back(a.hi);

  std::atomic<int> evaluations{0};
  Real max_inner_error = 0;

  // F(x) = ∫ (f(y) − f(x))² K̃(x, y) dy; zero contributions from y outside supp f when x is outside too.
  const auto inner = [&](Real x, Real& error) {
    const Jet fx = tf.jet(x);
    const bool x_in = a.contains(x);
    const Interval range = x_in ? square : a;
    std::optional<SpectralPoint> px;
    std::vector<Real> inner_cuts = cuts;
    inner_cuts.push_back(x - band);
    inner_cuts.push_back(x + band);
    const auto integrand = [&](Real y) -> Real {
      const Real dy = y - x;
      const Real diff = tf.f(y) - fx.value;
      if (diff == 0) return dy == 0 ? 2 * fx.d1 * fx.d1 : 0.0;
      if (std::abs(dy) < band) return 2 * (diff / dy) * (diff / dy);
      if (!px) px = table.at(x);
      const SpectralPoint py = table.at(y).conjugate();
      return diff * diff * kernel_K_tilde(profile, *px, py);
    };
    const QuadratureResult r = integrate_adaptive(integrand, range.lo, range.hi, options.inner, inner_cuts);
    evaluations += r.evaluations;
    error = r.error;
    return r.value;
  };

  const BatchIntegrand outer = [&](const RVec& xs) {
    RVec values(xs.size());
    RVec errors(xs.size());
    parallel_for(static_cast<int>(xs.size()), [&](int i) { values(i) = inner(xs(i), errors(i)); });
    max_inner_error = std::max(max_inner_error, errors.maxCoeff());
    return values;
  };
  const QuadratureResult r = integrate_adaptive_batch(outer, square.lo, square.hi, options.outer, cuts);

  const Real scale = 1 / (4 * kPi * kPi * beta);
  rep.v_kernel = scale * r.value;
  // Finite η_* shifts K̃ by about 24η_*²/d⁴ times its 2/d² pole outside the band, which integrates to
  // 48 η_*² ∫f′² / band.
  const QuadratureResult f1sq =
      integrate_adaptive([&](Real x) { return tf.f1(x) * tf.f1(x); }, a.lo, a.hi, {}, tf.breakpoints());
  const Real regularization = 48 * rep.eta_star * rep.eta_star * f1sq.value / band;
  rep.quadrature_error_estimate = scale * (r.error + square.width() * max_inner_error + regularization);
  rep.evaluations = evaluations;
  rep.flagged = rep.v_kernel < options.flag_low || rep.v_kernel > options.flag_high;
  if (rep.quadrature_error_estimate > options.max_relative_error * std::abs(rep.v_kernel))
    throw QuadratureError(
        "variance quadrature error estimate exceeds the allowed fraction of the value; raise "
        "outer/inner max_intervals or tighten the tolerances",
        rep.quadrature_error_estimate, rep.v_kernel);
  if (options.diagnostic_4d) rep.v_4d = variance_4d(profile, tf, c4, beta, options);
  return rep;
}

namespace {

struct WeightedPoint {
  Complex z;
  Complex weight;
};

/// Composite Gauss rule on [lo, hi] split at the given cuts into `panels` equal pieces each.
void append_composite(std::vector<std::pair<Real, Real>>& out, const GaussRule& rule, Real lo, Real hi, int panels) {
  const Real h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const Real a = lo + p * h;
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
      out.emplace_back(a + 0.5 * h * (rule.nodes(i) + 1), 0.5 * h * rule.weights(i));
  }
}

/// Nodes for the upper half of Ω: heights in (eta_min, 1) on a log scale, times x nodes on supp f.
std::vector<WeightedPoint> upper_grid(const TestFunction& tf, Real eta_min, const VarianceOptions& opt) {
  const GaussRule rule = gauss_legendre(opt.grid_order);
  std::vector<std::pair<Real, Real>> xs;
  const Interval s = tf.support();
  append_composite(xs, rule, s.lo, s.hi, opt.grid_x_panels);

  std::vector<std::pair<Real, Real>> etas;
  if (eta_min < 0.5) {
    std::vector<std::pair<Real, Real>> logs;
    append_composite(logs, rule, std::log(eta_min), std::log(0.5), opt.grid_eta_panels);
    for (const auto& [t, w] : logs) etas.emplace_back(std::exp(t), w * std::exp(t));
  }
  append_composite(etas, rule, std::max(eta_min, 0.5), 1.0, 1);

  std::vector<WeightedPoint> out;
  for (const auto& [eta, we] : etas)
    for (const auto& [x, wx] : xs) {
      const Complex z{x, eta};
      const Complex d = dbar_extension(tf, z);
      if (d != Complex{0}) out.push_back({z, we * wx * d});
    }
  return out;
}

}  // namespace

Real variance_4d(const VarianceProfile& profile, const TestFunction& tf, const RMat& c4, int beta,
                 const VarianceOptions& options) {
  require_beta(beta);
  if (tf.g.is_zero()) return 0;
  const Real shrink = std::pow(static_cast<Real>(profile.n()), -options.alpha);
  const auto zs = upper_grid(tf, shrink * tf.eta0, options);
  const auto ws = upper_grid(tf, 2 * shrink * tf.eta0, options);

  std::vector<SpectralPoint> pz(zs.size());
  std::vector<SpectralPoint> pw(ws.size());
  parallel_for(static_cast<int>(zs.size()), [&](int i) { pz[i] = spectral_point(profile, zs[i].z); });
  parallel_for(static_cast<int>(ws.size()), [&](int i) { pw[i] = spectral_point(profile, ws[i].z); });

  // ∂̄f̃(z̄) = conj ∂̄f̃(z) and K(z̄, ζ̄) = conj K(z, ζ), so the lower-half combinations are conjugates
  // of the upper ones: total = 2 Re[Σ_{++} + Σ_{+−}].
  std::vector<Complex> rows(zs.size());
  parallel_for(static_cast<int>(zs.size()), [&](int i) {
    Complex acc = 0;
    for (std::size_t j = 0; j < ws.size(); ++j) {
      acc += ws[j].weight * kernel_K(profile, pz[i], pw[j], c4, beta);
      acc += std::conj(ws[j].weight) * kernel_K(profile, pz[i], pw[j].conjugate(), c4, beta);
    }
    rows[i] = zs[i].weight * acc;
  });
  Complex total = 0;
  for (const auto& r : rows) total += r;
  return 2 * total.real() / (kPi * kPi);
}

// ---------------------------------------------------------------------------------------------
// Ḣ^{1/2} prediction

Real h_half_norm(const BaseFunction& g, Real rel_tol) {
  if (g.is_zero()) return 0;
  const Real half = g.support_halfwidth();
  const Real cut = 1e-4 * 2 * half;
  const AdaptiveOptions opt{1e-15, rel_tol, 4000};
  const std::vector<Real> kinks = g.breakpoints();
  bool converged = true;
  Real error = 0;

  const auto inner = [&](Real x) {
    const Jet gx = g.jet(x);
    const auto quotient = [&](Real y) {
      const Real q = (g.value(y) - gx.value) / (y - x);
      return q * q;
    };
    const QuadratureResult left = integrate_adaptive(quotient, -half, std::max(-half, x - cut), opt, kinks);
    const QuadratureResult right = integrate_adaptive(quotient, std::min(half, x + cut), half, opt, kinks);
    converged = converged && left.converged && right.converged;
    const Real overlap = std::min(half, x + cut) - std::max(-half, x - cut);
    return left.value + right.value + overlap * gx.d1 * gx.d1;
  };
  const QuadratureResult square = integrate_adaptive(inner, -half, half, opt, kinks);
  const auto strip = [&](Real x) {
    const Real v = g.value(x);
    if (v == 0) return 0.0;
    return v * v * (1 / (half - x) + 1 / (half + x));
  };
  const QuadratureResult tails = integrate_adaptive(strip, -half, half, opt, kinks);
  error = square.error + 2 * tails.error;
  const Real value = square.value + 2 * tails.value;
  if (!(converged && square.converged && tails.converged) && error > 1e-6 * std::abs(value))
    throw QuadratureError("H^{1/2} seminorm quadrature did not converge", error, value);
  return value;
}

Real predict_variance(const BaseFunction& g, int beta) {
  require_beta(beta);
  return h_half_norm(g) / (2 * beta * kPi * kPi);
}

// ---------------------------------------------------------------------------------------------
// Monte Carlo

Real linear_statistic(const TestFunction& tf, const RVec& eigenvalues) {
  Real sum = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) sum += tf.f(eigenvalues(i));
  return sum;
}

RVec sample_eigenvalues(const EnsembleSpec& spec, std::uint64_t index) {
  validate(spec);
  if (spec.law.beta == 1) {
    const RMat h = sample_matrix<Real>(spec, index);
    return Eigen::SelfAdjointEigenSolver<RMat>(h, Eigen::EigenvaluesOnly).eigenvalues();
  }
  const CMat h = sample_matrix<Complex>(spec, index);
  return Eigen::SelfAdjointEigenSolver<CMat>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

Real sample_variance(const RVec& x) {
  if (x.size() < 2) throw DomainError("sample variance needs at least two values");
  return (x.array() - x.mean()).square().sum() / static_cast<Real>(x.size() - 1);
}

Real jackknife_variance_stderr(const RVec& x) {
  const auto n = static_cast<Real>(x.size());
  if (x.size() < 3) throw DomainError("jackknife of the variance needs at least three values");
  const RVec dev = x.array() - x.mean();
  const Real ss = dev.squaredNorm();
  // Leave-one-out sums of squares: SS − n/(n−1)·(x_i − x̄)².
  const RVec loo = (ss - n / (n - 1) * dev.array().square()) / (n - 2);
  return std::sqrt((n - 1) / n * (loo.array() - loo.mean()).square().sum());
}

Real ks_statistic_normal(const RVec& x, Real variance) {
  if (!(variance > 0)) throw DomainError("KS reference variance must be positive");
  if (x.size() == 0) throw DomainError("KS statistic of an empty sample");
  std::vector<Real> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  const Real sigma = std::sqrt(variance);
  const auto n = static_cast<Real>(v.size());
  Real d = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Real cdf = 0.5 * std::erfc(-v[i] / (sigma * std::sqrt(2.0)));
    d = std::max({d, (static_cast<Real>(i) + 1) / n - cdf, cdf - static_cast<Real>(i) / n});
  }
  return d;
}

Real kolmogorov_p_value(Real d, int n) {
  const Real root = std::sqrt(static_cast<Real>(n));
  const Real lambda = (root + 0.12 + 0.11 / root) * d;
  if (lambda < 0.2) return 1;
  Real sum = 0;
  for (int k = 1; k <= 100; ++k) {
    const Real term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 1 : -1) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2 * sum, 0.0, 1.0);
}

Real skewness(const RVec& x) {
  const RVec dev = x.array() - x.mean();
  const Real m2 = dev.array().square().mean();
  const Real m3 = dev.array().cube().mean();
  return m3 / std::pow(m2, 1.5);
}

Real excess_kurtosis(const RVec& x) {
  const RVec dev = x.array() - x.mean();
  const Real m2 = dev.array().square().mean();
  const Real m4 = dev.array().square().square().mean();
  return m4 / (m2 * m2) - 3;
}

Real CLTReport::z_score() const {
  return variance_stderr > 0 ? (sample_variance - predicted_variance_hhalf) / variance_stderr : 0;
}

CLTReport run_clt_experiment(const EnsembleSpec& spec, const TestFunction& tf, int n_samples,
                             const CLTOptions& options) {
  validate(spec);
  if (n_samples < options.min_samples)
    throw ConfigError("the CLT experiment needs at least " + std::to_string(options.min_samples) + " samples");
  const int n = spec.profile.n();
  if (!(tf.eta0 > 1.0 / n && tf.eta0 < 1)) throw DomainError("eta0 must lie strictly between 1/n and 1");
  validate_support(tf, profile_bulk(spec.profile, options.kappa), options.kappa);

  CLTReport rep;
  rep.n = n;
  rep.n_samples = n_samples;
  rep.beta = spec.law.beta;
  rep.law = spec.law;
  rep.recipe = spec.profile.recipe();
  rep.tf = tf;
  rep.seed = spec.base_seed;
  rep.raw.resize(n_samples);
  parallel_for(n_samples, [&](int i) {
    rep.raw(i) = linear_statistic(tf, sample_eigenvalues(spec, static_cast<std::uint64_t>(i)));
  });
  rep.mean = rep.raw.mean();
  rep.statistics = rep.raw.array() - rep.mean;
  rep.sample_variance = sample_variance(rep.raw);
  rep.variance_stderr = jackknife_variance_stderr(rep.raw);
  rep.predicted_variance_hhalf = predict_variance(tf.g, spec.law.beta);
  rep.ks_statistic = ks_statistic_normal(rep.statistics, rep.predicted_variance_hhalf);
  rep.ks_p = kolmogorov_p_value(rep.ks_statistic, n_samples);
  rep.skewness = skewness(rep.statistics);
  rep.excess_kurtosis = excess_kurtosis(rep.statistics);
  if (options.kernel_variance)
    rep.predicted_variance_kernel =
        variance_via_kernel(spec.profile, tf, fourth_cumulant_matrix(spec), spec.law.beta, options.variance).v_kernel;
  return rep;
}

}  // namespace meso
