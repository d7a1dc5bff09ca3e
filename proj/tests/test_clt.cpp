#include <doctest.h>

#include "fixtures.hpp"
#include "meso/clt.hpp"
#include "meso/errors.hpp"
#include "meso/operator.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace meso;
using fixture::profile;

namespace {

const BaseFamily kFamilies[] = {BaseFamily::bump, BaseFamily::smoothed_indicator, BaseFamily::truncated_polynomial,
                                BaseFamily::gaussian};

/// Dense Tr[(m′/m)(1 − S m m̃)⁻¹] from scratch, for finite differences in ζ.
Complex dense_log_trace(const VarianceProfile& p, Complex z, Complex zeta) {
  const SpectralPoint a = spectral_point(p, z);
  const SpectralPoint b = spectral_point(p, zeta);
  const int n = p.n();
  const CMat bmat = CMat::Identity(n, n) - p.s().cast<Complex>() * a.sol.m.cwiseProduct(b.sol.m).asDiagonal();
  const CMat inv = bmat.partialPivLu().inverse();
  return (a.dm.cwiseQuotient(a.sol.m).asDiagonal() * inv).trace();
}

}  // namespace

TEST_CASE("smooth step and cutoff χ") {
  CHECK(smooth_step(-0.1).value == 0);
  CHECK(smooth_step(1.2).value == 1);
  CHECK(smooth_step(0.5).value == doctest::Approx(0.5));
  const Real h = 1e-5;
  for (Real t : {0.05, 0.2, 0.5, 0.77, 0.93}) {
    const Jet j = smooth_step(t);
    CHECK(j.d1 == doctest::Approx((smooth_step(t + h).value - smooth_step(t - h).value) / (2 * h)).epsilon(1e-6));
    CHECK(j.d2 == doctest::Approx((smooth_step(t + h).d1 - smooth_step(t - h).d1) / (2 * h)).epsilon(1e-5));
  }
  for (Real eta : {0.0, 0.2, -0.5, 0.5}) CHECK(cutoff_chi(eta) == 1);
  for (Real eta : {1.0, -1.0, 1.5}) CHECK(cutoff_chi(eta) == 0);
  for (Real eta : {0.6, 0.75, 0.9}) {
    CHECK(cutoff_chi(eta) == cutoff_chi(-eta));
    CHECK(cutoff_chi(eta) > 0);
    CHECK(cutoff_chi(eta) < 1);
    CHECK(cutoff_chi_derivative(eta) == doctest::Approx((cutoff_chi(eta + h) - cutoff_chi(eta - h)) / (2 * h)));
    CHECK(cutoff_chi_derivative(-eta) == doctest::Approx(-cutoff_chi_derivative(eta)));
  }
}

TEST_CASE("base families: closed-form derivatives, support and C² joins") {
  fixture::Gen gen(41);
  const Real h = 1e-5;
  for (auto fam : kFamilies) {
    CHECK(parse_base_family(to_string(fam)) == fam);
    const BaseFunction g{fam, 1.7, 0.8};
    const Real half = g.support_halfwidth();
    CHECK(g.value(half) == 0);
    CHECK(g.value(-half - 0.1) == 0);
    for (int trial = 0; trial < 200; ++trial) {
      const Real t = gen.uniform(-half, half);
      const Jet j = g.jet(t);
      const Real fd1 = (g.value(t + h) - g.value(t - h)) / (2 * h);
      const Real fd2 = (g.derivative(t + h) - g.derivative(t - h)) / (2 * h);
      CHECK(std::abs(j.d1 - fd1) <= 1e-6 * (1 + std::abs(j.d1)));
      CHECK(std::abs(j.d2 - fd2) <= 1e-5 * (1 + std::abs(j.d2)));
      CHECK(g.value(-t) == doctest::Approx(j.value));
    }
    for (Real b : g.breakpoints()) {
      const Jet left = g.jet(b - 1e-9);
      const Jet right = g.jet(b + 1e-9);
      CHECK(std::abs(left.value - right.value) < 1e-7);
      CHECK(std::abs(left.d1 - right.d1) < 1e-6);
      CHECK(std::abs(left.d2 - right.d2) < 1e-4);
    }
  }
  CHECK_THROWS_AS((void)parse_base_family("boxcar"), ConfigError);
}

TEST_CASE("dbar_extension: vanishing, small-η form and finite differences of f̃") {
  TestFunction tf;
  tf.g = {BaseFamily::truncated_polynomial, 1, 1};
  tf.e0 = 0.2;
  tf.eta0 = 0.05;
  const Interval s = tf.support();
  // η = 0: f̃ = f and ∂̄f̃ = 0.
  for (Real x : {0.18, 0.2, 0.23}) {
    CHECK(tf.extension({x, 0}) == Complex{tf.f(x), 0});
    CHECK(dbar_extension(tf, {x, 0}) == Complex{0});
  }
  for (int i = 0; i <= 40; ++i) {
    const Real x = s.lo + (s.hi - s.lo) * i / 40.0;
    for (Real eta : {-0.49, -0.25, -0.01, 0.01, 0.25, 0.49}) {
      const Complex expected = Complex{0, eta / 2} * tf.f2(x);
      CHECK(std::abs(dbar_extension(tf, {x, eta}) - expected) <= 1e-14 * (1 + std::abs(expected)));
    }
    for (Real eta : {-1.0, 1.0, 1.3, -2.0}) CHECK(dbar_extension(tf, {x, eta}) == Complex{0});
  }
  // ∂̄ = ½(∂_x + i∂_η) applied to f̃ numerically, in the χ′ region.
  const Real h = 1e-6;
  for (Real eta : {0.6, 0.8, -0.7}) {
    const Complex z{0.21, eta};
    const Complex dx = (tf.extension(z + h) - tf.extension(z - h)) / (2 * h);
    const Complex deta = (tf.extension(z + Complex{0, h}) - tf.extension(z - Complex{0, h})) / (2 * h);
    const Complex fd = 0.5 * (dx + Complex{0, 1} * deta);
    CHECK(std::abs(dbar_extension(tf, z) - fd) < 1e-6 * (1 + std::abs(fd)));
  }
}

TEST_CASE("scaled test function norms follow η₀ scaling") {
  for (auto fam : kFamilies) {
    for (Real eta0 : {0.3, 0.05, 0.01}) {
      TestFunction tf;
      tf.g = {fam, 1, 1};
      tf.e0 = -0.1;
      tf.eta0 = eta0;
      const NormScaling ns = norm_scaling(tf);
      CHECK(ns.f_l1 / eta0 == doctest::Approx(ns.g_l1).epsilon(1e-6));
      CHECK(ns.f1_l1 == doctest::Approx(ns.g1_l1).epsilon(1e-6));
      CHECK(ns.f2_l1 * eta0 == doctest::Approx(ns.g2_l1).epsilon(1e-6));
      for (Real ratio : {ns.f_l1 / (eta0 * ns.g_l1), ns.f1_l1 / ns.g1_l1, ns.f2_l1 * eta0 / ns.g2_l1}) {
        CHECK(ratio > 1.0 / 3);
        CHECK(ratio < 3.0);
      }
    }
  }
}

TEST_CASE("support validation against the detected bulk") {
  const auto p = profile(ProfileKind::constant, 64);
  const auto bulk = profile_bulk(p);
  REQUIRE(bulk.size() == 1);
  CHECK(bulk[0].lo == doctest::Approx(-1.875).epsilon(0.01));
  TestFunction tf;
  tf.g = {BaseFamily::bump, 1, 1};
  tf.eta0 = 0.1;
  CHECK_NOTHROW(validate_support(tf, bulk));
  tf.e0 = 1.6;
  CHECK_THROWS_AS(validate_support(tf, bulk), DomainError);
  tf.e0 = 0;
  tf.eta0 = 1.2;
  CHECK_THROWS_AS(validate_support(tf, bulk), DomainError);
}

TEST_CASE("h_half_norm: Gaussian value, independent Fourier oracle, scaling") {
  const Real gauss = h_half_norm(BaseFunction{BaseFamily::gaussian, 1, 1});
  CHECK(std::abs(gauss - 2 * kPi) < 1e-3);
  CHECK(h_half_norm(BaseFunction{BaseFamily::gaussian, 0, 1}) == 0);
  for (auto fam : {BaseFamily::truncated_polynomial, BaseFamily::bump, BaseFamily::smoothed_indicator}) {
    const BaseFunction g{fam, 1, 1};
    const Real fourier = oracle::h_half_fourier([&](double x) { return g.value(x); }, g.support_halfwidth());
    CHECK(h_half_norm(g) == doctest::Approx(fourier).epsilon(1e-5));
    CHECK(h_half_norm(BaseFunction{fam, 1, 3}) == doctest::Approx(h_half_norm(g)).epsilon(1e-7));
    CHECK(h_half_norm(BaseFunction{fam, 2.5, 1}) == doctest::Approx(6.25 * h_half_norm(g)).epsilon(1e-9));
  }
}

TEST_CASE("predict_variance: β dependence and quadratic scaling") {
  const BaseFunction g{BaseFamily::gaussian, 1, 1};
  CHECK(std::abs(predict_variance(g, 1) - 1 / kPi) < 1e-4);
  CHECK(std::abs(predict_variance(g, 2) - 1 / (2 * kPi)) < 1e-4);
  CHECK(predict_variance(BaseFunction{BaseFamily::gaussian, 3, 1}, 1) ==
        doctest::Approx(9 * predict_variance(g, 1)).epsilon(1e-9));
  CHECK_THROWS_AS((void)predict_variance(g, 4), ConfigError);
}

TEST_CASE("kernel_K: Wigner scalar reduction and coefficient arithmetic") {
  const int n = 64;
  const auto p = profile(ProfileKind::constant, n);
  const Complex z{0.1, 0.05};
  const Complex zeta{0.1, -0.05};
  const oracle::C m = oracle::m_sc(z);
  const oracle::C mt = oracle::m_sc(zeta);
  const oracle::C dm = oracle::dm_sc(z);
  const oracle::C dmt = oracle::dm_sc(zeta);
  const oracle::C lead = dm * dmt / ((1.0 - m * mt) * (1.0 - m * mt));
  const Complex k1 = kernel_K(p, z, zeta, RMat(), 1);
  const Complex k2 = kernel_K(p, z, zeta, RMat(), 2);
  CHECK(std::abs(k1 - (2.0 * lead - dm * dmt)) < 1e-8 * std::abs(lead));
  CHECK(std::abs(k2 - lead) < 1e-8 * std::abs(lead));
  // β = 2 with c4 = 0 is exactly the first term with weight 1.
  CHECK(std::abs(k2 - kernel_trace(p, spectral_point(p, z), spectral_point(p, zeta))) < 1e-12 * std::abs(k2));

  // Rademacher entries: C⁽⁴⁾ = −2 S∘S gives the extra term −4 m m̃ m′ m̃′.
  const EnsembleSpec rad{p, {EntryFamily::rademacher, 1}, 3};
  const RMat c4 = fourth_cumulant_matrix(rad);
  const Complex k1r = kernel_K(p, z, zeta, c4, 1);
  CHECK(std::abs(k1r - k1 - (-4.0 * m * mt * dm * dmt)) < 1e-8 * std::abs(lead));
  CHECK_THROWS_AS((void)kernel_K(p, z, zeta, RMat::Zero(3, 3), 1), ConfigError);
}

TEST_CASE("kernel_K: analytic ζ-derivative, dense oracle and reflection symmetry") {
  fixture::Gen gen(77);
  const RMat none;
  for (auto kind : {ProfileKind::smooth_kernel, ProfileKind::block}) {
    const auto p = profile(kind, 48);
    const EnsembleSpec rad{p, {EntryFamily::rademacher, 1}, 5};
    const RMat c4 = fourth_cumulant_matrix(rad);
    for (int trial = 0; trial < 6; ++trial) {
      const Complex z{gen.uniform(-0.8, 0.8), gen.log_uniform(0.01, 0.3) * (gen.coin() ? 1 : -1)};
      const Complex zeta{z.real() + gen.uniform(-0.1, 0.1), gen.log_uniform(0.01, 0.3) * (gen.coin() ? 1 : -1)};
      const SpectralPoint a = spectral_point(p, z);
      const SpectralPoint b = spectral_point(p, zeta);
      const Complex tr = kernel_trace(p, a, b);
      // Dense Tr[(m′/m) B⁻¹ S m m̃′ B⁻¹].
      const CMat bmat = CMat::Identity(48, 48) - p.s().cast<Complex>() * a.sol.m.cwiseProduct(b.sol.m).asDiagonal();
      const CMat inv = bmat.partialPivLu().inverse();
      const CMat dense = a.dm.cwiseQuotient(a.sol.m).asDiagonal() * inv * p.s().cast<Complex>() *
                         a.sol.m.cwiseProduct(b.dm).asDiagonal() * inv;
      CHECK(std::abs(tr - dense.trace()) < 1e-10 * std::abs(tr));
      // Centered difference in ζ, h = 1e-5.
      const Real h = 1e-5;
      const Complex fd = (dense_log_trace(p, z, zeta + h) - dense_log_trace(p, z, zeta - h)) / (2 * h);
      CHECK(std::abs(tr - fd) < 1e-6 * std::abs(tr));
      // K(z, ζ) = conj K(z̄, ζ̄).
      for (int beta : {1, 2}) {
        const Complex k = kernel_K(p, a, b, c4, beta);
        const Complex kbar = kernel_K(p, a.conjugate(), b.conjugate(), c4, beta);
        CHECK(std::abs(k - std::conj(kbar)) < 1e-12 * std::abs(k));
        CHECK(std::abs(kernel_K(p, a, b, none, beta) - kernel_K(p, z, zeta, none, beta)) < 1e-9 * std::abs(k));
      }
    }
  }
}

TEST_CASE("kernel_K_tilde: diagonal limit, symmetry and errors") {
  const auto p = profile(ProfileKind::constant, 200);
  for (Real d : {0.05, 0.1, 0.2}) {
    const Real x = 0.1 + d / 2;
    const Real y = 0.1 - d / 2;
    const Real k = kernel_K_tilde(p, x, y, 1e-6);
    CHECK(std::abs(k - 2 / (d * d)) < 0.2 * 2 / (d * d));
    CHECK(std::abs(k - kernel_K_tilde(p, y, x, 1e-6)) < 1e-8 * k);
    // η_* → 0 limit of −2 Re[m′(x) conj m′(y) / (1 − m(x) conj m(y))²] from the semicircle oracle.
    const oracle::C mx = oracle::m_sc({x, 1e-14});
    const oracle::C my = std::conj(oracle::m_sc({y, 1e-14}));
    const oracle::C dmx = oracle::dm_sc({x, 1e-14});
    const oracle::C dmy = std::conj(oracle::dm_sc({y, 1e-14}));
    const Real limit = -2 * (dmx * dmy / ((1.0 - mx * my) * (1.0 - mx * my))).real();
    CHECK(k == doctest::Approx(limit).epsilon(1e-5));
  }
  CHECK(kernel_K_tilde(p, 0.3, 0.2, 1e-6) == doctest::Approx(kernel_K_tilde(p, 0.3, 0.2, 1e-7)).epsilon(1e-8));
  CHECK_THROWS_AS((void)kernel_K_tilde(p, 0.1, 0.2, 0.0), DomainError);
  CHECK_THROWS_AS((void)kernel_K_tilde(p, 0.1, 0.2, 1e-2), DomainError);
  CHECK_THROWS_AS((void)kernel_K_tilde(p, 0.1, 0.1, 1e-11), ConditioningError);
}

TEST_CASE("variance_via_kernel: agreement, β halving, zero g and η_* invariance") {
  const auto p = profile(ProfileKind::constant, 100);
  TestFunction tf;
  tf.g = {BaseFamily::bump, 1, 1};
  tf.eta0 = 0.2;
  const VarianceReport v1 = variance_via_kernel(p, tf, RMat(), 1);
  CHECK(v1.v_kernel > 0);
  CHECK(v1.v_hhalf > 0);
  CHECK(v1.relative_discrepancy() < 0.15);
  CHECK(v1.quadrature_error_estimate < 1e-6 * v1.v_kernel);
  CHECK(v1.eta_star == doctest::Approx(2e-7));
  CHECK(v1.epsilon_hat == doctest::Approx(1.875).epsilon(0.01));
  CHECK_FALSE(v1.flagged);

  const VarianceReport v2 = variance_via_kernel(p, tf, RMat(), 2);
  CHECK(v2.v_kernel == doctest::Approx(v1.v_kernel / 2).epsilon(1e-12));
  CHECK(v2.v_hhalf == doctest::Approx(v1.v_hhalf / 2).epsilon(1e-12));

  for (Real factor : {1e-5, 1e-7}) {
    VarianceOptions opt;
    opt.eta_star_factor = factor;
    const VarianceReport other = variance_via_kernel(p, tf, RMat(), 1, opt);
    CHECK(std::abs(other.v_kernel - v1.v_kernel) <= other.quadrature_error_estimate + v1.quadrature_error_estimate);
  }

  TestFunction zero = tf;
  zero.g.amplitude = 0;
  const VarianceReport v0 = variance_via_kernel(p, zero, RMat(), 1);
  CHECK(v0.v_kernel == 0);
  CHECK(v0.v_hhalf == 0);
  CHECK(v0.flagged);

  TestFunction outside = tf;
  outside.e0 = 1.7;
  CHECK_THROWS_AS((void)variance_via_kernel(p, outside, RMat(), 1), DomainError);
  VarianceOptions starved;
  starved.outer.max_intervals = 1;
  starved.inner.max_intervals = 1;
  starved.max_relative_error = 1e-12;
  CHECK_THROWS_AS((void)variance_via_kernel(p, tf, RMat(), 1, starved), QuadratureError);
}

TEST_CASE("variance_4d cross-checks the two-dimensional representation") {
  const auto p = profile(ProfileKind::constant, 100);
  TestFunction tf;
  tf.g = {BaseFamily::bump, 1, 1};
  tf.eta0 = 0.2;
  VarianceOptions opt;
  opt.alpha = 1.0;
  opt.grid_x_panels = 4;
  opt.grid_eta_panels = 4;
  opt.diagnostic_4d = true;
  const VarianceReport rep = variance_via_kernel(p, tf, RMat(), 1, opt);
  REQUIRE(rep.v_4d.has_value());
  CHECK(std::abs(*rep.v_4d - rep.v_kernel) < 0.1 * rep.v_kernel);
}

TEST_CASE("sample statistics against brute-force oracles") {
  fixture::Gen gen(5);
  RVec x(301);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = gen.uniform(-1, 1) + gen.uniform(-1, 1) * gen.uniform(0, 1);
  const auto n = static_cast<Real>(x.size());
  // Leave-one-out variances by explicit loops.
  RVec loo(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Real mean = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (j != i) mean += x(j);
    mean /= n - 1;
    Real ss = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (j != i) ss += (x(j) - mean) * (x(j) - mean);
    loo(i) = ss / (n - 2);
  }
  const Real jk = std::sqrt((n - 1) / n * (loo.array() - loo.mean()).square().sum());
  CHECK(jackknife_variance_stderr(x) == doctest::Approx(jk).epsilon(1e-10));
  CHECK(sample_variance(x) == doctest::Approx((x.array() - x.mean()).square().sum() / (n - 1)));

  // KS statistic against a brute-force scan of the empirical CDF on a fine grid.
  const Real var = 0.4;
  Real brute = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Real cdf = 0.5 * std::erfc(-x(i) / std::sqrt(2 * var));
    Real below = 0;
    Real at_or_below = 0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      below += x(j) < x(i);
      at_or_below += x(j) <= x(i);
    }
    brute = std::max({brute, at_or_below / n - cdf, cdf - below / n});
  }
  CHECK(ks_statistic_normal(x, var) == doctest::Approx(brute).epsilon(1e-12));

  // Kolmogorov tail: table values Q(1.2238) = 0.10, Q(1.3581) = 0.05, Q(1.6276) = 0.01.
  const int big = 1000000;
  const Real scale = std::sqrt(Real(big)) + 0.12 + 0.11 / std::sqrt(Real(big));
  CHECK(kolmogorov_p_value(1.2238 / scale, big) == doctest::Approx(0.10).epsilon(1e-3));
  CHECK(kolmogorov_p_value(1.3581 / scale, big) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_p_value(1.6276 / scale, big) == doctest::Approx(0.01).epsilon(2e-3));
  CHECK(kolmogorov_p_value(0.9 / scale, big) == doctest::Approx(oracle::kolmogorov_tail(0.9)).epsilon(1e-9));
  CHECK(kolmogorov_p_value(0.0, 10) == 1);

  RVec pm(4);
  pm << -1, 1, -1, 1;
  CHECK(skewness(pm) == doctest::Approx(0));
  CHECK(excess_kurtosis(pm) == doctest::Approx(-2));
  RVec skewed(3);
  skewed << 0, 0, 3;
  // Central moments: m2 = 2, m3 = 2 → 2/2^{3/2}.
  CHECK(skewness(skewed) == doctest::Approx(1 / std::sqrt(2.0)));
}

TEST_CASE("run_clt_experiment plumbing at small n") {
  const auto p = profile(ProfileKind::constant, 120);
  const EnsembleSpec spec{p, {EntryFamily::gaussian, 1}, 17};
  TestFunction tf;
  tf.g = {BaseFamily::gaussian, 1, 1};
  tf.eta0 = std::pow(120.0, -0.3) / 2;
  const CLTReport rep = run_clt_experiment(spec, tf, 200);
  CHECK(rep.n == 120);
  CHECK(rep.n_samples == 200);
  CHECK(rep.statistics.size() == 200);
  CHECK(std::abs(rep.statistics.sum()) < 1e-10 * rep.raw.cwiseAbs().sum());
  CHECK(rep.sample_variance > 0);
  CHECK(rep.variance_stderr > 0);
  CHECK(rep.predicted_variance_hhalf == doctest::Approx(1 / kPi).epsilon(1e-4));
  CHECK(rep.ks_p >= 0);
  CHECK(rep.ks_p <= 1);
  // Linear statistic of one sample reproduced from its eigenvalues.
  CHECK(rep.raw(3) == doctest::Approx(linear_statistic(tf, sample_eigenvalues(spec, 3))).epsilon(1e-14));

  CHECK_THROWS_AS((void)run_clt_experiment(spec, tf, 199), ConfigError);
  TestFunction edge = tf;
  edge.e0 = 1.5;
  CHECK_THROWS_AS((void)run_clt_experiment(spec, edge, 200), DomainError);
  TestFunction micro = tf;
  micro.eta0 = 1.0 / 200;
  CHECK_THROWS_AS((void)run_clt_experiment(spec, micro, 200), DomainError);
}
