#include <doctest.h>

#include "fixtures.hpp"
#include "meso/errors.hpp"
#include "meso/linalg.hpp"
#include "meso/stability.hpp"
#include "oracles.hpp"

#include <Eigen/SVD>

using namespace meso;
using fixture::profile;

namespace {

const VarianceProfile& wigner64() {
  static const auto p = profile(ProfileKind::constant, 64);
  return p;
}

StabilityReport report_at(const VarianceProfile& p, Complex z, Complex zeta, const StabilityOptions& o = {}) {
  return build_stability_report(p, solve_vde(p, z), solve_vde(p, zeta), o);
}

}  // namespace

TEST_CASE("F in the Wigner case is rank one") {
  const auto& p = wigner64();
  const auto s = solve_vde(p, {0, 1});
  const auto f = build_F(p, s, s);
  const double lambda = (3 - std::sqrt(5.0)) / 2;
  CHECK(f.lambda1 == doctest::Approx(lambda).epsilon(1e-12));
  CHECK(f.gap == doctest::Approx(lambda).epsilon(1e-12));
  CHECK((f.v.array() - 1 / std::sqrt(64.0)).abs().maxCoeff() < 1e-12);
  CHECK((f.f_matrix.array() - std::norm(oracle::m_sc({0, 1})) / 64).abs().maxCoeff() < 1e-15);
  CHECK((f.f_matrix - f.f_matrix.transpose()).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("1 − λ₁(F(z, z̄)) tracks η") {
  const auto& p = wigner64();
  for (double eta : {1e-2, 1e-3, 1e-4}) {
    const auto s = solve_vde(p, {0, eta});
    const auto f = build_F(p, s, solve_vde(p, {0, -eta}));
    CHECK((1 - f.lambda1) / eta == doctest::Approx(1.0).epsilon(2 * eta + 1e-6));
  }
}

TEST_CASE("property: Perron vector positive, 1 − λ₁ ∼ η, gap ≥ 0.05") {
  fixture::Gen gen(11);
  for (const auto& p : fixture::shipped(96)) {
    for (int trial = 0; trial < 40; ++trial) {
      const double e = gen.uniform(-1, 1);
      const double eta = gen.log_uniform(1e-4, 1e-1);
      const auto s = solve_vde(p, {e, eta});
      const auto f = build_F(p, s, solve_vde(p, {e, -eta}));
      CHECK(f.v.minCoeff() > 0);
      const double scaled = std::sqrt(96.0) * f.v.minCoeff();
      CHECK(scaled > 0.3);
      CHECK(std::sqrt(96.0) * f.v.maxCoeff() < 3);
      const double ratio = (1 - f.lambda1) / eta;
      CHECK(ratio >= 0.2);
      CHECK(ratio <= 5);
      CHECK(f.gap >= 0.05);
      CHECK((f.f_matrix.array() >= 0).all());
    }
  }
}

TEST_CASE("saturation identity") {
  const auto& p = wigner64();
  CHECK(saturation_identity_check(p, solve_vde(p, {0.3, 0.01})) < 1e-10);
  const auto k = profile(ProfileKind::smooth_kernel, 64);
  CHECK(saturation_identity_check(k, solve_vde(k, {0, 1})) < 1e-10);
  SolverOptions loose;
  loose.tol = 1e-6;
  loose.newton = false;
  CHECK(saturation_identity_check(k, solve_vde(k, {0.2, 0.05}, loose)) <= 1e-4);
}

TEST_CASE("Wigner projector at z = i, ζ = −i") {
  const auto& p = wigner64();
  const auto rep = report_at(p, {0, 1}, {0, -1});
  const CMat pi = rep.projector.matrix();
  CHECK((pi.array() - 1.0 / 64).abs().maxCoeff() < 1e-12);
  CHECK(rep.pi_one_ratio == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(rep.smallest_eig - (std::sqrt(5.0) - 1) / 2) < 1e-12);
  CHECK((rep.spectrum.tail(63).array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(std::abs(rep.projector.trace() - 1.0) < 1e-12);
  // B⁻¹(1 − Π) = 1 − 𝟙𝟙ᵗ/n: its ℓ² norm is 1 and its ∞→∞ norm is 2 − 2/n.
  CHECK(rep.restricted_inverse_norm == doctest::Approx(2 - 2.0 / 64).epsilon(1e-10));
  const CMat restricted = rep.op.solve(CMat(CMat::Identity(64, 64) - pi));
  CHECK(Eigen::JacobiSVD<CMat>(restricted).singularValues()(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rep.idempotency_residual < 1e-10);
  CHECK(rep.commutator_residual < 1e-10);
  CHECK(rep.quadrature_nodes >= 32);
}

TEST_CASE("restricted inverse is order one while B⁻¹ blows up") {
  const auto& p = wigner64();
  const auto rep = report_at(p, {0.3, 1e-3}, {0.3, -1e-3});
  CHECK(rep.restricted_inverse_norm <= 10);
  CHECK(inverse_norm(rep) >= 500);
  // Π = 0 reduces to ‖B⁻¹‖, matching the dense inverse.
  CHECK(inverse_complement_norm(rep.op, nullptr) == doctest::Approx(op_inf_norm(rep.op.inverse())).epsilon(1e-10));
  // Direct solve against the columns of 1 − Π.
  const CMat direct = rep.op.solve(CMat(CMat::Identity(64, 64) - rep.projector.matrix()));
  CHECK(rep.restricted_inverse_norm == doctest::Approx(op_inf_norm(direct)).epsilon(1e-8));
}

TEST_CASE("low-rank and dense projector paths agree") {
  for (auto kind : {ProfileKind::smooth_kernel, ProfileKind::block}) {
    const auto p = profile(kind, 48);
    const auto sz = solve_vde(p, {0.2, 0.01});
    const auto sw = solve_vde(p, {0.25, -0.02});
    const auto fast = build_stability_report(p, sz, sw);
    StabilityOptions dense;
    dense.force_dense = true;
    const auto slow = build_stability_report(p, sz, sw, dense);
    CHECK(fast.op.is_low_rank());
    CHECK_FALSE(slow.op.is_low_rank());
    CHECK(max_norm(CMat(fast.projector.matrix() - slow.projector.matrix())) < 1e-10);
    CHECK(std::abs(fast.smallest_eig - slow.smallest_eig) < 1e-10);
    CHECK(fast.restricted_inverse_norm == doctest::Approx(slow.restricted_inverse_norm).epsilon(1e-8));
    CHECK(fast.pi_one_ratio == doctest::Approx(slow.pi_one_ratio).epsilon(1e-8));
    CHECK(slow.idempotency_residual < 1e-10);
    CHECK(slow.commutator_residual < 1e-8);
  }
}

TEST_CASE("separation and domain errors") {
  const auto& p = wigner64();
  // Same half-plane: the n − 1 unit eigenvalues are the smallest, nothing is isolated.
  CHECK_THROWS_AS((void)report_at(p, {0.3, 0.1}, {0.3, 0.1}), SeparationError);
  try {
    (void)report_at(p, {0.3, 0.1}, {0.3, 0.1});
  } catch (const SeparationError& e) {
    CHECK(e.layout().find("|eig|") != std::string::npos);
  }
  CHECK_THROWS_AS((void)report_at(p, {0.3, 0.1}, {0.6, -0.1}), DomainError);
  StabilityOptions bulk;
  bulk.bulk = {{-1.0, 1.0}};
  CHECK_THROWS_AS((void)report_at(p, {1.2, 0.1}, {1.2, -0.1}, bulk), DomainError);
  StabilityOptions wrong;
  wrong.radius = 0.95;
  wrong.delta = 0.1;
  CHECK_THROWS_AS((void)report_at(p, {0, 1}, {0, -1}, wrong), SeparationError);
}

TEST_CASE("property: random bulk pairs are separated on every shipped profile") {
  fixture::Gen gen(5);
  for (const auto& p : fixture::shipped(128)) {
    for (int trial = 0; trial < 200; ++trial) {
      const double e = gen.uniform(-1, 1);
      const double e2 = e + gen.uniform(-0.1, 0.1);
      const Complex z{e, gen.log_uniform(1e-4, 1e-1)};
      const Complex zeta{e2, -gen.log_uniform(1e-4, 1e-1)};
      const auto rep = report_at(p, z, zeta);
      CHECK(rep.gap >= 0.05);
      int inside = 0;
      int annulus = 0;
      for (Eigen::Index i = 0; i < rep.spectrum.size(); ++i) {
        const double a = std::abs(rep.spectrum(i));
        inside += a < rep.contour_radius - 0.75 * rep.annulus_halfwidth;
        annulus += std::abs(a - rep.contour_radius) <= 0.75 * rep.annulus_halfwidth;
      }
      CHECK(inside == 1);
      CHECK(annulus == 0);
      CHECK(rep.idempotency_residual <= 1e-8);
      CHECK(std::abs(rep.projector.trace() - 1.0) <= 1e-8);
      CHECK(rep.commutator_residual <= 1e-8);
    }
  }
}

TEST_CASE("projector is Lipschitz in ζ around z̄") {
  for (const auto& p : fixture::shipped(64)) {
    const Complex z{0.3, 0.01};
    const auto sz = solve_vde(p, z);
    const CMat pi0 = build_stability_report(p, sz, solve_vde(p, std::conj(z))).projector.matrix();
    for (double t : {0.05, 0.02, 0.01, 0.005}) {
      for (Complex dir : {Complex{1, 0}, Complex{0, -0.5}}) {
        const Complex zeta = std::conj(z) + t * dir;
        const CMat pi = build_stability_report(p, sz, solve_vde(p, zeta)).projector.matrix();
        CHECK(op_inf_norm(CMat(pi - pi0)) <= 50 * std::abs(zeta - std::conj(z)));
      }
    }
  }
}

TEST_CASE("weight decomposition examples") {
  const auto& p = wigner64();
  const auto rep = report_at(p, {0, 1}, {0, -1});
  const int n = 64;
  const auto ones = decompose_weight(rep, CMat::Constant(n, n, 1.0 / n));
  CHECK(max_norm(ones.y_matrix) < 1e-14);
  CHECK((ones.s.array() - 1.0 / n).abs().maxCoeff() < 1e-14);

  CMat e11 = CMat::Zero(n, n);
  e11(0, 0) = 1;
  const auto d = decompose_weight(rep, e11);
  CVec e1 = CVec::Zero(n);
  e1(0) = 1;
  CHECK(max_norm(CVec(d.s - e1 / n)) < 1e-14);
  CHECK(max_norm(CMat(d.y_matrix - (e11 - CVec::Ones(n) * e1.transpose() / n))) < 1e-14);
}

TEST_CASE("property: decomposition reconstructs W, annihilates ΠY, and |s| ≤ C/n") {
  fixture::Gen gen(3);
  for (const auto& p : fixture::shipped(80)) {
    const int n = p.n();
    const double e = gen.uniform(-0.5, 0.5);
    const auto rep = report_at(p, {e, 0.01}, {e + gen.uniform(-0.05, 0.05), -0.02});
    const CMat pi = rep.projector.matrix();
    for (int trial = 0; trial < 10; ++trial) {
      CMat w(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) w(j, k) = Complex{gen.uniform(-1, 1), gen.uniform(-1, 1)} / double(n);
      const auto d = decompose_weight(rep, w);
      CHECK(max_norm(CMat(d.y_matrix + CVec::Ones(n) * d.s.adjoint() - w)) <= 1e-12);
      CHECK(max_norm(CMat(pi * d.y_matrix)) <= 1e-10);
      CHECK(d.s.cwiseAbs().maxCoeff() <= 2.0 / rep.pi_one_ratio / n);
    }
  }
  const auto& p = wigner64();
  const auto rep = report_at(p, {0, 1}, {0, -1});
  CHECK_THROWS_AS((void)decompose_weight(rep, CMat::Zero(64, 64), 2.0), DomainError);
}

TEST_CASE("Dyson difference identity") {
  const auto& p = wigner64();
  const auto si = solve_vde(p, {0, 1});
  CHECK(resolvent_difference_identity(si, solve_vde(p, {0, 2}), p) < 1e-10);
  CHECK(resolvent_difference_identity(si, solve_vde(p, {0, -1}), p) < 1e-10);
  const auto sh = solve_vde(p, {1e-6, 1});
  const Complex quotient = (sh.m(0) - si.m(0)) / Complex{1e-6, 0};
  CHECK(std::abs(quotient / oracle::dm_sc({0, 1}) - 1.0) < 1e-5);
  CHECK(resolvent_difference_identity(si, sh, p) < 100 * 1e-12 / 1e-6);
  for (auto kind : {ProfileKind::smooth_kernel, ProfileKind::block}) {
    const auto q = profile(kind, 64);
    CHECK(resolvent_difference_identity(solve_vde(q, {0.2, 1e-3}), solve_vde(q, {0.25, -1e-3}), q) < 1e-9);
  }
}
