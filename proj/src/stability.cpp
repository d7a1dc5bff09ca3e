#include "meso/stability.hpp"

#include "meso/errors.hpp"
#include "meso/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace meso {

namespace {

RVec saturation_weights(const DysonSolution& a, const DysonSolution& b) {
  return (a.m.array() * b.m.array()).abs().sqrt().matrix();
}

/// F x = w ∘ S(w ∘ x) for real x.
RVec apply_F(const VarianceProfile& profile, const RVec& w, const RVec& x) {
  return w.cwiseProduct(profile.apply(w.cwiseProduct(x).cast<Complex>()).real());
}

/// Eigenvalue moduli of F = W S W, descending.
RVec f_moduli(const VarianceProfile& profile, const RVec& w, const RMat& f) {
  RVec ev;
  if (const auto* factor = profile.low_rank()) {
    // Nonzero eigenvalues of W U Λ Uᵀ W are those of Λ G with G = Uᵀ W² U = L Lᵀ, i.e. of Lᵀ Λ L.
    const RMat wu = w.asDiagonal() * factor->basis;
    const RMat g = wu.transpose() * wu;
    Eigen::LLT<RMat> llt(g);
    RMat sym;
    if (llt.info() == Eigen::Success) {
      const RMat l = llt.matrixL();
      sym = l.transpose() * factor->values.asDiagonal() * l;
    } else {
      sym = wu * factor->values.asDiagonal() * wu.transpose();
    }
    ev = Eigen::SelfAdjointEigenSolver<RMat>(sym, Eigen::EigenvaluesOnly).eigenvalues();
  } else {
    ev = Eigen::SelfAdjointEigenSolver<RMat>(f, Eigen::EigenvaluesOnly).eigenvalues();
  }
  ev = ev.cwiseAbs();
  std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
  return ev;
}

std::string layout_string(const CVec& spectrum, Real r, Real delta) {
  std::ostringstream os;
  os << "r=" << r << " delta=" << delta << " |eig|:";
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(spectrum.size(), 6); ++i) os << ' ' << std::abs(spectrum(i));
  return os.str();
}

struct Separation {
  int inside = 0;
  int annulus = 0;
};

Separation count_layout(const CVec& spectrum, Real r, Real delta) {
  Separation s;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
    const Real a = std::abs(spectrum(i));
    if (a < r - 0.75 * delta) {
      ++s.inside;
    } else if (a <= r + 0.75 * delta) {
      ++s.annulus;
    }
  }
  return s;
}

bool separates(const CVec& spectrum, Real r, Real delta) {
  const auto s = count_layout(spectrum, r, delta);
  return s.inside == 1 && s.annulus == 0;
}

/// r = √(ab), δ = ½ min(r − a, b − r) for the two smallest moduli a < b of a spectrum.
std::pair<Real, Real> radius_from(const CVec& spectrum) {
  if (spectrum.size() < 2) return {0, 0};
  const Real a = std::abs(spectrum(0));
  const Real b = std::abs(spectrum(1));
  const Real r = std::sqrt(a * b);
  return {r, 0.5 * std::min(r - a, b - r)};
}

bool in_bulk(const std::vector<Interval>& bulk, Real e) {
  for (const auto& iv : bulk)
    if (iv.contains(e)) return true;
  return false;
}

/// Trapezoid sum over N nodes of ξ_k (ξ_k − B)⁻¹ in factored form: returns Σ_k m_k with
/// m_k = −ξ_k c_k⁻¹ (c_k + C)⁻¹, c_k = ξ_k − 1. The c⁻¹·I part integrates to zero for r < 1.
CMat factored_node_sum(const CMat& cap, Real r, int n_nodes, int stride, int offset) {
  const auto rank = cap.rows();
  CMat sum = CMat::Zero(rank, rank);
  for (int k = offset; k < n_nodes; k += stride) {
    const Complex xi = std::polar(r, 2 * kPi * k / n_nodes);
    const Complex c = xi - 1.0;
    CMat shifted = cap;
    shifted.diagonal().array() += c;
    sum -= (xi / c) * shifted.partialPivLu().inverse();
  }
  return sum;
}

CMat dense_node_sum(const CMat& b, Real r, int n_nodes, int stride, int offset) {
  const auto n = b.rows();
  CMat sum = CMat::Zero(n, n);
  for (int k = offset; k < n_nodes; k += stride) {
    const Complex xi = std::polar(r, 2 * kPi * k / n_nodes);
    CMat shifted = -b;
    shifted.diagonal().array() += xi;
    sum += xi * shifted.partialPivLu().inverse();
  }
  return sum;
}

}  // namespace

SaturatedSelfEnergy build_F(const VarianceProfile& profile, const DysonSolution& sol_z,
                            const DysonSolution& sol_zeta, const PowerIterationOptions& options) {
  const int n = profile.n();
  if (sol_z.m.size() != n || sol_zeta.m.size() != n) throw DomainError("solution length does not match the profile");
  const RVec w = saturation_weights(sol_z, sol_zeta);
  SaturatedSelfEnergy out;
  out.f_matrix = w.asDiagonal() * profile.s() * w.asDiagonal();
  out.moduli = f_moduli(profile, w, out.f_matrix);
  const Real second = out.moduli.size() > 1 ? out.moduli(1) : 0.0;
  out.gap = out.moduli(0) - second;
  if (out.gap < options.min_gap) throw DegenerateGapError("leading eigenvalue of F is not separated");

  RVec v = RVec::Constant(n, 1.0 / std::sqrt(static_cast<Real>(n)));
  Real lambda = 0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const RVec fv = apply_F(profile, w, v);
    lambda = v.dot(fv);
    const Real residual = (fv - lambda * v).norm();
    out.power_iterations = it;
    if (residual <= options.tol) break;
    if (it == options.max_iterations) throw DegenerateGapError("power iteration stagnated");
    v = fv / fv.norm();
  }
  if (v.sum() < 0) v = -v;
  out.lambda1 = lambda;
  out.v = v;
  return out;
}

Real saturation_identity_check(const VarianceProfile& profile, const DysonSolution& sol_z) {
  const RVec abs_m = sol_z.m.cwiseAbs();
  const RVec x = sol_z.m.imag().cwiseQuotient(abs_m);
  const RVec lhs = x - apply_F(profile, abs_m, x);
  return (lhs - sol_z.z.imag() * abs_m).cwiseAbs().maxCoeff();
}

Projector Projector::dense(CMat pi) {
  Projector p;
  p.is_dense_ = true;
  p.dense_ = std::move(pi);
  return p;
}

Projector Projector::factored(CMat left, CMat core, CMat right) {
  Projector p;
  p.is_dense_ = false;
  p.left_ = std::move(left);
  p.core_ = std::move(core);
  p.right_ = std::move(right);
  return p;
}

int Projector::n() const { return static_cast<int>(is_dense_ ? dense_.rows() : left_.rows()); }

CMat Projector::matrix() const { return is_dense_ ? dense_ : CMat(left_ * core_ * right_); }

CVec Projector::apply(const CVec& x) const { return is_dense_ ? CVec(dense_ * x) : CVec(left_ * (core_ * (right_ * x))); }

CVec Projector::column(Eigen::Index k) const {
  return is_dense_ ? CVec(dense_.col(k)) : CVec(left_ * (core_ * right_.col(k)));
}

CVec Projector::row(Eigen::Index k) const {
  return is_dense_ ? CVec(dense_.row(k).transpose()) : CVec((left_.row(k) * core_ * right_).transpose());
}

Complex Projector::trace() const {
  return is_dense_ ? dense_.trace() : (core_ * right_ * left_).trace();
}

void Projector::rank_one_factors(CVec& u, CVec& w) const {
  CVec diag;
  if (is_dense_) {
    diag = dense_.diagonal();
  } else {
    const CMat lc = left_ * core_;
    diag = lc.cwiseProduct(right_.transpose()).rowwise().sum();
  }
  Eigen::Index k = 0;
  diag.cwiseAbs().maxCoeff(&k);
  if (std::abs(diag(k)) == 0) throw NumericalError("projector has a vanishing diagonal");
  u = column(k);
  w = row(k) / diag(k);
}

StabilityReport build_stability_report(const VarianceProfile& profile, const DysonSolution& sol_z,
                                       const DysonSolution& sol_zeta, const StabilityOptions& options) {
  const Complex z = sol_z.z;
  const Complex zeta = sol_zeta.z;
  // A few ulps of slack so grid points on the bound are accepted.
  if (std::abs(z.real() - zeta.real()) > options.proximity * (1 + 1e-12) + 1e-15)
    throw DomainError("|Re z − Re ζ| exceeds the proximity bound");
  if (!options.bulk.empty() && !(in_bulk(options.bulk, z.real()) && in_bulk(options.bulk, zeta.real())))
    throw DomainError("spectral pair outside the bulk");

  StabilityReport rep{z, zeta, StabilityOperator(profile, sol_z.m.cwiseProduct(sol_zeta.m), options.force_dense)};
  rep.spectrum = rep.op.spectrum();
  rep.spectrum_b0 = StabilityOperator(profile, sol_z.m.cwiseAbs2().cast<Complex>(), options.force_dense).spectrum();
  rep.smallest_eig = rep.spectrum(0);

  const auto fdata = build_F(profile, sol_z, sol_zeta);
  rep.lambda1 = fdata.lambda1;
  rep.gap = fdata.gap;

  // Radius: user-supplied, else from B₀, else from B when B's isolated eigenvalue sits outside the B₀ circle.
  Real r = 0;
  Real delta = 0;
  auto certified = [&](Real rr, Real dd) {
    return rr > 0 && dd > 0 && rr < 1 && separates(rep.spectrum, rr, dd) && separates(rep.spectrum_b0, rr, dd);
  };
  if (options.radius) {
    r = *options.radius;
    delta = options.delta.value_or(0.5 * radius_from(rep.spectrum).second);
    if (!certified(r, delta))
      throw SeparationError("supplied contour does not isolate one eigenvalue", layout_string(rep.spectrum, r, delta));
  } else {
    std::tie(r, delta) = radius_from(rep.spectrum_b0);
    if (options.delta) delta = *options.delta;
    if (!certified(r, delta)) {
      std::tie(r, delta) = radius_from(rep.spectrum);
      if (options.delta) delta = *options.delta;
      if (!certified(r, delta))
        throw SeparationError("no annulus separates the smallest eigenvalue of B and B0",
                              layout_string(rep.spectrum, r, delta));
    }
  }
  rep.contour_radius = r;
  rep.annulus_halfwidth = delta;

  int nodes = options.min_nodes;
  if (rep.op.is_low_rank()) {
    const RMat& u = rep.op.basis();
    const CMat& cap = rep.op.capacitance();
    const CMat left = u.cast<Complex>();
    const CMat right = rep.op.values().cast<Complex>().asDiagonal() *
                       (u.transpose().cast<Complex>() * rep.op.weights().asDiagonal());
    CMat sum = factored_node_sum(cap, r, nodes, 1, 0);
    for (;;) {
      const CMat core = sum / static_cast<Real>(nodes);
      const CMat idem = core * cap * core - core;
      rep.idempotency_residual = max_norm(CMat(left * idem * right));
      const Complex tr = (core * cap).trace();
      if (rep.idempotency_residual < options.idempotency_tol && std::abs(tr - 1.0) < 1e-8) {
        rep.projector = Projector::factored(left, core, right);
        rep.commutator_residual = max_norm(CMat(left * (core * cap - cap * core) * right));
        break;
      }
      if (2 * nodes > options.max_nodes)
        throw QuadratureError("contour quadrature did not converge", rep.idempotency_residual, std::abs(tr));
      sum += factored_node_sum(cap, r, 2 * nodes, 2, 1);
      nodes *= 2;
    }
  } else {
    const CMat b = rep.op.matrix();
    CMat sum = dense_node_sum(b, r, nodes, 1, 0);
    for (;;) {
      const CMat pi = sum / static_cast<Real>(nodes);
      rep.idempotency_residual = max_norm(CMat(pi * pi - pi));
      const Complex tr = pi.trace();
      if (rep.idempotency_residual < options.idempotency_tol && std::abs(tr - 1.0) < 1e-8) {
        rep.commutator_residual = max_norm(CMat(pi * b - b * pi));
        rep.projector = Projector::dense(pi);
        break;
      }
      if (2 * nodes > options.max_nodes)
        throw QuadratureError("contour quadrature did not converge", rep.idempotency_residual, std::abs(tr));
      sum += dense_node_sum(b, r, 2 * nodes, 2, 1);
      nodes *= 2;
    }
  }
  rep.quadrature_nodes = nodes;

  const CMat pi = rep.projector.matrix();
  rep.pi_one_ratio = max_norm(CVec(pi.rowwise().sum())) / op_inf_norm(pi);
  rep.restricted_inverse_norm = inverse_complement_norm(rep.op, &rep.projector);
  return rep;
}

Real inverse_complement_norm(const StabilityOperator& op, const Projector* projector) {
  const int n = op.n();
  if (op.is_low_rank()) {
    // B⁻¹ = 1 + U K Y with Y = Λ Uᵀ diag(d), so B⁻¹(1 − Π) = (1 − Π) + U K (Y − Y Π).
    const RMat& u = op.basis();
    CMat y = op.values().cast<Complex>().asDiagonal() * (u.transpose().cast<Complex>() * op.weights().asDiagonal());
    CMat full = CMat::Identity(n, n);
    if (projector != nullptr) {
      const CMat pi = projector->matrix();
      full -= pi;
      y -= y * pi;
    }
    full += real_times(u, CMat(op.capacitance_inverse() * y));
    return op_inf_norm(full);
  }
  CMat rhs = CMat::Identity(n, n);
  if (projector != nullptr) rhs -= projector->matrix();
  return op_inf_norm(op.solve(rhs));
}

Real restricted_inverse_norm(const StabilityReport& report) {
  return inverse_complement_norm(report.op, &report.projector);
}

Real inverse_norm(const StabilityReport& report) { return inverse_complement_norm(report.op, nullptr); }

SplitInverse::SplitInverse(const StabilityReport& report) : report_(&report) {
  const Complex mu = report.smallest_eig;
  coefficient_ = 1.0 / mu - 1.0 / (1.0 + mu);
  const auto& pi = report.projector;
  if (report.op.is_low_rank() && pi.is_factored()) {
    // B + Π = 1 − U (1 − M) Y, so (B + Π)⁻¹ = 1 + U N (1 − C N)⁻¹ Y with N = 1 − M.
    const auto r = pi.core().rows();
    const CMat nn = CMat::Identity(r, r) - pi.core();
    q_ = nn * (CMat::Identity(r, r) - report.op.capacitance() * nn).partialPivLu().inverse();
    y_ = pi.right();
    return;
  }
  lu_.emplace(CMat(report.op.matrix() + pi.matrix()));
}

CVec SplitInverse::apply(const CVec& x) const {
  const CVec px = report_->projector.apply(x);
  if (lu_) return lu_->solve(x) + coefficient_ * px;
  return x + real_times(report_->op.basis(), CVec(q_ * (y_ * x))) + coefficient_ * px;
}

CVec SplitInverse::column(Eigen::Index k) const {
  CVec e = CVec::Zero(report_->op.n());
  e(k) = 1;
  return apply(e);
}

Complex SplitInverse::trace_product(const CMat& a) const {
  const auto& pi = report_->projector;
  if (lu_) {
    const CMat shifted_inverse = lu_->solve(CMat::Identity(a.rows(), a.cols()));
    return (a * shifted_inverse).trace() + coefficient_ * (a * pi.matrix()).trace();
  }
  // Tr[A B⁻¹] = Tr A + Tr[(Q + c M) Y A U].
  const CMat yau = real_times(report_->op.basis().transpose(), CMat((y_ * a).transpose())).transpose();
  return a.trace() + ((q_ + coefficient_ * pi.core()) * yau).trace();
}

WeightDecomposition decompose_weight(const StabilityReport& report, const CMat& w, Real c_min) {
  const int n = report.op.n();
  if (w.rows() != n || w.cols() != n) throw DomainError("weight matrix has the wrong shape");
  if (report.pi_one_ratio < c_min) throw DomainError("Π𝟙 too small: weight decomposition is ill-posed");
  CVec u;
  CVec left;
  report.projector.rank_one_factors(u, left);
  const Complex denom = left.sum();
  const CVec s_bar = (w.transpose() * left) / denom;
  WeightDecomposition out;
  out.w_matrix = w;
  out.s = s_bar.conjugate();
  out.y_matrix = w - CVec::Ones(n) * s_bar.transpose();
  return out;
}

Real resolvent_difference_identity(const DysonSolution& sol_z, const DysonSolution& sol_zeta,
                                   const VarianceProfile& profile) {
  if (sol_z.z == sol_zeta.z) throw DomainError("resolvent difference identity needs z ≠ ζ");
  const CVec mm = sol_z.m.cwiseProduct(sol_zeta.m);
  const StabilityOperator op(profile, mm);
  const CVec lhs = mm.cwiseProduct(op.solve(CVec(CVec::Ones(profile.n()))));
  const CVec rhs = (sol_z.m - sol_zeta.m) / (sol_z.z - sol_zeta.z);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

}  // namespace meso
