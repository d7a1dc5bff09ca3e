#include "meso/twopoint.hpp"

#include "meso/errors.hpp"
#include "meso/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace meso {

namespace {

CVec inverse_shift(const RVec& lambda, Complex z) {
  return (lambda.cast<Complex>().array() - z).inverse().matrix();
}

/// Max-norm of UΛU* − H over evenly spaced probe columns, O(n²) per probe.
template <class Mat>
Real probe_reconstruction(const Mat& u, const RVec& lambda, const Mat& h) {
  constexpr Eigen::Index probes = 8;
  const Eigen::Index n = h.cols();
  Real err = 0;
  for (Eigen::Index k = 0; k < std::min(probes, n); ++k) {
    const Eigen::Index j = k * (n - 1) / std::max<Eigen::Index>(probes - 1, 1);
    const auto uj = u.row(j).adjoint();
    using Vec = Eigen::Matrix<typename Mat::Scalar, Eigen::Dynamic, 1>;
    const Vec col = u * Vec(lambda.cast<typename Mat::Scalar>().cwiseProduct(uj)) - h.col(j);
    err = std::max(err, col.cwiseAbs().maxCoeff());
  }
  return err;
}

}  // namespace

ResolventCache::ResolventCache(const RMat& h, std::string source) : real_(true), source_(std::move(source)) {
  Eigen::SelfAdjointEigenSolver<RMat> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  lambda_ = es.eigenvalues();
  ur_ = es.eigenvectors();
  h_max_ = max_norm(h);
  reconstruction_error_ = probe_reconstruction(ur_, lambda_, h);
}

ResolventCache::ResolventCache(const CMat& h, std::string source) : real_(false), source_(std::move(source)) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  lambda_ = es.eigenvalues();
  uc_ = es.eigenvectors();
  h_max_ = max_norm(h);
  reconstruction_error_ = probe_reconstruction(uc_, lambda_, h);
}

CMat ResolventCache::eigenvectors() const { return real_ ? CMat(ur_.cast<Complex>()) : uc_; }

Complex ResolventCache::entry(Eigen::Index x, Eigen::Index y, Complex z) const {
  const CVec inv = inverse_shift(lambda_, z);
  if (real_) return ur_.row(x).cwiseProduct(ur_.row(y)).transpose().cast<Complex>().cwiseProduct(inv).sum();
  return (uc_.row(x).cwiseProduct(uc_.row(y).conjugate())).transpose().cwiseProduct(inv).sum();
}

CVec ResolventCache::row(Eigen::Index x, Complex z) const {
  const CVec inv = inverse_shift(lambda_, z);
  if (real_) return real_times(ur_, CVec(inv.cwiseProduct(ur_.row(x).transpose().cast<Complex>())));
  return uc_.conjugate() * inv.cwiseProduct(uc_.row(x).transpose());
}

CVec ResolventCache::column(Eigen::Index y, Complex z) const {
  const CVec inv = inverse_shift(lambda_, z);
  if (real_) return real_times(ur_, CVec(inv.cwiseProduct(ur_.row(y).transpose().cast<Complex>())));
  return uc_ * inv.cwiseProduct(uc_.row(y).adjoint());
}

CVec ResolventCache::diagonal(Complex z) const {
  const CVec inv = inverse_shift(lambda_, z);
  if (real_) return real_times(RMat(ur_.cwiseAbs2()), inv);
  return real_times(RMat(uc_.cwiseAbs2()), inv);
}

Complex ResolventCache::trace(Complex z) const { return inverse_shift(lambda_, z).sum(); }

CMat resolvent_entries(const ResolventCache& cache, Complex z, const std::vector<int>& rows) {
  CMat out(static_cast<Eigen::Index>(rows.size()), cache.n());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = cache.row(rows[i], z).transpose();
  return out;
}

Real ward_residual(const ResolventCache& cache, Complex z, Eigen::Index x) {
  const CVec r = cache.row(x, z);
  const Real rhs = r(x).imag() / z.imag();
  return std::abs(r.squaredNorm() - rhs) / std::abs(rhs);
}

Real resolvent_identity_residual(const ResolventCache& cache, Complex z, Complex zeta, const std::vector<int>& rows,
                                 const std::vector<int>& cols) {
  const CMat gz = resolvent_entries(cache, z, rows);
  CMat gzeta_cols(cache.n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) gzeta_cols.col(static_cast<Eigen::Index>(j)) = cache.column(cols[j], zeta);
  const CMat product = (z - zeta) * gz * gzeta_cols;
  CMat diff(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      diff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          gz(static_cast<Eigen::Index>(i), cols[j]) - cache.entry(rows[i], cols[j], zeta);
  return max_norm(CMat(product - diff)) / std::max(max_norm(diff), std::numeric_limits<Real>::min());
}

CVec empirical_T_column(const ResolventCache& cache, const VarianceProfile& profile, Complex z, Complex zeta,
                        Eigen::Index y, bool exclude) {
  CVec w = cache.column(y, z).cwiseProduct(cache.row(y, zeta));
  if (exclude) w(y) = 0;
  return profile.apply(w);
}

Complex empirical_T(const ResolventCache& cache, const VarianceProfile& profile, Complex z, Complex zeta,
                    Eigen::Index x, Eigen::Index y, bool exclude) {
  CVec w = cache.column(y, z).cwiseProduct(cache.row(y, zeta));
  if (exclude) w(y) = 0;
  return profile.s().row(x).transpose().cast<Complex>().cwiseProduct(w).sum();
}

TwoPointLimit::TwoPointLimit(const VarianceProfile& profile, const DysonSolution& sol_z,
                             const DysonSolution& sol_zeta, const StabilityOptions& options)
    : profile_(profile), d_(sol_z.m.cwiseProduct(sol_zeta.m)) {
  if (sol_z.z.imag() * sol_zeta.z.imag() < 0) {
    report_ = std::make_unique<StabilityReport>(build_stability_report(profile, sol_z, sol_zeta, options));
    split_ = std::make_unique<SplitInverse>(*report_);
  } else {
    op_ = std::make_unique<StabilityOperator>(profile, d_, options.force_dense);
  }
}

CVec TwoPointLimit::inverse_column(Eigen::Index y) const {
  if (split_) return split_->column(y);
  CVec e = CVec::Zero(d_.size());
  e(y) = 1;
  return op_->solve(e);
}

CVec TwoPointLimit::column(Eigen::Index y) const {
  // [(1 − X)⁻¹ − 1 − X] e_y with X e_y = S_{·y} d_y.
  CVec col = inverse_column(y);
  col(y) -= 1.0;
  col -= profile_.s().col(y).cast<Complex>() * d_(y);
  return col;
}

Complex TwoPointLimit::entry(Eigen::Index x, Eigen::Index y) const { return column(y)(x); }

Complex TwoPointLimit::trace(const CMat& a) const {
  const auto n = d_.size();
  if (a.rows() != n || a.cols() != n) throw DomainError("trace weight has the wrong shape");
  Complex tr_inv;
  if (split_) {
    tr_inv = split_->trace_product(a);
  } else {
    tr_inv = (a * op_->inverse()).trace();
  }
  // Tr[A X] = Σ_ij A_ij S_ji d_i.
  const Complex tr_ax = a.cwiseProduct(profile_.s().transpose().cast<Complex>()).rowwise().sum().cwiseProduct(d_).sum();
  return tr_inv - a.trace() - tr_ax;
}

Complex deterministic_T_entry(const VarianceProfile& profile, const DysonSolution& sol_z,
                              const DysonSolution& sol_zeta, Eigen::Index x, Eigen::Index y,
                              const StabilityOptions& options) {
  return TwoPointLimit(profile, sol_z, sol_zeta, options).entry(x, y);
}

CVec deterministic_T_column(const VarianceProfile& profile, const DysonSolution& sol_z, const DysonSolution& sol_zeta,
                            Eigen::Index y, const StabilityOptions& options) {
  return TwoPointLimit(profile, sol_z, sol_zeta, options).column(y);
}

Complex deterministic_T_trace(const VarianceProfile& profile, const DysonSolution& sol_z,
                              const DysonSolution& sol_zeta, const CMat& a, const StabilityOptions& options) {
  return TwoPointLimit(profile, sol_z, sol_zeta, options).trace(a);
}

Real two_point_entry_bound(const ControlParameters& a, const ControlParameters& b, bool opposite) {
  return (a.psi + b.psi) * (a.psi * b.psi + (opposite ? std::min(a.theta, b.theta) : 0.0));
}

std::vector<std::pair<int, int>> entrywise_probes(int n, int structured, int random, std::uint64_t seed) {
  std::vector<std::pair<int, int>> probes;
  const int quarter = std::max(1, structured / 4);
  for (int i = 0; i < quarter; ++i) {
    const int x = static_cast<int>((static_cast<long long>(i) * n) / quarter);
    probes.emplace_back(x, x);
    probes.emplace_back(x, (x + 1) % n);
    probes.emplace_back(x, (x + n / 2) % n);
  }
  const int corners[][2] = {{0, n - 1}, {n - 1, 0}, {0, n / 2}, {n / 2, n - 1}};
  for (int i = 0; static_cast<int>(probes.size()) < structured; ++i) {
    const auto& c = corners[i % 4];
    const int shift = i / 4;
    probes.emplace_back(std::min(n - 1, c[0] + shift), std::max(0, c[1] - shift));
  }
  probes.resize(static_cast<std::size_t>(structured));
  std::mt19937_64 rng(entry_seed(seed, static_cast<std::uint64_t>(n), 0xE17));
  std::uniform_int_distribution<int> idx(0, n - 1);
  for (int i = 0; i < random; ++i) probes.emplace_back(idx(rng), idx(rng));
  return probes;
}

std::vector<std::pair<int, std::vector<int>>> two_point_probes(int n, int columns, int rows, std::uint64_t seed) {
  std::mt19937_64 rng(entry_seed(seed, static_cast<std::uint64_t>(n), 0x7B0));
  std::uniform_int_distribution<int> idx(0, n - 1);
  std::set<int> ys;
  for (int y : {0, n - 1, n / 2, n / 4}) {
    if (static_cast<int>(ys.size()) < columns) ys.insert(y);
  }
  while (static_cast<int>(ys.size()) < std::min(columns, n)) ys.insert(idx(rng));
  std::vector<std::pair<int, std::vector<int>>> out;
  for (int y : ys) {
    std::vector<int> xs{y, (y + 1) % n, 0, n - 1, n / 2};
    while (static_cast<int>(xs.size()) < rows) xs.push_back(idx(rng));
    xs.resize(static_cast<std::size_t>(rows));
    out.emplace_back(y, std::move(xs));
  }
  return out;
}

LocalLawReport local_law_experiment(const LocalLawConfig& config) {
  if (config.samples_per_n < 3) throw ConfigError("local-law experiment needs at least 3 samples per n");
  if (config.n_values.size() < 4) throw ConfigError("slope fitting needs at least 4 sizes");
  LocalLawReport report;
  report.config = config;
  const bool opposite = config.z.imag() * config.zeta.imag() < 0;

  for (int n : config.n_values) {
    const auto profile = build_variance_profile(config.recipe, n);
    const EnsembleSpec spec{profile, config.law, entry_seed(config.seed, static_cast<std::uint64_t>(n), 0x11)};
    validate(spec);
    const auto sol_z = solve_vde(profile, config.z);
    const auto sol_zeta = solve_vde(profile, config.zeta);
    const TwoPointLimit limit(profile, sol_z, sol_zeta, config.stability);
    const auto probes = entrywise_probes(n, config.structured_probes, config.random_probes, config.seed);
    const auto t_probes = two_point_probes(n, config.t_columns, config.t_rows_per_column, config.seed);
    std::vector<CVec> t_det;
    for (const auto& [y, xs] : t_probes) t_det.push_back(limit.column(y));

    LocalLawRow row;
    row.n = n;
    row.samples = config.samples_per_n;
    const auto cz = control_parameters(sol_z, n);
    const auto czeta = control_parameters(sol_zeta, n);
    row.psi = cz.psi;
    row.theta = cz.theta;
    row.psi_zeta = czeta.psi;
    row.theta_zeta = czeta.theta;
    row.t_bound = two_point_entry_bound(cz, czeta, opposite);
    const Real t_threshold = std::pow(static_cast<Real>(n), config.slack_exponent) * row.t_bound;
    const Complex m_avg = sol_z.average();

    struct SampleResult {
      Real entrywise = 0;
      Real averaged = 0;
      Real t_max = 0;
      int t_within = 0;
      int t_total = 0;
      Real ward = 0;
      Real reconstruction = 0;
    };
    std::vector<SampleResult> results(static_cast<std::size_t>(config.samples_per_n));
    parallel_for(config.samples_per_n, [&](int s) {
      const auto index = static_cast<std::uint64_t>(s);
      const ResolventCache cache = config.law.beta == 1
                                       ? ResolventCache(sample_matrix<Real>(spec, index))
                                       : ResolventCache(sample_matrix<Complex>(spec, index));
      SampleResult& r = results[static_cast<std::size_t>(s)];
      r.reconstruction = cache.reconstruction_error() / (cache.h_max() * n);
      for (const auto& [j, k] : probes) {
        const Complex expected = j == k ? sol_z.m(j) : Complex{0, 0};
        r.entrywise = std::max(r.entrywise, std::abs(cache.entry(j, k, config.z) - expected));
      }
      r.averaged = std::abs(cache.trace(config.z) / static_cast<Real>(n) - m_avg);
      for (std::size_t c = 0; c < t_probes.size(); ++c) {
        const auto& [y, xs] = t_probes[c];
        const CVec t_emp = empirical_T_column(cache, profile, config.z, config.zeta, y);
        for (int x : xs) {
          const Real err = std::abs(t_emp(x) - t_det[c](x));
          r.t_max = std::max(r.t_max, err);
          r.t_within += err <= t_threshold;
          ++r.t_total;
        }
      }
      r.ward = std::max(ward_residual(cache, config.z, 0), ward_residual(cache, config.zeta, n - 1));
    });

    int within = 0;
    int total = 0;
    for (const auto& r : results) {
      row.err_entrywise += r.entrywise / config.samples_per_n;
      row.err_averaged += r.averaged / config.samples_per_n;
      row.err_T += r.t_max / config.samples_per_n;
      within += r.t_within;
      total += r.t_total;
      row.max_ward_residual = std::max(row.max_ward_residual, r.ward);
      row.max_reconstruction_error = std::max(row.max_reconstruction_error, r.reconstruction);
    }
    row.t_within_fraction = total > 0 ? static_cast<Real>(within) / total : 0.0;
    report.rows.push_back(row);
  }

  const auto k = static_cast<Eigen::Index>(report.rows.size());
  RVec log_n(k), e1(k), e2(k), e3(k), lpsi(k), ltheta(k), lbound(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& r = report.rows[static_cast<std::size_t>(i)];
    log_n(i) = std::log(static_cast<Real>(r.n));
    e1(i) = std::log(r.err_entrywise);
    e2(i) = std::log(r.err_averaged);
    e3(i) = std::log(r.err_T);
    lpsi(i) = std::log(r.psi);
    ltheta(i) = std::log(r.theta);
    lbound(i) = std::log(r.t_bound);
  }
  report.fit_entrywise = fit_line(log_n, e1);
  report.fit_averaged = fit_line(log_n, e2);
  report.fit_T = fit_line(log_n, e3);
  report.psi_pred = fit_line(log_n, lpsi);
  report.theta_pred = fit_line(log_n, ltheta);
  report.t_bound_pred = fit_line(log_n, lbound);
  return report;
}

}  // namespace meso
