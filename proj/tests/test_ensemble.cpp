#include <doctest.h>

#include "meso/ensemble.hpp"
#include "meso/errors.hpp"
#include "oracles.hpp"

#include <random>
#include <sstream>

using namespace meso;

namespace {

ProfileParams cosine_params() {
  ProfileParams p;
  p.kernel = {KernelFamily::cosine, 1.0, 0.5, 0.2};
  return p;
}

ProfileParams block_params() {
  ProfileParams p;
  p.block = RMat{{1.0, 2.0}, {2.0, 3.0}};
  return p;
}

EnsembleSpec spec_for(VarianceProfile profile, EntryFamily family, int beta, std::uint64_t seed = 42) {
  return {std::move(profile), {family, beta}, seed};
}

}  // namespace

TEST_CASE("constant profile is the Wigner matrix of variances") {
  const auto p = build_variance_profile(ProfileKind::constant, 4, {});
  CHECK(p.n() == 4);
  CHECK((p.s().array() == 0.25).all());
  CHECK(p.c_inf() == doctest::Approx(1.0));
  CHECK(p.c_sup() == doctest::Approx(1.0));
}

TEST_CASE("smooth-kernel extrema follow the shape function") {
  const int n = 1000;
  const auto p = build_variance_profile(ProfileKind::smooth_kernel, n, cosine_params());
  CHECK(p.s().minCoeff() == doctest::Approx(0.5 / n).epsilon(1e-12));
  CHECK(p.s().maxCoeff() == doctest::Approx(1.5 / n).epsilon(1e-12));
  CHECK(p.holder_L() <= p.declared_holder_L());
  CHECK(p.holder_L() > 0);
}

TEST_CASE("profile validation errors") {
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::block, 7, block_params()), ConfigError);
  ProfileParams asym;
  asym.block = RMat{{1.0, 2.0}, {2.5, 3.0}};
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::block, 8, asym), ConfigError);
  ProfileParams nonpos;
  nonpos.block = RMat{{1.0, 0.0}, {0.0, 3.0}};
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::block, 8, nonpos), ConfigError);
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::constant, 1, {}), ConfigError);
  ProfileParams negative_kernel;
  negative_kernel.kernel = {KernelFamily::cosine, 0.2, 0.5, 0.2};
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::smooth_kernel, 16, negative_kernel), ConfigError);
  ProfileParams sized = block_params();
  sized.block_sizes = {3, 4};
  CHECK_NOTHROW((void)build_variance_profile(ProfileKind::block, 7, sized));
  sized.block_sizes = {3, 3};
  CHECK_THROWS_AS((void)build_variance_profile(ProfileKind::block, 7, sized), ConfigError);
}

TEST_CASE("property: random admissible profiles satisfy flatness exactly") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 90);
    ProfileKind kind = static_cast<ProfileKind>(gen() % 3);
    ProfileParams params;
    params.scale = 0.5 + unit(gen);
    params.kernel.family = (gen() % 2) ? KernelFamily::cosine : KernelFamily::gaussian_band;
    params.kernel.a = 1.0 + unit(gen);
    params.kernel.b = unit(gen) * 0.9;
    params.kernel.width = 0.05 + unit(gen) * 0.4;
    const int p = 1 + static_cast<int>(gen() % 3);
    RMat b(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = i; j < p; ++j) b(i, j) = b(j, i) = 0.2 + unit(gen);
    params.block = b;
    params.block_sizes.assign(static_cast<std::size_t>(p), 0);
    int rest = n;
    for (int i = 0; i < p; ++i) {
      const int size = i + 1 == p ? rest : std::max(1, rest / (p - i));
      params.block_sizes[static_cast<std::size_t>(i)] = size;
      rest -= size;
    }
    if (kind == ProfileKind::block && (n < p || rest != 0)) kind = ProfileKind::constant;
    const auto profile = build_variance_profile(kind, n, params);
    const RMat& s = profile.s();
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((n * s).maxCoeff() <= profile.c_sup());
    CHECK((n * s).minCoeff() >= profile.c_inf());
    CHECK(profile.c_inf() > 0);
    if (kind == ProfileKind::smooth_kernel) CHECK(profile.holder_L() <= profile.declared_holder_L() * (1 + 1e-12));

    // S·x agrees between the low-rank factor (when present) and the dense matrix.
    CVec x = CVec::Random(n);
    CVec dense(n);
    dense.real() = s * x.real();
    dense.imag() = s * x.imag();
    CHECK((profile.apply(x) - dense).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("shipped profiles are numerically low rank") {
  const auto c = build_variance_profile(ProfileKind::constant, 64, {});
  const auto k = build_variance_profile(ProfileKind::smooth_kernel, 64, cosine_params());
  const auto b = build_variance_profile(ProfileKind::block, 64, block_params());
  REQUIRE(c.low_rank() != nullptr);
  REQUIRE(k.low_rank() != nullptr);
  REQUIRE(b.low_rank() != nullptr);
  CHECK(c.low_rank()->rank() == 1);
  CHECK(k.low_rank()->rank() == 3);
  CHECK(b.low_rank()->rank() == 2);
  for (const auto* p : {&c, &k, &b}) {
    const auto* f = p->low_rank();
    const RMat rebuilt = f->basis * f->values.asDiagonal() * f->basis.transpose();
    CHECK((rebuilt - p->s()).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("sampled entry variance matches the profile") {
  const auto spec = spec_for(build_variance_profile(ProfileKind::constant, 4, {}), EntryFamily::gaussian, 1);
  const int draws = 100000;
  double sum2 = 0;
  double sum4 = 0;
  for (int i = 0; i < draws; ++i) {
    const double x = sample_entry(spec, static_cast<std::uint64_t>(i), 0, 1).real();
    sum2 += x * x;
    sum4 += x * x * x * x;
  }
  const double var = sum2 / draws;
  const double stderr_ = std::sqrt((sum4 / draws - var * var) / draws);
  CHECK(std::abs(var - 0.25) < 3 * stderr_);
}

TEST_CASE("samples are exactly Hermitian and reproducible") {
  const auto profile = build_variance_profile(ProfileKind::smooth_kernel, 33, cosine_params());
  for (int beta : {1, 2}) {
    const auto spec = spec_for(profile, EntryFamily::gaussian, beta);
    const CMat h = sample_matrix<Complex>(spec, 7);
    CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(h.diagonal().imag().cwiseAbs().maxCoeff() == 0.0);
    const CMat again = sample_matrix<Complex>(spec, 7);
    CHECK((h.array() == again.array()).all());
    const CMat other = sample_matrix<Complex>(spec, 8);
    CHECK((h - other).cwiseAbs().maxCoeff() > 0);
  }
  const auto spec1 = spec_for(profile, EntryFamily::rademacher, 1);
  const RMat r = sample_matrix<Real>(spec1, 3);
  CHECK((r - r.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((sample_matrix<Complex>(spec1, 3).real() - r).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS((void)sample_matrix<Real>(spec_for(profile, EntryFamily::gaussian, 2), 0), ConfigError);
}

TEST_CASE("fourth cumulant matrices") {
  const auto profile = build_variance_profile(ProfileKind::smooth_kernel, 20, cosine_params());
  const RMat s2 = profile.s().cwiseProduct(profile.s());
  CHECK(fourth_cumulant_matrix(spec_for(profile, EntryFamily::gaussian, 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fourth_cumulant_matrix(spec_for(profile, EntryFamily::rademacher, 1)) - oracle::rademacher_kappa4() * s2)
            .cwiseAbs()
            .maxCoeff() < 1e-14 * s2.maxCoeff());
  CHECK((fourth_cumulant_matrix(spec_for(profile, EntryFamily::uniform, 1)) - oracle::uniform_kappa4() * s2)
            .cwiseAbs()
            .maxCoeff() < 1e-14 * s2.maxCoeff());
  const RMat c2 = fourth_cumulant_matrix(spec_for(profile, EntryFamily::rademacher, 2));
  // Off-diagonal: two parts of variance s/2 each.
  CHECK(c2(0, 1) == doctest::Approx(2 * oracle::rademacher_kappa4() * std::pow(profile.s()(0, 1) / 2, 2)));
  CHECK(c2(3, 3) == doctest::Approx(oracle::rademacher_kappa4() * s2(3, 3)));
}

TEST_CASE("empirical fourth moments match C4 + 3 s^2") {
  const auto profile = build_variance_profile(ProfileKind::constant, 3, {});
  for (auto family : {EntryFamily::gaussian, EntryFamily::rademacher, EntryFamily::uniform}) {
    const auto spec = spec_for(profile, family, 1, 99);
    const double expected = fourth_cumulant_matrix(spec)(0, 2) + 3 * std::pow(profile.s()(0, 2), 2);
    const int draws = 100000;
    double m4 = 0;
    double m8 = 0;
    for (int i = 0; i < draws; ++i) {
      const double x = sample_entry(spec, static_cast<std::uint64_t>(i), 0, 2).real();
      m4 += std::pow(x, 4);
      m8 += std::pow(x, 8);
    }
    m4 /= draws;
    m8 /= draws;
    const double stderr_ = std::sqrt(std::max(m8 - m4 * m4, 0.0) / draws);
    if (family == EntryFamily::rademacher)
      CHECK(m4 == doctest::Approx(expected).epsilon(1e-12));
    else
      CHECK(std::abs(m4 - expected) <= 5 * stderr_);
  }
}

TEST_CASE("complex entries have independent parts of equal variance") {
  const auto spec = spec_for(build_variance_profile(ProfileKind::constant, 2, {}), EntryFamily::uniform, 2, 5);
  const int draws = 100000;
  std::complex<double> second{0, 0};
  double re2 = 0;
  double im2 = 0;
  for (int i = 0; i < draws; ++i) {
    const auto h = sample_entry(spec, static_cast<std::uint64_t>(i), 0, 1);
    second += h * h;
    re2 += h.real() * h.real();
    im2 += h.imag() * h.imag();
  }
  const double s = 0.5;
  const double tol = 5 * s / std::sqrt(static_cast<double>(draws));
  CHECK(std::abs(second / static_cast<double>(draws)) < tol);
  CHECK(re2 / draws == doctest::Approx(s / 2).epsilon(0.02));
  CHECK(im2 / draws == doctest::Approx(s / 2).epsilon(0.02));
}

TEST_CASE("binary matrix dump round trip") {
  const auto profile = build_variance_profile(ProfileKind::constant, 5, {});
  for (int beta : {1, 2}) {
    const auto spec = spec_for(profile, EntryFamily::gaussian, beta);
    const CMat h = sample_matrix<Complex>(spec, 1);
    std::stringstream buffer;
    write_matrix_binary(buffer, h, beta);
    const std::string bytes = buffer.str();
    CHECK(bytes.size() == 16 + 25 * 8 * static_cast<std::size_t>(beta));
    CHECK(bytes.substr(0, 8) == "MESORMT1");
    CHECK(static_cast<unsigned char>(bytes[8]) == 5);
    CHECK(static_cast<unsigned char>(bytes[12]) == beta);
    const auto dump = read_matrix_binary(buffer);
    CHECK(dump.beta == beta);
    CHECK((dump.h.array() == h.array()).all());
  }
  std::stringstream bad("NOTAMATRIX......");
  CHECK_THROWS_AS((void)read_matrix_binary(bad), ConfigError);
}
