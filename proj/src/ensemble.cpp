#include "meso/ensemble.hpp"

#include "meso/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <ostream>

namespace meso {

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::constant: return "constant";
    case ProfileKind::smooth_kernel: return "smooth-kernel";
    case ProfileKind::block: return "block";
  }
  return "unknown";
}

std::string to_string(KernelFamily family) {
  return family == KernelFamily::cosine ? "cosine" : "gaussian_band";
}

std::string to_string(EntryFamily family) {
  switch (family) {
    case EntryFamily::gaussian: return "gaussian";
    case EntryFamily::rademacher: return "rademacher";
    case EntryFamily::uniform: return "uniform";
  }
  return "unknown";
}

ProfileKind parse_profile_kind(const std::string& name) {
  if (name == "constant") return ProfileKind::constant;
  if (name == "smooth-kernel" || name == "smooth_kernel") return ProfileKind::smooth_kernel;
  if (name == "block") return ProfileKind::block;
  throw ConfigError("unknown profile kind '" + name + "'");
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "cosine") return KernelFamily::cosine;
  if (name == "gaussian_band" || name == "gaussian-band") return KernelFamily::gaussian_band;
  throw ConfigError("unknown kernel family '" + name + "'");
}

EntryFamily parse_entry_family(const std::string& name) {
  if (name == "gaussian") return EntryFamily::gaussian;
  if (name == "rademacher") return EntryFamily::rademacher;
  if (name == "uniform") return EntryFamily::uniform;
  throw ConfigError("unknown entry family '" + name + "'");
}

Real KernelParams::operator()(Real x, Real y) const {
  if (family == KernelFamily::cosine) return a + b * std::cos(kPi * (x + y));
  const Real t = x - y;
  return a + b * std::exp(-t * t / (2 * width * width));
}

Real KernelParams::declared_holder() const {
  // Lipschitz constant in the metric |dx|+|dy|, then d ≤ √2·√d on d ≤ 2.
  const Real lipschitz = family == KernelFamily::cosine
                             ? std::abs(b) * kPi
                             : std::abs(b) / (width * std::sqrt(std::exp(1.0)));
  return std::sqrt(2.0) * lipschitz;
}

struct VarianceProfile::Impl {
  int n = 0;
  ProfileKind kind = ProfileKind::constant;
  ProfileParams params;
  RMat s;
  Real c_inf = 0;
  Real c_sup = 0;
  Real holder = 0;
  Real declared_holder = 0;

  mutable std::once_flag factor_once;
  mutable std::unique_ptr<LowRankFactor> factor;

  void build_factor() const;
};

namespace {

std::vector<int> block_partition(const ProfileParams& params, int n) {
  const auto p = static_cast<int>(params.block.rows());
  std::vector<int> sizes = params.block_sizes;
  if (sizes.empty()) {
    if (n % p != 0) throw ConfigError("block sizes must partition n");
    sizes.assign(static_cast<std::size_t>(p), n / p);
  }
  if (static_cast<int>(sizes.size()) != p) throw ConfigError("block sizes must partition n");
  int total = 0;
  for (int size : sizes) {
    if (size < 1) throw ConfigError("block sizes must partition n");
    total += size;
  }
  if (total != n) throw ConfigError("block sizes must partition n");
  return sizes;
}

Real empirical_holder(const RMat& s) {
  const auto n = static_cast<int>(s.rows());
  const int stride = std::max(1, n / 48);
  std::vector<int> offsets{0};
  for (int d = 1; d < n; d *= 2) offsets.push_back(d);
  Real best = 0;
  for (int j = 0; j < n; j += stride) {
    for (int k = 0; k < n; k += stride) {
      for (int dj : offsets) {
        if (j + dj >= n) break;
        for (int dk : offsets) {
          if (k + dk >= n) break;
          if (dj == 0 && dk == 0) continue;
          const Real dist = static_cast<Real>(dj + dk) / n;
          const Real diff = n * std::abs(s(j, k) - s(j + dj, k + dk));
          best = std::max(best, diff / std::sqrt(dist));
        }
      }
    }
  }
  return best;
}

constexpr Real kFactorTruncation = 1e-12;
constexpr Real kFactorReconstruction = 1e-13;

}  // namespace

void VarianceProfile::Impl::build_factor() const {
  const Real s_max = s.maxCoeff();
  auto accept = [&](RMat basis, RVec values) {
    const Real cap = std::max<Real>(8, n / 8.0);
    if (values.size() == 0 || static_cast<Real>(values.size()) > cap) return;
    const RMat rebuilt = basis * values.asDiagonal() * basis.transpose();
    if ((rebuilt - s).cwiseAbs().maxCoeff() > kFactorReconstruction * s_max) return;
    factor = std::make_unique<LowRankFactor>(LowRankFactor{std::move(basis), std::move(values)});
  };

  if (kind == ProfileKind::constant) {
    accept(RMat::Constant(n, 1, 1.0 / std::sqrt(static_cast<Real>(n))),
           RVec::Constant(1, params.scale));
    return;
  }

  RMat basis;
  RMat middle;
  if (kind == ProfileKind::block) {
    const auto sizes = block_partition(params, n);
    const auto p = static_cast<Eigen::Index>(sizes.size());
    basis = RMat::Zero(n, p);
    RVec root(p);
    int offset = 0;
    for (Eigen::Index b = 0; b < p; ++b) {
      const int size = sizes[static_cast<std::size_t>(b)];
      root(b) = std::sqrt(static_cast<Real>(size));
      basis.block(offset, b, size, 1).setConstant(1.0 / root(b));
      offset += size;
    }
    middle = root.asDiagonal() * params.block * root.asDiagonal() / static_cast<Real>(n);
  } else {
    middle = s;
  }

  Eigen::SelfAdjointEigenSolver<RMat> eig(middle);
  const RVec& lambda = eig.eigenvalues();
  const Real top = lambda.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (std::abs(lambda(i)) > kFactorTruncation * top) keep.push_back(i);
  RMat vectors(middle.rows(), static_cast<Eigen::Index>(keep.size()));
  RVec values(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    vectors.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]);
    values(static_cast<Eigen::Index>(c)) = lambda(keep[c]);
  }
  accept(kind == ProfileKind::block ? RMat(basis * vectors) : vectors, values);
}

VarianceProfile build_variance_profile(ProfileKind kind, int n, const ProfileParams& params) {
  if (n < 2) throw ConfigError("profile dimension n must be at least 2");
  auto impl = std::make_shared<VarianceProfile::Impl>();
  impl->n = n;
  impl->kind = kind;
  impl->params = params;
  const auto nn = static_cast<Real>(n);

  switch (kind) {
    case ProfileKind::constant:
      if (!(params.scale > 0)) throw ConfigError("constant profile scale must be positive");
      impl->s = RMat::Constant(n, n, params.scale / nn);
      break;
    case ProfileKind::smooth_kernel: {
      const auto& phi = params.kernel;
      if (phi.family == KernelFamily::gaussian_band && !(phi.width > 0))
        throw ConfigError("gaussian_band kernel width must be positive");
      impl->s.resize(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
          const Real value = phi((j + 1) / nn, (k + 1) / nn) / nn;
          impl->s(j, k) = value;
          impl->s(k, j) = value;
        }
      impl->declared_holder = phi.declared_holder();
      break;
    }
    case ProfileKind::block: {
      const RMat& b = params.block;
      if (b.rows() == 0 || b.rows() != b.cols()) throw ConfigError("block matrix must be square");
      if ((b - b.transpose()).cwiseAbs().maxCoeff() > 0) throw ConfigError("block matrix must be symmetric");
      const auto sizes = block_partition(params, n);
      std::vector<int> owner;
      owner.reserve(static_cast<std::size_t>(n));
      for (std::size_t blk = 0; blk < sizes.size(); ++blk) owner.insert(owner.end(), static_cast<std::size_t>(sizes[blk]), static_cast<int>(blk));
      impl->s.resize(n, n);
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) impl->s(j, k) = b(owner[static_cast<std::size_t>(j)], owner[static_cast<std::size_t>(k)]) / nn;
      break;
    }
  }

  if (!(impl->s.minCoeff() > 0)) throw ConfigError("profile entries must be positive");
  impl->c_inf = nn * impl->s.minCoeff();
  impl->c_sup = nn * impl->s.maxCoeff();
  impl->holder = empirical_holder(impl->s);
  if (kind == ProfileKind::smooth_kernel && impl->holder > impl->declared_holder * (1 + 1e-12))
    throw ConfigError("smooth-kernel profile violates its declared Hölder constant");

  VarianceProfile profile;
  profile.impl_ = std::move(impl);
  return profile;
}

VarianceProfile build_variance_profile(const ProfileRecipe& recipe, int n) {
  return build_variance_profile(recipe.kind, n, recipe.params);
}

ProfileRecipe shipped_recipe(ProfileKind kind) {
  ProfileRecipe recipe;
  recipe.kind = kind;
  if (kind == ProfileKind::smooth_kernel) recipe.params.kernel = {KernelFamily::cosine, 1.0, 0.5, 0.2};
  if (kind == ProfileKind::block) recipe.params.block = RMat{{1.0, 0.6}, {0.6, 1.4}};
  return recipe;
}

std::vector<ProfileRecipe> shipped_recipes() {
  return {shipped_recipe(ProfileKind::constant), shipped_recipe(ProfileKind::smooth_kernel),
          shipped_recipe(ProfileKind::block)};
}

int VarianceProfile::n() const { return impl_->n; }
ProfileKind VarianceProfile::kind() const { return impl_->kind; }
const ProfileParams& VarianceProfile::params() const { return impl_->params; }
ProfileRecipe VarianceProfile::recipe() const { return {impl_->kind, impl_->params}; }
const RMat& VarianceProfile::s() const { return impl_->s; }
Real VarianceProfile::c_inf() const { return impl_->c_inf; }
Real VarianceProfile::c_sup() const { return impl_->c_sup; }
Real VarianceProfile::holder_L() const { return impl_->holder; }
Real VarianceProfile::declared_holder_L() const { return impl_->declared_holder; }

const LowRankFactor* VarianceProfile::low_rank() const {
  std::call_once(impl_->factor_once, [this] { impl_->build_factor(); });
  return impl_->factor.get();
}

CVec VarianceProfile::apply(const CVec& x) const {
  if (const auto* f = low_rank()) {
    const RMat& u = f->basis;
    CVec coeff(f->rank());
    coeff.real() = u.transpose() * x.real();
    coeff.imag() = u.transpose() * x.imag();
    coeff.array() *= f->values.array().cast<Complex>();
    CVec out(x.size());
    out.real() = u * coeff.real();
    out.imag() = u * coeff.imag();
    return out;
  }
  CVec out(x.size());
  out.real() = impl_->s * x.real();
  out.imag() = impl_->s * x.imag();
  return out;
}

void validate(const EnsembleSpec& spec) {
  if (!spec.profile.valid()) throw ConfigError("ensemble spec has no profile");
  if (spec.law.beta != 1 && spec.law.beta != 2) throw ConfigError("symmetry class beta must be 1 or 2");
}

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// SplitMix64 stream keyed by an entry seed.
class EntryStream {
 public:
  explicit EntryStream(std::uint64_t seed) : state_(seed) {}
  std::uint64_t bits() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_);
  }
  /// Uniform on [0, 1).
  Real uniform() { return static_cast<Real>(bits() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Two independent unit-variance draws of the family.
std::array<Real, 2> unit_pair(EntryFamily family, EntryStream& rng) {
  switch (family) {
    case EntryFamily::gaussian: {
      const Real u1 = 1.0 - rng.uniform();
      const Real u2 = rng.uniform();
      const Real radius = std::sqrt(-2.0 * std::log(u1));
      return {radius * std::cos(2 * kPi * u2), radius * std::sin(2 * kPi * u2)};
    }
    case EntryFamily::rademacher: {
      const std::uint64_t b = rng.bits();
      return {(b & 1ULL) ? 1.0 : -1.0, (b & 2ULL) ? 1.0 : -1.0};
    }
    case EntryFamily::uniform: {
      const Real root3 = std::sqrt(3.0);
      return {(2 * rng.uniform() - 1) * root3, (2 * rng.uniform() - 1) * root3};
    }
  }
  return {0, 0};
}

}  // namespace

std::uint64_t entry_seed(std::uint64_t base_seed, std::uint64_t sample_index, std::uint64_t entry_index) {
  return splitmix64(splitmix64(splitmix64(base_seed) ^ sample_index) ^ entry_index);
}

Complex sample_entry(const EnsembleSpec& spec, std::uint64_t index, int j, int k) {
  if (j > k) std::swap(j, k);
  const auto n = static_cast<std::uint64_t>(spec.profile.n());
  EntryStream rng(entry_seed(spec.base_seed, index, static_cast<std::uint64_t>(j) * n + static_cast<std::uint64_t>(k)));
  const auto draw = unit_pair(spec.law.family, rng);
  const Real sigma = std::sqrt(spec.profile.s()(j, k));
  if (spec.law.beta == 1 || j == k) return {sigma * draw[0], 0.0};
  const Real half = sigma / std::sqrt(2.0);
  return {half * draw[0], half * draw[1]};
}

template <class Scalar>
Mat<Scalar> sample_matrix(const EnsembleSpec& spec, std::uint64_t index) {
  validate(spec);
  constexpr bool is_real = std::is_same_v<Scalar, Real>;
  if (is_real && spec.law.beta != 1) throw ConfigError("a real sample requires beta = 1");
  const int n = spec.profile.n();
  Mat<Scalar> h(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = j; k < n; ++k) {
      const Complex value = sample_entry(spec, index, j, k);
      if constexpr (is_real) {
        h(j, k) = value.real();
        h(k, j) = value.real();
      } else {
        h(j, k) = value;
        h(k, j) = std::conj(value);
      }
    }
  }
  return h;
}

template RMat sample_matrix<Real>(const EnsembleSpec&, std::uint64_t);
template CMat sample_matrix<Complex>(const EnsembleSpec&, std::uint64_t);

Real normalized_fourth_cumulant(EntryFamily family) {
  switch (family) {
    case EntryFamily::gaussian: return 0.0;
    case EntryFamily::rademacher: return -2.0;
    case EntryFamily::uniform: return -6.0 / 5.0;
  }
  return 0.0;
}

RMat fourth_cumulant_matrix(const EnsembleSpec& spec) {
  validate(spec);
  const Real kappa = normalized_fourth_cumulant(spec.law.family);
  const RMat& s = spec.profile.s();
  RMat c4 = kappa * s.cwiseProduct(s);
  if (spec.law.beta == 2) {
    // Real and imaginary parts each carry variance s/2: 2·κ·(s/2)² = κ s²/2.
    const RVec diagonal = c4.diagonal();
    c4 *= 0.5;
    c4.diagonal() = diagonal;
  }
  return c4;
}

namespace {

constexpr std::array<char, 8> kMagic{'M', 'E', 'S', 'O', 'R', 'M', 'T', '1'};

template <class T>
void put_le(std::ostream& out, T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw ConfigError("truncated matrix dump");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

void put_header(std::ostream& out, Eigen::Index n, int beta) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(beta));
}

}  // namespace

void write_matrix_binary(std::ostream& out, const CMat& h, int beta) {
  if (beta == 1) {
    write_matrix_binary(out, RMat(h.real()));
    return;
  }
  put_header(out, h.rows(), 2);
  for (Eigen::Index j = 0; j < h.rows(); ++j)
    for (Eigen::Index k = 0; k < h.cols(); ++k) {
      put_le<double>(out, h(j, k).real());
      put_le<double>(out, h(j, k).imag());
    }
}

void write_matrix_binary(std::ostream& out, const RMat& h) {
  put_header(out, h.rows(), 1);
  for (Eigen::Index j = 0; j < h.rows(); ++j)
    for (Eigen::Index k = 0; k < h.cols(); ++k) put_le<double>(out, h(j, k));
}

MatrixDump read_matrix_binary(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ConfigError("not a matrix dump (bad magic)");
  const auto n = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
  const auto beta = static_cast<int>(get_le<std::uint32_t>(in));
  if (beta != 1 && beta != 2) throw ConfigError("matrix dump has invalid beta");
  MatrixDump dump;
  dump.beta = beta;
  dump.h.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      const double re = get_le<double>(in);
      const double im = beta == 2 ? get_le<double>(in) : 0.0;
      dump.h(j, k) = {re, im};
    }
  return dump;
}

}  // namespace meso
