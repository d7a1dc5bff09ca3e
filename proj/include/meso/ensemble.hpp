#pragma once

#include "meso/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace meso {

enum class ProfileKind { constant, smooth_kernel, block };
enum class KernelFamily { cosine, gaussian_band };
enum class EntryFamily { gaussian, rademacher, uniform };

[[nodiscard]] std::string to_string(ProfileKind kind);
[[nodiscard]] std::string to_string(KernelFamily family);
[[nodiscard]] std::string to_string(EntryFamily family);
[[nodiscard]] ProfileKind parse_profile_kind(const std::string& name);
[[nodiscard]] KernelFamily parse_kernel_family(const std::string& name);
[[nodiscard]] EntryFamily parse_entry_family(const std::string& name);

/// Shape function φ on [0,1]², with s_jk = φ(j/n, k/n)/n.
///   cosine:        φ(x,y) = a + b cos(π(x+y))
///   gaussian_band: φ(x,y) = a + b exp(−(x−y)²/(2 width²))
struct KernelParams {
  KernelFamily family = KernelFamily::cosine;
  Real a = 1.0;
  Real b = 0.5;
  Real width = 0.2;

  [[nodiscard]] Real operator()(Real x, Real y) const;
  /// Hölder-1/2 constant L implied by the Lipschitz bound of φ on [0,1]².
  [[nodiscard]] Real declared_holder() const;
};

struct ProfileParams {
  Real scale = 1.0;              ///< constant kind: s_jk = scale/n
  KernelParams kernel;           ///< smooth-kernel kind
  RMat block;                    ///< block kind: p×p positive symmetric matrix
  std::vector<int> block_sizes;  ///< block kind: optional explicit partition of n
};

/// Size-independent description of a profile; build at any n.
struct ProfileRecipe {
  ProfileKind kind = ProfileKind::constant;
  ProfileParams params;
};

/// S ≈ basis · diag(values) · basisᵀ with orthonormal basis columns.
struct LowRankFactor {
  RMat basis;
  RVec values;

  [[nodiscard]] Eigen::Index rank() const { return values.size(); }
};

/// Matrix of entry variances with its flatness and regularity metadata.
class VarianceProfile {
 public:
  VarianceProfile() = default;

  [[nodiscard]] int n() const;
  [[nodiscard]] ProfileKind kind() const;
  [[nodiscard]] const ProfileParams& params() const;
  [[nodiscard]] ProfileRecipe recipe() const;
  [[nodiscard]] const RMat& s() const;
  [[nodiscard]] Real c_inf() const;
  [[nodiscard]] Real c_sup() const;
  /// Empirical Hölder-1/2 constant measured on a strided sample of index pairs.
  [[nodiscard]] Real holder_L() const;
  /// Bound implied by the shape parameters (smooth-kernel only, otherwise 0).
  [[nodiscard]] Real declared_holder_L() const;

  /// Spectral factor of S, or nullptr when S is not numerically low rank.
  /// Computed once on first use; thread safe.
  [[nodiscard]] const LowRankFactor* low_rank() const;

  /// S·x, through the low-rank factor when one exists.
  [[nodiscard]] CVec apply(const CVec& x) const;

  [[nodiscard]] bool valid() const { return impl_ != nullptr; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;

  friend VarianceProfile build_variance_profile(ProfileKind, int, const ProfileParams&);
};

[[nodiscard]] VarianceProfile build_variance_profile(ProfileKind kind, int n, const ProfileParams& params);
[[nodiscard]] VarianceProfile build_variance_profile(const ProfileRecipe& recipe, int n);

/// The three shipped profiles: constant, smooth-kernel 1 + ½cos(π(x+y)), block [[1, 0.6], [0.6, 1.4]].
[[nodiscard]] std::vector<ProfileRecipe> shipped_recipes();
/// Shipped recipe by kind.
[[nodiscard]] ProfileRecipe shipped_recipe(ProfileKind kind);

struct EntryLaw {
  EntryFamily family = EntryFamily::gaussian;
  int beta = 1;
};

struct EnsembleSpec {
  VarianceProfile profile;
  EntryLaw law;
  std::uint64_t base_seed = 0;
};

/// Throws ConfigError unless β ∈ {1,2} and the profile is built.
void validate(const EnsembleSpec& spec);

/// Counter-based seed for one matrix entry; independent of evaluation order.
[[nodiscard]] std::uint64_t entry_seed(std::uint64_t base_seed, std::uint64_t sample_index,
                                       std::uint64_t entry_index);

/// Entry H_jk (j ≤ k) of sample `index`.
[[nodiscard]] Complex sample_entry(const EnsembleSpec& spec, std::uint64_t index, int j, int k);

/// Sample `index` of the ensemble. Scalar = Real requires β = 1.
template <class Scalar>
[[nodiscard]] Mat<Scalar> sample_matrix(const EnsembleSpec& spec, std::uint64_t index);

extern template RMat sample_matrix<Real>(const EnsembleSpec&, std::uint64_t);
extern template CMat sample_matrix<Complex>(const EnsembleSpec&, std::uint64_t);

/// κ₄/σ⁴ of a real variable of the family scaled to variance σ².
[[nodiscard]] Real normalized_fourth_cumulant(EntryFamily family);

/// C⁽⁴⁾_jk: fourth cumulant of H_jk (β=1) or the sum over real and imaginary parts (β=2).
[[nodiscard]] RMat fourth_cumulant_matrix(const EnsembleSpec& spec);

/// Binary matrix dump: 8-byte magic, uint32 n, uint32 β, then row-major little-endian
/// float64 values (β=2 stores interleaved re/im pairs).
void write_matrix_binary(std::ostream& out, const CMat& h, int beta);
void write_matrix_binary(std::ostream& out, const RMat& h);

struct MatrixDump {
  int beta = 1;
  CMat h;
};
[[nodiscard]] MatrixDump read_matrix_binary(std::istream& in);

}  // namespace meso
