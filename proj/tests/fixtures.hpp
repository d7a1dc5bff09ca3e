#pragma once

#include "meso/ensemble.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fixture {

inline meso::VarianceProfile profile(meso::ProfileKind kind, int n) {
  return meso::build_variance_profile(meso::shipped_recipe(kind), n);
}

inline std::vector<meso::VarianceProfile> shipped(int n) {
  std::vector<meso::VarianceProfile> out;
  for (const auto& r : meso::shipped_recipes()) out.push_back(meso::build_variance_profile(r, n));
  return out;
}

/// Hand-rolled generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  int index(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
  bool coin() { return uniform(0, 1) < 0.5; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fixture
