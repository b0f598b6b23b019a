#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "a2d/env.hpp"
#include "a2d/policy.hpp"
#include "a2d/rng.hpp"

namespace a2d::fixtures {

inline policy::PolicyShape small_shape() { return {6, 12, vocab::kSize}; }

/// Small policy with weights large enough that the softmax is far from flat.
inline policy::PolicyParams small_policy(std::uint64_t seed = 1, double scale = 0.4) {
  return policy::init_params(seed, small_shape(), scale);
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f at coordinate i.
inline double central_diff(policy::PolicyParams& p, std::size_t i, const std::function<double()>& f, double h = 1e-5) {
  const double x = p.values[i];
  p.values[i] = x + h;
  const double up = f();
  p.values[i] = x - h;
  const double down = f();
  p.values[i] = x;
  return (up - down) / (2.0 * h);
}

/// Indices of `count` coordinates, half drawn from the nonzero entries of
/// `grad` so the check does not pass on structural zeros alone.
inline std::vector<std::size_t> probe_coords(std::span<const double> grad, std::size_t count, Rng& rng) {
  std::vector<std::size_t> nz;
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (grad[i] != 0.0) nz.push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) {
    if (k % 2 == 0 && !nz.empty()) out.push_back(nz[rng.below(nz.size())]);
    else out.push_back(rng.below(grad.size()));
  }
  return out;
}

inline env::TaskInstance task_of(std::vector<env::Step> chain, int modulus = 7, std::uint64_t id = 1) {
  return env::make_task(id, std::move(chain), modulus);
}

}  // namespace a2d::fixtures
