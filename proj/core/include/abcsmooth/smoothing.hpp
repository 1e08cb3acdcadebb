#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/smc.hpp"

namespace abcsmooth {

/// Per-particle auxiliary values V_n^N(x_n^i) of the forward-only smoother, stored
/// row-major as N x value_dim.
struct FosStats {
  std::size_t time = 0;
  std::size_t value_dim = 1;
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return value_dim == 0 ? 0 : values.size() / value_dim; }
  [[nodiscard]] std::span<const double> value(std::size_t i) const {
    return std::span<const double>(values).subspan(i * value_dim, value_dim);
  }
};

/// V_0^N(x_0^i) = v_0(x_0^i).
FosStats fos_init(const AdditiveFunctional& functional, const ParticleCloud& cloud0);

/// One O(N^2) step of the forward-only recursion
///
///   V_n(x_n^i) = sum_j Wbar_{n-1}^j f(x_{n-1}^j, x_n^i) [V_{n-1}(x_{n-1}^j) + v_n(x_{n-1}^j, x_n^i)]
///                / sum_j Wbar_{n-1}^j f(x_{n-1}^j, x_n^i)
///
/// with Wbar_{n-1} the normalized weights of `prev_cloud` before any resampling. Each row
/// is evaluated in log space with a max shift. When the model exposes an isotropic
/// Gaussian transition the row costs one exp per pair. Throws
/// DegenerateBackwardKernelError if a row has no mass.
FosStats fos_update(const FosStats& prev_stats, const ParticleCloud& prev_cloud,
                    const ParticleCloud& new_cloud, const HmmModel& model,
                    const AdditiveFunctional& functional);

/// sum_i Wbar_n^i V_n^N(x_n^i).
Vector fos_estimate(const FosStats& stats, const ParticleCloud& cloud);

}  // namespace abcsmooth
