#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/random.hpp"
#include "abcsmooth/smc.hpp"
#include "abcsmooth/smoothing.hpp"

namespace abcsmooth {

/// Which particle system drives a pass.
enum class SmcVariant {
  exact,  ///< bootstrap filter on the exact model, weights g(x, y)
  abc,    ///< bootstrap filter on the ABC auxiliary model, dynamic resampling
  rsmc,   ///< rejection-kernel filter on the ABC auxiliary model (indicator kernel)
};

struct ForwardPassOptions {
  SmcVariant variant = SmcVariant::exact;
  AbcKernel kernel{};
  ResamplePolicy policy = ResamplePolicy::ess_below(0.5);
  /// Enables forward-only smoothing of this functional when set.
  const AdditiveFunctional* functional = nullptr;
  /// Keep every cloud (needed for genealogy and path estimates).
  bool keep_history = false;
  /// Times at which to record the running smoothing estimate, ascending.
  std::vector<std::size_t> report_times;
};

struct ForwardPassResult {
  double log_z = 0.0;
  std::vector<ParticleCloud> history;  ///< all clouds, or just the last one
  std::optional<FosStats> fos;
  std::optional<Vector> fos_value;     ///< smoothing estimate at the final time
  std::vector<Vector> reported;        ///< estimates at ForwardPassOptions::report_times

  [[nodiscard]] const ParticleCloud& final_cloud() const { return history.back(); }
};

/// Runs a filter over y_{0:n}, optionally carrying the forward-only smoother along.
/// Throws DegenerateWeightsError when the particle system dies.
ForwardPassResult run_forward_pass(const HmmModel& model, std::span<const Vector> observations,
                                   std::size_t n_particles, const ForwardPassOptions& options,
                                   RandomStream& stream);

}  // namespace abcsmooth
