#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/random.hpp"

namespace abcsmooth {

/// Exact filtering and smoothing moments of a linear-Gaussian model. Means and
/// variances are indexed [time][component]; components are independent.
struct KalmanResult {
  std::vector<Vector> filtered_means;
  std::vector<Vector> filtered_variances;
  std::vector<Vector> smoothed_means;
  std::vector<Vector> smoothed_variances;
  double log_likelihood = 0.0;
};

/// Kalman filter plus Rauch-Tung-Striebel smoother. Accepts q >= 0 and p0 >= 0 so
/// noise-free chains can be checked; r must be positive. Throws InvalidModelError.
KalmanResult kalman_rts(const LinearGaussianParams& params, std::span<const Vector> observations);
KalmanResult kalman_rts(const LinearGaussianModel& model, std::span<const Vector> observations);

/// Uniform lattice on [lower, upper].
struct GridSpec {
  double lower = -10.0;
  double upper = 10.0;
  std::size_t points = 2001;
};

struct GridOracleOptions {
  /// Recompute on a lattice with twice the resolution and require agreement.
  bool check_refinement = true;
  double refinement_tolerance = 1e-4;
};

struct GridOracleResult {
  Vector expectation;              ///< E[V_n | y_{0:n}]
  std::vector<double> smoothed_means;  ///< E[X_p | y_{0:n}] for each p
  double log_likelihood = 0.0;     ///< log p(y_{0:n})
  double refinement_change = 0.0;  ///< max abs change under refinement (0 if unchecked)
  GridSpec grid;                   ///< lattice the returned values came from
};

/// Brute-force smoothing by trapezoidal quadrature of the joint smoothing density
/// on a 1-d lattice, organised as a forward-backward sweep. Requires dim_x = dim_y = 1
/// and an observation density. Throws PreconditionError or AccuracyError.
GridOracleResult grid_oracle(const HmmModel& model, std::span<const Vector> observations,
                             const AdditiveFunctional& functional, const GridSpec& grid,
                             const GridOracleOptions& options = {});

/// Lattice spanning +-8 filtering standard deviations around the filtering means of a
/// pilot bootstrap filter, taking the union over time.
GridSpec auto_grid(const HmmModel& model, std::span<const Vector> observations,
                   RandomStream& stream, std::size_t points = 2001,
                   std::size_t pilot_particles = 2000);

}  // namespace abcsmooth
