#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "abcsmooth/model.hpp"
#include "abcsmooth/random.hpp"
#include "abcsmooth/smc.hpp"

namespace abcsmooth {

enum class KernelShape { indicator_l1, gaussian };

/// The ABC potential phi((u - y) / epsilon).
///
/// `indicator_l1` is 1{|u - y|_1 < epsilon}; `gaussian` is the N(y, epsilon^2 I) density
/// at u. With `normalized` set the potential integrates to one in u; the indicator is
/// unnormalized by default, which only shifts log Z by a constant.
struct AbcKernel {
  double epsilon = 1.0;
  KernelShape shape = KernelShape::indicator_l1;
  bool normalized = false;

  static AbcKernel indicator(double epsilon, bool normalized = false);
  static AbcKernel gaussian(double epsilon);

  [[nodiscard]] double log_weight(std::span<const double> u, std::span<const double> y) const;
};

double kernel_weight(const AbcKernel& kernel, std::span<const double> u, std::span<const double> y);

/// Time-0 ABC cloud: X_0^i ~ eta_0, U_0^i ~ g(X_0^i, .), weight phi((U_0^i - y_0)/eps).
ParticleCloud abc_smc_init(const HmmModel& model, std::span<const double> y0,
                           std::size_t n_particles, const AbcKernel& kernel, RandomStream& stream);

/// ABC bootstrap step: resample per `policy`, propagate, draw a pseudo-observation and
/// weight by the kernel. Never touches the observation density.
ParticleCloud abc_smc_step(const ParticleCloud& prev, const HmmModel& model,
                           std::span<const double> y_n, const AbcKernel& kernel,
                           const ResamplePolicy& policy, RandomStream& stream);

/// Rejection-kernel step for the indicator potential. Particles accepted at time n-1
/// keep their own parent; each rejected particle takes a parent drawn uniformly from the
/// accepted ones. Then every particle is propagated and given a fresh pseudo-observation.
/// Throws DegenerateWeightsError (time n-1) when nothing was accepted.
ParticleCloud rsmc_step(const ParticleCloud& prev, const HmmModel& model,
                        std::span<const double> y_n, const AbcKernel& kernel,
                        RandomStream& stream);

/// Which sampler a calibration trial runs.
enum class AbcSampler { smc, rsmc };

struct CalibrationTrial {
  double epsilon = 0.0;
  std::size_t trial = 0;
  bool success = false;
  std::optional<std::size_t> failed_time;
};

/// Candidate tolerances (strictly decreasing) and how each is tried.
struct EpsilonCalibration {
  std::vector<double> grid;
  std::size_t trials = 3;
  KernelShape shape = KernelShape::indicator_l1;
  AbcSampler sampler = AbcSampler::smc;
  ResamplePolicy policy = ResamplePolicy::ess_below(0.5);

  /// {2^hi, 2^(hi-1), ..., 2^lo}.
  static std::vector<double> powers_of_two(int hi, int lo);
};

struct CalibrationResult {
  double epsilon = 0.0;
  std::vector<CalibrationTrial> log;
};

/// Walks the grid from the largest tolerance down and returns the smallest one for
/// which every trial filter survives all time steps. Trial t uses the same random
/// stream for every tolerance. Throws CalibrationError if the largest value fails.
CalibrationResult calibrate_epsilon(const HmmModel& model, std::span<const Vector> observations,
                                    std::size_t n_particles, const EpsilonCalibration& grid,
                                    RandomStream& stream);

/// Records `epsilon,trial,success,first_failing_time` (header included).
void write_calibration_log(std::ostream& os, std::span<const CalibrationTrial> log);

/// The auxiliary model whose observation density is g convolved with the kernel.
/// Needs additive isotropic Gaussian observation noise in `base`; the indicator kernel
/// is supported for one-dimensional observations.
std::shared_ptr<HmmModel> make_auxiliary_model(std::shared_ptr<const HmmModel> base,
                                               const AbcKernel& kernel);

/// For the Gaussian kernel the auxiliary model of a linear-Gaussian model is again
/// linear-Gaussian with observation variance r + epsilon^2.
LinearGaussianParams inflate_observation_noise(const LinearGaussianParams& params,
                                               const AbcKernel& kernel);

}  // namespace abcsmooth
