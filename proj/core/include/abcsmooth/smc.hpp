#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/random.hpp"

namespace abcsmooth {

enum class ResampleMode { every_step, ess_threshold, never };

/// When to resample before propagating. `threshold` is the fraction of N below which
/// the effective sample size triggers resampling.
struct ResamplePolicy {
  ResampleMode mode = ResampleMode::ess_threshold;
  double threshold = 0.5;

  static ResamplePolicy every_step() { return {ResampleMode::every_step, 1.0}; }
  static ResamplePolicy never() { return {ResampleMode::never, 1.0}; }
  static ResamplePolicy ess_below(double fraction);

  [[nodiscard]] bool should_resample(std::span<const double> log_weights) const;
};

/// One time slice of a particle system.
///
/// Weights are kept in log space. `log_weights` are the unnormalized weights after the
/// incremental potential has been applied; `log_potentials` hold the potentials
/// themselves (log G_n). `ancestors[i]` indexes the particle of the previous cloud that
/// particle i was propagated from (0-based; identity at time 0 and after a skipped
/// resampling). `log_step_weight_mean` is the time-n factor of the normalizing-constant
/// estimate.
struct ParticleCloud {
  std::size_t time = 0;
  std::size_t dim_x = 1;
  std::size_t dim_y = 0;
  std::vector<double> particles;
  std::vector<double> pseudo_obs;
  std::vector<double> log_weights;
  std::vector<double> log_potentials;
  std::vector<std::size_t> ancestors;
  double log_step_weight_mean = 0.0;
  bool resampled = false;

  [[nodiscard]] std::size_t size() const { return log_weights.size(); }
  [[nodiscard]] std::span<const double> particle(std::size_t i) const {
    return std::span<const double>(particles).subspan(i * dim_x, dim_x);
  }
  [[nodiscard]] std::span<double> particle(std::size_t i) {
    return std::span<double>(particles).subspan(i * dim_x, dim_x);
  }
  [[nodiscard]] std::span<const double> pseudo_observation(std::size_t i) const {
    return std::span<const double>(pseudo_obs).subspan(i * dim_y, dim_y);
  }
  [[nodiscard]] bool has_pseudo_obs() const { return !pseudo_obs.empty(); }

  /// Normalized weights, summing to one.
  [[nodiscard]] std::vector<double> normalized_weights() const;
};

/// log(sum_i exp(v_i)); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);

/// exp(v_i - log_sum_exp(v)). Throws DegenerateWeightsError if every entry is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// (sum_j Wbar_j^2)^{-1}, in [1, N]. Throws DegenerateWeightsError if all weights are zero.
double ess(std::span<const double> log_weights);

/// N i.i.d. indices with P(j) = Wbar_j.
std::vector<std::size_t> multinomial_resample(std::span<const double> log_weights,
                                              RandomStream& stream);

/// Parents chosen for the next propagation together with the normalized log weights
/// they carry into it.
struct ParentSelection {
  std::vector<std::size_t> parents;
  std::vector<double> carried_log_weights;
  bool resampled = false;
};

/// Applies `policy` to the weights of `prev`.
ParentSelection select_parents(const ParticleCloud& prev, const ResamplePolicy& policy,
                               RandomStream& stream);

/// Sets log_weights = carried + log_potentials and log_step_weight_mean = log sum of
/// those weights. Throws DegenerateWeightsError when every weight vanishes.
void apply_potentials(ParticleCloud& cloud, std::span<const double> carried_log_weights);

/// Time-0 bootstrap cloud: X_0^i ~ eta_0, weight g(x_0^i, y_0).
ParticleCloud smc_init(const HmmModel& model, std::span<const double> y0, std::size_t n_particles,
                       RandomStream& stream);

/// One bootstrap step of the exact model: resample per `policy`, propagate through the
/// transition, weight by g(x_n^i, y_n). Requires an observation density.
ParticleCloud smc_step(const ParticleCloud& prev, const HmmModel& model,
                       std::span<const double> y_n, const ResamplePolicy& policy,
                       RandomStream& stream);

/// log Z_p = sum_n log_step_weight_means[n]. `degenerate` is set when any factor is zero.
struct NormalizingConstant {
  double log_value = 0.0;
  bool degenerate = false;
};
NormalizingConstant normalizing_constant(std::span<const double> log_step_weight_means);
NormalizingConstant normalizing_constant(std::span<const ParticleCloud> history);

/// Ancestor arrays of a full run and the backward ancestry b_{0:n}^i they imply.
class Genealogy {
 public:
  /// `history` must hold consecutive clouds for times 0..n.
  explicit Genealogy(std::span<const ParticleCloud> history);

  [[nodiscard]] std::size_t horizon() const { return ancestors_.size(); }
  [[nodiscard]] std::size_t size() const { return n_particles_; }

  /// b_{0:n}^i: index of the time-p ancestor of terminal particle i, with b_n^i = i.
  [[nodiscard]] std::vector<std::size_t> lineage(std::size_t i) const;

 private:
  std::size_t n_particles_ = 0;
  std::vector<std::vector<std::size_t>> ancestors_;  // ancestors_[n-1] = a_{n-1}
};

/// States x_{0:n}^{b^i} along the ancestral line of terminal particle i.
std::vector<Vector> ancestral_path(std::span<const ParticleCloud> history, std::size_t i);

/// sum_i Wbar_n^i V_n(ancestral path of i): the path-space estimate.
Vector path_estimate(std::span<const ParticleCloud> history, const AdditiveFunctional& functional);

/// Plain-text records `i x_1 .. x_d logW ancestor`, one line per particle.
void dump_cloud(std::ostream& os, const ParticleCloud& cloud);

}  // namespace abcsmooth
