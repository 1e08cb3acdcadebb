#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/random.hpp"
#include "abcsmooth/smc.hpp"

namespace abcsmooth {

/// Independent priors on each component of theta.
class PriorSpec {
 public:
  using LogDensity = std::function<double(double)>;

  explicit PriorSpec(std::vector<LogDensity> components);

  /// Improper flat prior on the positive half-line for each of `k` components.
  static PriorSpec flat(std::size_t k);
  /// Inverse-gamma(shape, scale) on each of `k` components.
  static PriorSpec inverse_gamma(std::size_t k, double shape, double scale);

  /// Sum of component log densities; -inf outside the support.
  [[nodiscard]] double log_density(const ThetaVector& theta) const;
  [[nodiscard]] std::size_t size() const { return components_.size(); }

 private:
  std::vector<LogDensity> components_;
};

/// Gaussian random walk with per-component scales, on log theta when `log_transform`
/// is set and on theta itself otherwise. Symmetric in the space it acts on.
struct ProposalSpec {
  std::vector<double> scales;
  bool log_transform = true;

  [[nodiscard]] ThetaVector propose(const ThetaVector& current, RandomStream& stream) const;
  /// log q(proposed -> current) - log q(current -> proposed), measured in theta space.
  [[nodiscard]] double log_correction(const ThetaVector& current,
                                      const ThetaVector& proposed) const;
};

/// log of 1 ^ [Z'/Z pi(theta')q(theta', theta) / (pi(theta)q(theta, theta'))].
double log_acceptance_ratio(double logz_prop, double logz_cur, const ThetaVector& theta_prop,
                            const ThetaVector& theta_cur, const PriorSpec& prior,
                            const ProposalSpec& proposal);
double acceptance_ratio(double logz_prop, double logz_cur, const ThetaVector& theta_prop,
                        const ThetaVector& theta_cur, const PriorSpec& prior,
                        const ProposalSpec& proposal);

/// Builds the model for a parameter value; may throw InvalidModelError.
using ModelFamily = std::function<std::shared_ptr<const HmmModel>(const ThetaVector&)>;

enum class PmmhMode { exact, abc };

struct PmmhOptions {
  PmmhMode mode = PmmhMode::exact;
  AbcKernel kernel{};
  ResamplePolicy policy = ResamplePolicy::ess_below(0.5);
  std::size_t n_particles = 100;
  /// Functional to track; when null only theta and log Z are recorded.
  std::shared_ptr<const AdditiveFunctional> functional;
  /// Run the forward-only smoother inside every SMC pass.
  bool use_fos = true;
};

/// One iteration of the chain.
struct PmmhChainState {
  ThetaVector theta;
  double log_z = 0.0;
  std::size_t selected_index = 0;
  std::vector<Vector> selected_path;
  std::optional<Vector> fos_value;   ///< smoothing estimate of this iteration's SMC pass
  std::optional<Vector> path_value;  ///< functional on the selected path
  bool accepted = false;
  bool proposal_degenerate = false;  ///< the proposal's SMC pass died and was rejected
};

/// Particle marginal Metropolis-Hastings over static parameters.
class PmmhSampler {
 public:
  PmmhSampler(ModelFamily family, PriorSpec prior, ProposalSpec proposal,
              std::vector<Vector> observations, PmmhOptions options);

  /// Runs the first SMC pass at theta0. Throws DegenerateWeightsError if it dies.
  [[nodiscard]] PmmhChainState init(const ThetaVector& theta0, RandomStream& stream) const;
  [[nodiscard]] PmmhChainState step(const PmmhChainState& state, RandomStream& stream) const;
  /// init followed by `iterations - 1` steps.
  [[nodiscard]] std::vector<PmmhChainState> run(const ThetaVector& theta0, std::size_t iterations,
                                                RandomStream& stream) const;

  [[nodiscard]] const PmmhOptions& options() const { return options_; }

 private:
  // Runs one SMC pass and fills everything but `accepted`.
  PmmhChainState evaluate(const ThetaVector& theta, RandomStream& stream) const;

  ModelFamily family_;
  PriorSpec prior_;
  ProposalSpec proposal_;
  std::vector<Vector> observations_;
  PmmhOptions options_;
};

PmmhChainState pmmh_init(const PmmhSampler& sampler, const ThetaVector& theta0,
                         RandomStream& stream);
PmmhChainState pmmh_step(const PmmhSampler& sampler, const PmmhChainState& state,
                         RandomStream& stream);

/// Mean of the per-iteration smoothing estimates after `burn_in`, rejected iterations
/// included with their carried values.
Vector pmmh_fos_estimate(std::span<const PmmhChainState> chain, std::size_t burn_in);
/// Same average over the functional evaluated on each iteration's selected path.
Vector pmmh_path_estimate(std::span<const PmmhChainState> chain, std::size_t burn_in);
/// Posterior mean of theta after `burn_in`.
Vector pmmh_theta_mean(std::span<const PmmhChainState> chain, std::size_t burn_in);
double acceptance_rate(std::span<const PmmhChainState> chain);

/// Records `iteration,<theta names>,log_z,accepted,fos` with a header line.
void write_chain(std::ostream& os, std::span<const PmmhChainState> chain);

}  // namespace abcsmooth
