#include "abcsmooth/pmmh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "abcsmooth/errors.hpp"
#include "abcsmooth/forward_pass.hpp"

namespace abcsmooth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t sample_index(std::span<const double> log_weights, RandomStream& stream) {
  const auto w = normalize_log_weights(log_weights);
  double u = stream.uniform();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  // Rounding left a sliver of mass at the end; take the last live particle.
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) return i;
  }
  return w.size() - 1;
}

}  // namespace

PriorSpec::PriorSpec(std::vector<LogDensity> components) : components_(std::move(components)) {
  for (const auto& c : components_) {
    if (!c) throw PreconditionError("prior component without a density");
  }
}

PriorSpec PriorSpec::flat(std::size_t k) {
  return PriorSpec(std::vector<LogDensity>(k, [](double x) { return x > 0.0 ? 0.0 : kNegInf; }));
}

PriorSpec PriorSpec::inverse_gamma(std::size_t k, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw PreconditionError("inverse-gamma hyperparameters must be positive");
  }
  const double log_norm = shape * std::log(scale) - std::lgamma(shape);
  return PriorSpec(std::vector<LogDensity>(k, [=](double x) {
    if (!(x > 0.0)) return kNegInf;
    return log_norm - (shape + 1.0) * std::log(x) - scale / x;
  }));
}

double PriorSpec::log_density(const ThetaVector& theta) const {
  if (theta.size() != components_.size()) throw PreconditionError("prior/theta size mismatch");
  double out = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double v = components_[k](theta[k]);
    if (v == kNegInf) return kNegInf;
    out += v;
  }
  return out;
}

ThetaVector ProposalSpec::propose(const ThetaVector& current, RandomStream& stream) const {
  if (scales.size() != current.size()) throw PreconditionError("proposal/theta size mismatch");
  ThetaVector out = current;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (scales[k] < 0.0) throw PreconditionError("proposal scales must be non-negative");
    if (scales[k] == 0.0) continue;
    const double z = scales[k] * stream.gaussian();
    out[k] = log_transform ? current[k] * std::exp(z) : current[k] + z;
  }
  return out;
}

double ProposalSpec::log_correction(const ThetaVector& current, const ThetaVector& proposed) const {
  if (!log_transform) return 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < current.size(); ++k) {
    if (k < scales.size() && scales[k] == 0.0) continue;
    out += std::log(proposed[k]) - std::log(current[k]);
  }
  return out;
}

double log_acceptance_ratio(double logz_prop, double logz_cur, const ThetaVector& theta_prop,
                            const ThetaVector& theta_cur, const PriorSpec& prior,
                            const ProposalSpec& proposal) {
  if (!std::isfinite(logz_cur)) throw PreconditionError("current log Z must be finite");
  if (logz_prop == kNegInf || std::isnan(logz_prop)) return kNegInf;
  const double prior_prop = prior.log_density(theta_prop);
  if (prior_prop == kNegInf) return kNegInf;
  const double prior_cur = prior.log_density(theta_cur);
  const double log_r = (logz_prop - logz_cur) + (prior_prop - prior_cur) +
                       proposal.log_correction(theta_cur, theta_prop);
  return std::min(0.0, log_r);
}

double acceptance_ratio(double logz_prop, double logz_cur, const ThetaVector& theta_prop,
                        const ThetaVector& theta_cur, const PriorSpec& prior,
                        const ProposalSpec& proposal) {
  return std::exp(
      log_acceptance_ratio(logz_prop, logz_cur, theta_prop, theta_cur, prior, proposal));
}

PmmhSampler::PmmhSampler(ModelFamily family, PriorSpec prior, ProposalSpec proposal,
                         std::vector<Vector> observations, PmmhOptions options)
    : family_(std::move(family)),
      prior_(std::move(prior)),
      proposal_(std::move(proposal)),
      observations_(std::move(observations)),
      options_(std::move(options)) {
  if (!family_) throw PreconditionError("PMMH needs a model family");
  if (observations_.empty()) throw PreconditionError("PMMH needs observations");
  if (options_.n_particles == 0) throw PreconditionError("PMMH needs at least one particle");
  if (options_.use_fos && !options_.functional) {
    throw PreconditionError("forward-only smoothing needs a functional");
  }
}

PmmhChainState PmmhSampler::evaluate(const ThetaVector& theta, RandomStream& stream) const {
  const auto model = family_(theta);
  ForwardPassOptions pass;
  pass.variant = options_.mode == PmmhMode::exact ? SmcVariant::exact : SmcVariant::abc;
  pass.kernel = options_.kernel;
  pass.policy = options_.policy;
  pass.keep_history = true;
  if (options_.use_fos) pass.functional = options_.functional.get();
  auto result = run_forward_pass(*model, observations_, options_.n_particles, pass, stream);

  PmmhChainState state;
  state.theta = theta;
  state.log_z = result.log_z;
  state.selected_index = sample_index(result.final_cloud().log_weights, stream);
  state.selected_path = ancestral_path(result.history, state.selected_index);
  state.fos_value = std::move(result.fos_value);
  if (options_.functional) state.path_value = options_.functional->on_path(state.selected_path);
  return state;
}

PmmhChainState PmmhSampler::init(const ThetaVector& theta0, RandomStream& stream) const {
  auto state = evaluate(theta0, stream);
  state.accepted = true;
  return state;
}

PmmhChainState PmmhSampler::step(const PmmhChainState& state, RandomStream& stream) const {
  const ThetaVector proposed = proposal_.propose(state.theta, stream);
  PmmhChainState rejected = state;
  rejected.accepted = false;
  rejected.proposal_degenerate = false;

  if (prior_.log_density(proposed) == kNegInf) return rejected;

  std::optional<PmmhChainState> candidate;
  try {
    candidate = evaluate(proposed, stream);
  } catch (const DegenerateWeightsError&) {
    rejected.proposal_degenerate = true;
    return rejected;
  } catch (const InvalidModelError&) {
    return rejected;
  }
  const double log_alpha = log_acceptance_ratio(candidate->log_z, state.log_z, proposed,
                                                state.theta, prior_, proposal_);
  if (std::log(stream.uniform()) < log_alpha) {
    candidate->accepted = true;
    return std::move(*candidate);
  }
  return rejected;
}

std::vector<PmmhChainState> PmmhSampler::run(const ThetaVector& theta0, std::size_t iterations,
                                             RandomStream& stream) const {
  std::vector<PmmhChainState> chain;
  if (iterations == 0) return chain;
  chain.reserve(iterations);
  chain.push_back(init(theta0, stream));
  for (std::size_t i = 1; i < iterations; ++i) chain.push_back(step(chain.back(), stream));
  return chain;
}

PmmhChainState pmmh_init(const PmmhSampler& sampler, const ThetaVector& theta0,
                         RandomStream& stream) {
  return sampler.init(theta0, stream);
}

PmmhChainState pmmh_step(const PmmhSampler& sampler, const PmmhChainState& state,
                         RandomStream& stream) {
  return sampler.step(state, stream);
}

namespace {

template <typename Get>
Vector chain_mean(std::span<const PmmhChainState> chain, std::size_t burn_in, Get get,
                  const char* what) {
  if (burn_in >= chain.size()) throw PreconditionError("burn-in must be shorter than the chain");
  Vector total;
  for (std::size_t i = burn_in; i < chain.size(); ++i) {
    const auto* v = get(chain[i]);
    if (!v) throw PreconditionError(std::string("chain iteration without a ") + what);
    if (total.empty()) total.assign(v->size(), 0.0);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += (*v)[k];
  }
  const auto m = static_cast<double>(chain.size() - burn_in);
  for (auto& v : total) v /= m;
  return total;
}

}  // namespace

Vector pmmh_fos_estimate(std::span<const PmmhChainState> chain, std::size_t burn_in) {
  return chain_mean(
      chain, burn_in,
      [](const PmmhChainState& s) { return s.fos_value ? &*s.fos_value : nullptr; },
      "smoothing estimate");
}

Vector pmmh_path_estimate(std::span<const PmmhChainState> chain, std::size_t burn_in) {
  return chain_mean(
      chain, burn_in,
      [](const PmmhChainState& s) { return s.path_value ? &*s.path_value : nullptr; },
      "path value");
}

Vector pmmh_theta_mean(std::span<const PmmhChainState> chain, std::size_t burn_in) {
  if (burn_in >= chain.size()) throw PreconditionError("burn-in must be shorter than the chain");
  Vector total(chain.front().theta.size(), 0.0);
  for (std::size_t i = burn_in; i < chain.size(); ++i) {
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += chain[i].theta[k];
  }
  for (auto& v : total) v /= static_cast<double>(chain.size() - burn_in);
  return total;
}

double acceptance_rate(std::span<const PmmhChainState> chain) {
  if (chain.size() < 2) return 0.0;
  std::size_t accepted = 0;
  for (std::size_t i = 1; i < chain.size(); ++i) accepted += chain[i].accepted ? 1 : 0;
  return static_cast<double>(accepted) / static_cast<double>(chain.size() - 1);
}

void write_chain(std::ostream& os, std::span<const PmmhChainState> chain) {
  const auto old = os.precision(17);
  os << "iteration";
  if (!chain.empty()) {
    for (const auto& name : chain.front().theta.names()) os << ',' << name;
  }
  os << ",log_z,accepted,fos\n";
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& s = chain[i];
    os << i;
    for (const double v : s.theta.values()) os << ',' << v;
    os << ',' << s.log_z << ',' << (s.accepted ? 1 : 0) << ',';
    if (s.fos_value) {
      for (std::size_t k = 0; k < s.fos_value->size(); ++k) {
        if (k > 0) os << ';';
        os << (*s.fos_value)[k];
      }
    }
    os << '\n';
  }
  os.precision(old);
}

}  // namespace abcsmooth
