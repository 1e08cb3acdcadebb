#include "abcsmooth/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t checked_size(std::span<const double> log_weights) {
  if (log_weights.empty()) throw PreconditionError("empty weight vector");
  return log_weights.size();
}

}  // namespace

ResamplePolicy ResamplePolicy::ess_below(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw PreconditionError("ESS threshold fraction must lie in (0, 1]");
  }
  return {ResampleMode::ess_threshold, fraction};
}

bool ResamplePolicy::should_resample(std::span<const double> log_weights) const {
  switch (mode) {
    case ResampleMode::every_step:
      return true;
    case ResampleMode::never:
      return false;
    case ResampleMode::ess_threshold:
      return ess(log_weights) < threshold * static_cast<double>(log_weights.size());
  }
  return false;
}

std::vector<double> ParticleCloud::normalized_weights() const {
  return normalize_log_weights(log_weights);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double mx = *std::max_element(values.begin(), values.end());
  if (mx == kNegInf) return kNegInf;
  double sum = 0.0;
  for (const double v : values) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  checked_size(log_weights);
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (mx == kNegInf || std::isnan(mx)) {
    throw DegenerateWeightsError(0, "all particle weights are zero");
  }
  std::vector<double> out(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_weights[i] - mx);
    sum += out[i];
  }
  for (auto& w : out) w /= sum;
  return out;
}

double ess(std::span<const double> log_weights) {
  checked_size(log_weights);
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (mx == kNegInf || std::isnan(mx)) {
    throw DegenerateWeightsError(0, "effective sample size of all-zero weights");
  }
  double s1 = 0.0;
  double s2 = 0.0;
  for (const double lw : log_weights) {
    const double w = std::exp(lw - mx);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

std::vector<std::size_t> multinomial_resample(std::span<const double> log_weights,
                                              RandomStream& stream) {
  const auto w = normalize_log_weights(log_weights);
  std::vector<double> cumulative(w.size());
  std::partial_sum(w.begin(), w.end(), cumulative.begin());
  const double total = cumulative.back();
  const std::size_t n = w.size();
  std::vector<std::size_t> out(n);
  for (auto& idx : out) {
    const double u = stream.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
    while (w[idx] == 0.0 && idx > 0) --idx;  // rounding at the tail of the cumulative sum
  }
  return out;
}

ParentSelection select_parents(const ParticleCloud& prev, const ResamplePolicy& policy,
                               RandomStream& stream) {
  const std::size_t n = prev.size();
  ParentSelection out;
  if (policy.should_resample(prev.log_weights)) {
    out.parents = multinomial_resample(prev.log_weights, stream);
    out.carried_log_weights.assign(n, -std::log(static_cast<double>(n)));
    out.resampled = true;
  } else {
    out.parents.resize(n);
    std::iota(out.parents.begin(), out.parents.end(), std::size_t{0});
    const double lse = log_sum_exp(prev.log_weights);
    if (lse == kNegInf) throw DegenerateWeightsError(prev.time, "all particle weights are zero");
    out.carried_log_weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.carried_log_weights[i] = prev.log_weights[i] - lse;
  }
  return out;
}

void apply_potentials(ParticleCloud& cloud, std::span<const double> carried_log_weights) {
  const std::size_t n = cloud.log_potentials.size();
  cloud.log_weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = carried_log_weights[i];
    const double g = cloud.log_potentials[i];
    cloud.log_weights[i] = (c == kNegInf || g == kNegInf) ? kNegInf : c + g;
  }
  cloud.log_step_weight_mean = log_sum_exp(cloud.log_weights);
  if (cloud.log_step_weight_mean == kNegInf || std::isnan(cloud.log_step_weight_mean)) {
    throw DegenerateWeightsError(cloud.time, "all particle weights are zero");
  }
}

ParticleCloud smc_init(const HmmModel& model, std::span<const double> y0, std::size_t n_particles,
                       RandomStream& stream) {
  if (n_particles == 0) throw PreconditionError("need at least one particle");
  if (y0.size() != model.dim_y()) throw PreconditionError("observation dimension mismatch");
  ParticleCloud cloud;
  cloud.time = 0;
  cloud.dim_x = model.dim_x();
  cloud.particles.resize(n_particles * cloud.dim_x);
  cloud.log_potentials.resize(n_particles);
  cloud.ancestors.resize(n_particles);
  std::iota(cloud.ancestors.begin(), cloud.ancestors.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_particles; ++i) {
    auto x = cloud.particle(i);
    model.sample_initial(stream, x);
    cloud.log_potentials[i] = model.log_observation_density(x, y0, 0);
  }
  const std::vector<double> carried(n_particles, -std::log(static_cast<double>(n_particles)));
  apply_potentials(cloud, carried);
  return cloud;
}

ParticleCloud smc_step(const ParticleCloud& prev, const HmmModel& model,
                       std::span<const double> y_n, const ResamplePolicy& policy,
                       RandomStream& stream) {
  if (y_n.size() != model.dim_y()) throw PreconditionError("observation dimension mismatch");
  const std::size_t n = prev.size();
  auto selection = select_parents(prev, policy, stream);

  ParticleCloud cloud;
  cloud.time = prev.time + 1;
  cloud.dim_x = prev.dim_x;
  cloud.particles.resize(n * cloud.dim_x);
  cloud.log_potentials.resize(n);
  cloud.ancestors = std::move(selection.parents);
  cloud.resampled = selection.resampled;
  for (std::size_t i = 0; i < n; ++i) {
    auto x = cloud.particle(i);
    model.sample_transition(prev.particle(cloud.ancestors[i]), cloud.time, stream, x);
    cloud.log_potentials[i] = model.log_observation_density(x, y_n, cloud.time);
  }
  apply_potentials(cloud, selection.carried_log_weights);
  return cloud;
}

NormalizingConstant normalizing_constant(std::span<const double> log_step_weight_means) {
  NormalizingConstant out;
  for (const double m : log_step_weight_means) {
    if (m == kNegInf || std::isnan(m)) {
      out.log_value = kNegInf;
      out.degenerate = true;
      return out;
    }
    out.log_value += m;
  }
  return out;
}

NormalizingConstant normalizing_constant(std::span<const ParticleCloud> history) {
  std::vector<double> means;
  means.reserve(history.size());
  for (const auto& c : history) means.push_back(c.log_step_weight_mean);
  return normalizing_constant(means);
}

Genealogy::Genealogy(std::span<const ParticleCloud> history) {
  if (history.empty()) throw PreconditionError("genealogy needs at least one cloud");
  n_particles_ = history.front().size();
  for (std::size_t t = 0; t < history.size(); ++t) {
    const auto& c = history[t];
    if (c.time != t) throw PreconditionError("genealogy: clouds must cover times 0..n in order");
    if (c.size() != n_particles_ || c.ancestors.size() != n_particles_) {
      throw PreconditionError("genealogy: missing or inconsistent ancestor array");
    }
    if (t > 0) ancestors_.push_back(c.ancestors);
  }
}

std::vector<std::size_t> Genealogy::lineage(std::size_t i) const {
  if (i >= n_particles_) throw PreconditionError("lineage: particle index out of range");
  std::vector<std::size_t> b(ancestors_.size() + 1);
  b.back() = i;
  for (std::size_t t = ancestors_.size(); t > 0; --t) b[t - 1] = ancestors_[t - 1][b[t]];
  return b;
}

std::vector<Vector> ancestral_path(std::span<const ParticleCloud> history, std::size_t i) {
  const Genealogy genealogy(history);
  const auto b = genealogy.lineage(i);
  std::vector<Vector> path;
  path.reserve(b.size());
  for (std::size_t t = 0; t < b.size(); ++t) {
    const auto x = history[t].particle(b[t]);
    path.emplace_back(x.begin(), x.end());
  }
  return path;
}

Vector path_estimate(std::span<const ParticleCloud> history, const AdditiveFunctional& functional) {
  const Genealogy genealogy(history);
  const auto& last = history.back();
  const auto w = last.normalized_weights();
  Vector out(functional.value_dim(), 0.0);
  for (std::size_t i = 0; i < last.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto b = genealogy.lineage(i);
    std::vector<Vector> path;
    path.reserve(b.size());
    for (std::size_t t = 0; t < b.size(); ++t) {
      const auto x = history[t].particle(b[t]);
      path.emplace_back(x.begin(), x.end());
    }
    const auto v = functional.on_path(path);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * v[k];
  }
  return out;
}

void dump_cloud(std::ostream& os, const ParticleCloud& cloud) {
  const auto old = os.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    os << i;
    for (const double v : cloud.particle(i)) os << ' ' << v;
    os << ' ' << cloud.log_weights[i] << ' ' << cloud.ancestors[i] << '\n';
  }
  os.precision(old);
}

}  // namespace abcsmooth
