#include "abcsmooth/abc.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_kernel(const AbcKernel& kernel) {
  if (!(kernel.epsilon > 0.0)) throw PreconditionError("ABC tolerance must be positive");
}

double log_factorial(std::size_t d) { return std::lgamma(static_cast<double>(d) + 1.0); }

ParticleCloud make_abc_cloud(std::size_t time, const HmmModel& model, std::size_t n) {
  ParticleCloud cloud;
  cloud.time = time;
  cloud.dim_x = model.dim_x();
  cloud.dim_y = model.dim_y();
  cloud.particles.resize(n * cloud.dim_x);
  cloud.pseudo_obs.resize(n * cloud.dim_y);
  cloud.log_potentials.resize(n);
  return cloud;
}

void draw_pseudo_and_weigh(ParticleCloud& cloud, const HmmModel& model,
                           std::span<const double> y, const AbcKernel& kernel,
                           std::size_t i, RandomStream& stream) {
  auto u = std::span<double>(cloud.pseudo_obs).subspan(i * cloud.dim_y, cloud.dim_y);
  model.sample_observation(cloud.particle(i), cloud.time, stream, u);
  cloud.log_potentials[i] = kernel.log_weight(u, y);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

class AuxiliaryModel final : public HmmModel {
 public:
  AuxiliaryModel(std::shared_ptr<const HmmModel> base, AbcKernel kernel)
      : base_(std::move(base)), kernel_(kernel) {
    if (!base_) throw PreconditionError("auxiliary model needs a base model");
    check_kernel(kernel_);
    const auto r = base_->observation_noise_variance();
    if (!r) throw PreconditionError("auxiliary model needs additive Gaussian observation noise");
    r_ = *r;
    if (kernel_.shape == KernelShape::indicator_l1 && base_->dim_y() != 1) {
      throw PreconditionError("indicator auxiliary density is available for d_y = 1 only");
    }
  }

  [[nodiscard]] std::size_t dim_x() const override { return base_->dim_x(); }
  [[nodiscard]] std::size_t dim_y() const override { return base_->dim_y(); }
  [[nodiscard]] const ThetaVector& theta() const override { return base_->theta(); }

  void sample_initial(RandomStream& stream, std::span<double> x0) const override {
    base_->sample_initial(stream, x0);
  }
  void sample_transition(std::span<const double> prev, std::size_t n, RandomStream& stream,
                         std::span<double> next) const override {
    base_->sample_transition(prev, n, stream, next);
  }
  [[nodiscard]] double log_transition_density(std::span<const double> prev,
                                              std::span<const double> next,
                                              std::size_t n) const override {
    return base_->log_transition_density(prev, next, n);
  }

  // Y = U + kernel noise, U ~ g(x, .).
  void sample_observation(std::span<const double> x, std::size_t n, RandomStream& stream,
                          std::span<double> y) const override {
    base_->sample_observation(x, n, stream, y);
    const double eps = kernel_.epsilon;
    if (kernel_.shape == KernelShape::gaussian) {
      for (auto& v : y) v += eps * stream.gaussian();
      return;
    }
    // Uniform on the L1 ball: Dirichlet(1,..,1) radii with random signs.
    const std::size_t d = y.size();
    std::vector<double> e(d + 1);
    double total = 0.0;
    for (auto& v : e) {
      v = -std::log1p(-stream.uniform());
      total += v;
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
      y[k] += sign * eps * e[k] / total;
    }
  }

  [[nodiscard]] bool has_observation_density() const override { return true; }
  [[nodiscard]] double log_observation_density(std::span<const double> x,
                                               std::span<const double> y,
                                               std::size_t n) const override {
    std::vector<double> mean(base_->dim_y());
    base_->observation_mean(x, n, mean);
    const double eps = kernel_.epsilon;
    if (kernel_.shape == KernelShape::gaussian) {
      double out = 0.0;
      for (std::size_t k = 0; k < mean.size(); ++k) {
        out += log_normal_density(y[k], mean[k], r_ + eps * eps);
      }
      if (!kernel_.normalized) {
        out += 0.5 * static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi * eps * eps);
      }
      return out;
    }
    const double sd = std::sqrt(r_);
    const double hi = (y[0] - mean[0] + eps) / sd;
    const double lo = (y[0] - mean[0] - eps) / sd;
    // Upper-tail form keeps precision when both bounds sit far in the right tail.
    const double mass = lo > 0.0 ? std_normal_cdf(-lo) - std_normal_cdf(-hi)
                                 : std_normal_cdf(hi) - std_normal_cdf(lo);
    double out = mass > 0.0 ? std::log(mass) : kNegInf;
    if (kernel_.normalized) out -= std::log(2.0 * eps);
    return out;
  }

  [[nodiscard]] std::optional<Vector> initial_point() const override {
    return base_->initial_point();
  }
  [[nodiscard]] double log_initial_density(std::span<const double> x) const override {
    return base_->log_initial_density(x);
  }
  [[nodiscard]] std::optional<double> transition_noise_variance() const override {
    return base_->transition_noise_variance();
  }
  void transition_mean(std::span<const double> prev, std::size_t n,
                       std::span<double> out) const override {
    base_->transition_mean(prev, n, out);
  }

 private:
  std::shared_ptr<const HmmModel> base_;
  AbcKernel kernel_;
  double r_ = 1.0;
};

}  // namespace

AbcKernel AbcKernel::indicator(double epsilon, bool normalized) {
  return {epsilon, KernelShape::indicator_l1, normalized};
}

AbcKernel AbcKernel::gaussian(double epsilon) { return {epsilon, KernelShape::gaussian, true}; }

double AbcKernel::log_weight(std::span<const double> u, std::span<const double> y) const {
  if (u.size() != y.size()) throw PreconditionError("kernel: pseudo-observation dimension mismatch");
  check_kernel(*this);
  const auto d = static_cast<double>(u.size());
  if (shape == KernelShape::indicator_l1) {
    double dist = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) dist += std::abs(u[k] - y[k]);
    if (!(dist / epsilon < 1.0)) return kNegInf;
    return normalized ? log_factorial(u.size()) - d * std::log(2.0 * epsilon) : 0.0;
  }
  double sq = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double diff = u[k] - y[k];
    sq += diff * diff;
  }
  const double log_norm = normalized ? -0.5 * d * std::log(2.0 * std::numbers::pi * epsilon * epsilon) : 0.0;
  return log_norm - 0.5 * sq / (epsilon * epsilon);
}

double kernel_weight(const AbcKernel& kernel, std::span<const double> u, std::span<const double> y) {
  return std::exp(kernel.log_weight(u, y));
}

ParticleCloud abc_smc_init(const HmmModel& model, std::span<const double> y0,
                           std::size_t n_particles, const AbcKernel& kernel, RandomStream& stream) {
  if (n_particles == 0) throw PreconditionError("need at least one particle");
  if (y0.size() != model.dim_y()) throw PreconditionError("observation dimension mismatch");
  check_kernel(kernel);
  auto cloud = make_abc_cloud(0, model, n_particles);
  cloud.ancestors.resize(n_particles);
  std::iota(cloud.ancestors.begin(), cloud.ancestors.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_particles; ++i) {
    model.sample_initial(stream, cloud.particle(i));
    draw_pseudo_and_weigh(cloud, model, y0, kernel, i, stream);
  }
  const std::vector<double> carried(n_particles, -std::log(static_cast<double>(n_particles)));
  apply_potentials(cloud, carried);
  return cloud;
}

ParticleCloud abc_smc_step(const ParticleCloud& prev, const HmmModel& model,
                           std::span<const double> y_n, const AbcKernel& kernel,
                           const ResamplePolicy& policy, RandomStream& stream) {
  if (y_n.size() != model.dim_y()) throw PreconditionError("observation dimension mismatch");
  check_kernel(kernel);
  const std::size_t n = prev.size();
  auto selection = select_parents(prev, policy, stream);
  auto cloud = make_abc_cloud(prev.time + 1, model, n);
  cloud.ancestors = std::move(selection.parents);
  cloud.resampled = selection.resampled;
  for (std::size_t i = 0; i < n; ++i) {
    model.sample_transition(prev.particle(cloud.ancestors[i]), cloud.time, stream,
                            cloud.particle(i));
    draw_pseudo_and_weigh(cloud, model, y_n, kernel, i, stream);
  }
  apply_potentials(cloud, selection.carried_log_weights);
  return cloud;
}

ParticleCloud rsmc_step(const ParticleCloud& prev, const HmmModel& model,
                        std::span<const double> y_n, const AbcKernel& kernel,
                        RandomStream& stream) {
  if (kernel.shape != KernelShape::indicator_l1) {
    throw PreconditionError("rejection SMC is defined for the indicator kernel only");
  }
  if (y_n.size() != model.dim_y()) throw PreconditionError("observation dimension mismatch");
  if (prev.log_potentials.size() != prev.size()) {
    throw PreconditionError("rejection SMC needs the previous potentials");
  }
  check_kernel(kernel);
  const std::size_t n = prev.size();
  std::vector<std::size_t> accepted;
  accepted.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (prev.log_potentials[i] != kNegInf) accepted.push_back(i);
  }
  if (accepted.empty()) {
    throw DegenerateWeightsError(prev.time, "rejection SMC: no particle accepted");
  }

  auto cloud = make_abc_cloud(prev.time + 1, model, n);
  cloud.ancestors.resize(n);
  cloud.resampled = true;
  for (std::size_t i = 0; i < n; ++i) {
    cloud.ancestors[i] =
        prev.log_potentials[i] != kNegInf ? i : accepted[stream.index(accepted.size())];
  }
  for (std::size_t i = 0; i < n; ++i) {
    model.sample_transition(prev.particle(cloud.ancestors[i]), cloud.time, stream,
                            cloud.particle(i));
    draw_pseudo_and_weigh(cloud, model, y_n, kernel, i, stream);
  }
  const std::vector<double> carried(n, -std::log(static_cast<double>(n)));
  apply_potentials(cloud, carried);
  return cloud;
}

std::vector<double> EpsilonCalibration::powers_of_two(int hi, int lo) {
  std::vector<double> out;
  for (int e = hi; e >= lo; --e) out.push_back(std::ldexp(1.0, e));
  return out;
}

namespace {

std::optional<std::size_t> run_trial(const HmmModel& model, std::span<const Vector> y,
                                     std::size_t n_particles, const AbcKernel& kernel,
                                     const EpsilonCalibration& cal, std::uint64_t seed) {
  RandomStream stream(seed);
  try {
    auto cloud = abc_smc_init(model, y[0], n_particles, kernel, stream);
    for (std::size_t t = 1; t < y.size(); ++t) {
      cloud = cal.sampler == AbcSampler::rsmc
                  ? rsmc_step(cloud, model, y[t], kernel, stream)
                  : abc_smc_step(cloud, model, y[t], kernel, cal.policy, stream);
    }
  } catch (const DegenerateWeightsError& e) {
    return e.time();
  }
  return std::nullopt;
}

}  // namespace

CalibrationResult calibrate_epsilon(const HmmModel& model, std::span<const Vector> observations,
                                    std::size_t n_particles, const EpsilonCalibration& cal,
                                    RandomStream& stream) {
  if (cal.grid.empty()) throw PreconditionError("calibration grid is empty");
  for (std::size_t k = 1; k < cal.grid.size(); ++k) {
    if (!(cal.grid[k] < cal.grid[k - 1])) {
      throw PreconditionError("calibration grid must be strictly decreasing");
    }
  }
  if (cal.trials == 0) throw PreconditionError("calibration needs at least one trial");
  if (observations.empty()) throw PreconditionError("calibration: no observations");

  std::vector<std::uint64_t> seeds(cal.trials);
  for (auto& s : seeds) s = stream.engine()();

  CalibrationResult out;
  std::optional<double> best;
  for (const double eps : cal.grid) {
    const AbcKernel kernel{eps, cal.shape, cal.shape == KernelShape::gaussian};
    bool all_ok = true;
    for (std::size_t t = 0; t < cal.trials; ++t) {
      const auto failed = run_trial(model, observations, n_particles, kernel, cal, seeds[t]);
      out.log.push_back({eps, t, !failed.has_value(), failed});
      if (failed) {
        all_ok = false;
        break;
      }
    }
    if (!all_ok) break;
    best = eps;
  }
  if (!best) {
    throw CalibrationError("even the largest tolerance " + std::to_string(cal.grid.front()) +
                           " degenerates");
  }
  out.epsilon = *best;
  return out;
}

void write_calibration_log(std::ostream& os, std::span<const CalibrationTrial> log) {
  const auto old = os.precision(17);
  os << "epsilon,trial,success,first_failing_time\n";
  for (const auto& t : log) {
    os << t.epsilon << ',' << t.trial << ',' << (t.success ? 1 : 0) << ',';
    if (t.failed_time) os << *t.failed_time;
    os << '\n';
  }
  os.precision(old);
}

std::shared_ptr<HmmModel> make_auxiliary_model(std::shared_ptr<const HmmModel> base,
                                               const AbcKernel& kernel) {
  return std::make_shared<AuxiliaryModel>(std::move(base), kernel);
}

LinearGaussianParams inflate_observation_noise(const LinearGaussianParams& params,
                                               const AbcKernel& kernel) {
  if (kernel.shape != KernelShape::gaussian) {
    throw PreconditionError("variance inflation applies to the Gaussian kernel only");
  }
  check_kernel(kernel);
  auto out = params;
  out.r += kernel.epsilon * kernel.epsilon;
  return out;
}

}  // namespace abcsmooth
