#include "abcsmooth/model.hpp"

#include <cmath>
#include <numbers>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidModelError(std::string(name) + " must be positive and finite");
  }
}

void require_dim(std::size_t dim) {
  if (dim == 0) throw InvalidModelError("dimension must be positive");
}

}  // namespace

ThetaVector::ThetaVector(std::vector<std::string> names, std::vector<double> values)
    : names_(std::move(names)), values_(std::move(values)) {
  if (names_.size() != values_.size()) {
    throw PreconditionError("ThetaVector: names and values differ in length");
  }
}

double ThetaVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return values_[i];
  }
  throw PreconditionError("ThetaVector: no component named " + std::string(name));
}

double HmmModel::log_observation_density(std::span<const double>, std::span<const double>,
                                         std::size_t) const {
  throw PreconditionError("model has no tractable observation density");
}

double HmmModel::log_initial_density(std::span<const double>) const {
  throw PreconditionError("model has no initial density");
}

void HmmModel::transition_mean(std::span<const double>, std::size_t, std::span<double>) const {
  throw PreconditionError("model does not expose an additive-noise transition mean");
}

void HmmModel::observation_mean(std::span<const double>, std::size_t, std::span<double>) const {
  throw PreconditionError("model does not expose an additive-noise observation mean");
}

double HmmModel::transition_density(std::span<const double> prev, std::span<const double> next,
                                    std::size_t n) const {
  return std::exp(log_transition_density(prev, next, n));
}

double HmmModel::observation_density(std::span<const double> x, std::span<const double> y,
                                     std::size_t n) const {
  return std::exp(log_observation_density(x, y, n));
}

double log_normal_density(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * d * d / variance;
}

void ngm_transition_mean(std::span<const double> x, std::size_t n, std::span<double> out) {
  const double forcing = 8.0 * std::cos(1.2 * static_cast<double>(n));
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x[k];
    out[k] = 0.5 * v + 25.0 * v / (1.0 + v * v) + forcing;
  }
}

Vector ngm_transition_mean(std::span<const double> x, std::size_t n) {
  Vector out(x.size());
  ngm_transition_mean(x, n, out);
  return out;
}

// ---------------------------------------------------------------------------

NonlinearGrowthModel::NonlinearGrowthModel(std::size_t dim, double sigma_x2, double sigma_y2)
    : dim_(dim),
      sigma_x2_(sigma_x2),
      sigma_y2_(sigma_y2),
      theta_({"sigma_x2", "sigma_y2"}, {sigma_x2, sigma_y2}) {
  require_dim(dim);
  require_positive(sigma_x2, "sigma_x2");
  require_positive(sigma_y2, "sigma_y2");
}

void NonlinearGrowthModel::sample_initial(RandomStream&, std::span<double> x0) const {
  for (auto& v : x0) v = 0.0;
}

void NonlinearGrowthModel::sample_transition(std::span<const double> prev, std::size_t n,
                                             RandomStream& stream, std::span<double> next) const {
  ngm_transition_mean(prev, n, next);
  const double sd = std::sqrt(sigma_x2_);
  for (auto& v : next) v += sd * stream.gaussian();
}

double NonlinearGrowthModel::log_transition_density(std::span<const double> prev,
                                                    std::span<const double> next,
                                                    std::size_t n) const {
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    double mean = 0.0;
    ngm_transition_mean(prev.subspan(k, 1), n, std::span<double>(&mean, 1));
    out += log_normal_density(next[k], mean, sigma_x2_);
  }
  return out;
}

void NonlinearGrowthModel::transition_mean(std::span<const double> prev, std::size_t n,
                                           std::span<double> out) const {
  ngm_transition_mean(prev, n, out);
}

void NonlinearGrowthModel::sample_observation(std::span<const double> x, std::size_t,
                                              RandomStream& stream, std::span<double> y) const {
  const double sd = std::sqrt(sigma_y2_);
  for (std::size_t k = 0; k < dim_; ++k) y[k] = x[k] * x[k] / 20.0 + sd * stream.gaussian();
}

double NonlinearGrowthModel::log_observation_density(std::span<const double> x,
                                                     std::span<const double> y,
                                                     std::size_t) const {
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    out += log_normal_density(y[k], x[k] * x[k] / 20.0, sigma_y2_);
  }
  return out;
}

void NonlinearGrowthModel::observation_mean(std::span<const double> x, std::size_t,
                                            std::span<double> out) const {
  for (std::size_t k = 0; k < dim_; ++k) out[k] = x[k] * x[k] / 20.0;
}

// ---------------------------------------------------------------------------

LinearGaussianModel::LinearGaussianModel(std::size_t dim, LinearGaussianParams params)
    : dim_(dim), params_(params), theta_({"sigma_x2", "sigma_y2"}, {params.q, params.r}) {
  require_dim(dim);
  require_positive(params.q, "q");
  require_positive(params.r, "r");
  if (!(params.p0 >= 0.0) || !std::isfinite(params.a) || !std::isfinite(params.c)) {
    throw InvalidModelError("p0 must be non-negative and a, c finite");
  }
}

void LinearGaussianModel::sample_initial(RandomStream& stream, std::span<double> x0) const {
  const double sd = std::sqrt(params_.p0);
  for (auto& v : x0) v = params_.m0 + sd * stream.gaussian();
}

void LinearGaussianModel::sample_transition(std::span<const double> prev, std::size_t,
                                            RandomStream& stream, std::span<double> next) const {
  const double sd = std::sqrt(params_.q);
  for (std::size_t k = 0; k < dim_; ++k) next[k] = params_.a * prev[k] + sd * stream.gaussian();
}

double LinearGaussianModel::log_transition_density(std::span<const double> prev,
                                                   std::span<const double> next,
                                                   std::size_t) const {
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    out += log_normal_density(next[k], params_.a * prev[k], params_.q);
  }
  return out;
}

void LinearGaussianModel::transition_mean(std::span<const double> prev, std::size_t,
                                          std::span<double> out) const {
  for (std::size_t k = 0; k < dim_; ++k) out[k] = params_.a * prev[k];
}

void LinearGaussianModel::sample_observation(std::span<const double> x, std::size_t,
                                             RandomStream& stream, std::span<double> y) const {
  const double sd = std::sqrt(params_.r);
  for (std::size_t k = 0; k < dim_; ++k) y[k] = params_.c * x[k] + sd * stream.gaussian();
}

double LinearGaussianModel::log_observation_density(std::span<const double> x,
                                                    std::span<const double> y,
                                                    std::size_t) const {
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    out += log_normal_density(y[k], params_.c * x[k], params_.r);
  }
  return out;
}

void LinearGaussianModel::observation_mean(std::span<const double> x, std::size_t,
                                           std::span<double> out) const {
  for (std::size_t k = 0; k < dim_; ++k) out[k] = params_.c * x[k];
}

std::optional<Vector> LinearGaussianModel::initial_point() const {
  if (params_.p0 == 0.0) return Vector(dim_, params_.m0);
  return std::nullopt;
}

double LinearGaussianModel::log_initial_density(std::span<const double> x) const {
  if (params_.p0 == 0.0) throw PreconditionError("initial law is a point mass");
  double out = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) out += log_normal_density(x[k], params_.m0, params_.p0);
  return out;
}

// ---------------------------------------------------------------------------

LikelihoodFreeView::LikelihoodFreeView(std::shared_ptr<const HmmModel> base)
    : base_(std::move(base)) {
  if (!base_) throw PreconditionError("LikelihoodFreeView needs a model");
}

Trajectory simulate(const HmmModel& model, std::size_t horizon, RandomStream& stream) {
  Trajectory out;
  out.states.reserve(horizon + 1);
  out.observations.reserve(horizon + 1);
  Vector x(model.dim_x());
  Vector y(model.dim_y());
  model.sample_initial(stream, x);
  model.sample_observation(x, 0, stream, y);
  out.states.push_back(x);
  out.observations.push_back(y);
  for (std::size_t n = 1; n <= horizon; ++n) {
    Vector next(model.dim_x());
    model.sample_transition(out.states.back(), n, stream, next);
    model.sample_observation(next, n, stream, y);
    out.states.push_back(std::move(next));
    out.observations.push_back(y);
  }
  return out;
}

Trajectory simulate(const HmmModel& model, std::size_t horizon, std::uint64_t seed) {
  RandomStream stream(seed);
  auto out = simulate(model, horizon, stream);
  out.seed = seed;
  return out;
}

}  // namespace abcsmooth
