#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abcsmooth/random.hpp"

namespace abcsmooth {

using Vector = std::vector<double>;

/// Named static parameters of a model, e.g. {sigma_x2, sigma_y2}.
class ThetaVector {
 public:
  ThetaVector() = default;
  ThetaVector(std::vector<std::string> names, std::vector<double> values);

  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] const std::string& name(std::size_t i) const { return names_.at(i); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

  /// Throws PreconditionError for an unknown name.
  [[nodiscard]] double at(std::string_view name) const;

  friend bool operator==(const ThetaVector&, const ThetaVector&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
};

/// A hidden Markov model X_0 ~ eta_0, X_n | x_{n-1} ~ f(x_{n-1}, .), Y_n | x_n ~ g(x_n, .).
///
/// Time indices passed to the transition are destination indices: the first
/// transition is to n = 1. Samplers read randomness only from the stream they are
/// given. The observation density is optional; ABC methods never call it.
///
/// The structural hooks (`transition_noise_variance`, `observation_noise_variance`)
/// describe models with additive isotropic Gaussian noise. They let the smoother
/// evaluate transition densities in bulk and let exact oracles build auxiliary
/// models; models without that structure leave them empty.
class HmmModel {
 public:
  virtual ~HmmModel() = default;

  [[nodiscard]] virtual std::size_t dim_x() const = 0;
  [[nodiscard]] virtual std::size_t dim_y() const = 0;
  [[nodiscard]] virtual const ThetaVector& theta() const = 0;

  virtual void sample_initial(RandomStream& stream, std::span<double> x0) const = 0;
  virtual void sample_transition(std::span<const double> prev, std::size_t n, RandomStream& stream,
                                 std::span<double> next) const = 0;
  [[nodiscard]] virtual double log_transition_density(std::span<const double> prev,
                                                      std::span<const double> next,
                                                      std::size_t n) const = 0;
  virtual void sample_observation(std::span<const double> x, std::size_t n, RandomStream& stream,
                                  std::span<double> y) const = 0;

  [[nodiscard]] virtual bool has_observation_density() const { return false; }
  /// Throws PreconditionError unless has_observation_density().
  [[nodiscard]] virtual double log_observation_density(std::span<const double> x,
                                                       std::span<const double> y,
                                                       std::size_t n) const;

  /// Set when X_0 is a point mass.
  [[nodiscard]] virtual std::optional<Vector> initial_point() const { return std::nullopt; }
  /// Density of eta_0; throws PreconditionError for point-mass or unknown initial laws.
  [[nodiscard]] virtual double log_initial_density(std::span<const double> x) const;

  [[nodiscard]] virtual std::optional<double> transition_noise_variance() const {
    return std::nullopt;
  }
  virtual void transition_mean(std::span<const double> prev, std::size_t n,
                               std::span<double> out) const;
  [[nodiscard]] virtual std::optional<double> observation_noise_variance() const {
    return std::nullopt;
  }
  virtual void observation_mean(std::span<const double> x, std::size_t n,
                                std::span<double> out) const;

  [[nodiscard]] double transition_density(std::span<const double> prev,
                                          std::span<const double> next, std::size_t n) const;
  [[nodiscard]] double observation_density(std::span<const double> x, std::span<const double> y,
                                           std::size_t n) const;
};

/// Componentwise x/2 + 25x/(1+x^2) + 8cos(1.2n).
void ngm_transition_mean(std::span<const double> x, std::size_t n, std::span<double> out);
Vector ngm_transition_mean(std::span<const double> x, std::size_t n);

/// The nonlinear growth benchmark:
///   X_n = X_{n-1}/2 + 25 X_{n-1}/(1 + X_{n-1}^2) + 8 cos(1.2 n) + N(0, sigma_x2 I),
///   Y_n = X_n^2 / 20 + N(0, sigma_y2 I),  X_0 = 0.
/// The scalar maps act componentwise for dim > 1.
class NonlinearGrowthModel final : public HmmModel {
 public:
  NonlinearGrowthModel(std::size_t dim, double sigma_x2, double sigma_y2);

  [[nodiscard]] std::size_t dim_x() const override { return dim_; }
  [[nodiscard]] std::size_t dim_y() const override { return dim_; }
  [[nodiscard]] const ThetaVector& theta() const override { return theta_; }

  void sample_initial(RandomStream& stream, std::span<double> x0) const override;
  void sample_transition(std::span<const double> prev, std::size_t n, RandomStream& stream,
                         std::span<double> next) const override;
  [[nodiscard]] double log_transition_density(std::span<const double> prev,
                                              std::span<const double> next,
                                              std::size_t n) const override;
  void sample_observation(std::span<const double> x, std::size_t n, RandomStream& stream,
                          std::span<double> y) const override;
  [[nodiscard]] bool has_observation_density() const override { return true; }
  [[nodiscard]] double log_observation_density(std::span<const double> x,
                                               std::span<const double> y,
                                               std::size_t n) const override;

  [[nodiscard]] std::optional<Vector> initial_point() const override { return Vector(dim_, 0.0); }

  [[nodiscard]] std::optional<double> transition_noise_variance() const override {
    return sigma_x2_;
  }
  void transition_mean(std::span<const double> prev, std::size_t n,
                       std::span<double> out) const override;
  [[nodiscard]] std::optional<double> observation_noise_variance() const override {
    return sigma_y2_;
  }
  void observation_mean(std::span<const double> x, std::size_t n,
                        std::span<double> out) const override;

 private:
  std::size_t dim_;
  double sigma_x2_;
  double sigma_y2_;
  ThetaVector theta_;
};

/// Scalar coefficients of X_n = a X_{n-1} + N(0, q), Y_n = c X_n + N(0, r),
/// X_0 ~ N(m0, p0), applied independently to each of `dim` components.
struct LinearGaussianParams {
  double a = 0.9;
  double c = 1.0;
  double q = 1.0;
  double r = 1.0;
  double m0 = 0.0;
  double p0 = 1.0;
};

class LinearGaussianModel final : public HmmModel {
 public:
  LinearGaussianModel(std::size_t dim, LinearGaussianParams params);

  [[nodiscard]] const LinearGaussianParams& params() const { return params_; }

  [[nodiscard]] std::size_t dim_x() const override { return dim_; }
  [[nodiscard]] std::size_t dim_y() const override { return dim_; }
  [[nodiscard]] const ThetaVector& theta() const override { return theta_; }

  void sample_initial(RandomStream& stream, std::span<double> x0) const override;
  void sample_transition(std::span<const double> prev, std::size_t n, RandomStream& stream,
                         std::span<double> next) const override;
  [[nodiscard]] double log_transition_density(std::span<const double> prev,
                                              std::span<const double> next,
                                              std::size_t n) const override;
  void sample_observation(std::span<const double> x, std::size_t n, RandomStream& stream,
                          std::span<double> y) const override;
  [[nodiscard]] bool has_observation_density() const override { return true; }
  [[nodiscard]] double log_observation_density(std::span<const double> x,
                                               std::span<const double> y,
                                               std::size_t n) const override;

  [[nodiscard]] std::optional<Vector> initial_point() const override;
  [[nodiscard]] double log_initial_density(std::span<const double> x) const override;

  [[nodiscard]] std::optional<double> transition_noise_variance() const override {
    return params_.q;
  }
  void transition_mean(std::span<const double> prev, std::size_t n,
                       std::span<double> out) const override;
  [[nodiscard]] std::optional<double> observation_noise_variance() const override {
    return params_.r;
  }
  void observation_mean(std::span<const double> x, std::size_t n,
                        std::span<double> out) const override;

 private:
  std::size_t dim_;
  LinearGaussianParams params_;
  ThetaVector theta_;
};

/// Forwards everything to `base` except the observation density, which it hides.
/// Used to show a method runs with samplers alone.
class LikelihoodFreeView final : public HmmModel {
 public:
  explicit LikelihoodFreeView(std::shared_ptr<const HmmModel> base);

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
  void sample_observation(std::span<const double> x, std::size_t n, RandomStream& stream,
                          std::span<double> y) const override {
    base_->sample_observation(x, n, stream, y);
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
};

/// Simulated states x_{0:n} and observations y_{0:n}.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> observations;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t horizon() const { return states.empty() ? 0 : states.size() - 1; }
};

/// Draw order: x_0, y_0, then x_n, y_n for n = 1..horizon.
Trajectory simulate(const HmmModel& model, std::size_t horizon, RandomStream& stream);
Trajectory simulate(const HmmModel& model, std::size_t horizon, std::uint64_t seed);

/// log N(x; mean, variance) for a scalar.
double log_normal_density(double x, double mean, double variance);

}  // namespace abcsmooth
