#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "abcsmooth/model.hpp"

namespace abcsmooth {

/// A path functional V_n(x_{0:n}) = v_0(x_0) + sum_{p=1}^n v_p(x_{p-1}, x_p) with values
/// in R^value_dim. Unary terms ignore x_{p-1}; the smoother uses that to skip the
/// per-pair term evaluation.
class AdditiveFunctional {
 public:
  using UnaryTerm =
      std::function<void(std::size_t p, std::span<const double> x, std::span<double> out)>;
  using PairwiseTerm = std::function<void(std::size_t p, std::span<const double> prev,
                                          std::span<const double> x, std::span<double> out)>;

  static AdditiveFunctional unary(std::size_t value_dim, UnaryTerm term,
                                  std::optional<std::size_t> horizon = std::nullopt);
  static AdditiveFunctional pairwise(std::size_t value_dim, UnaryTerm initial, PairwiseTerm term,
                                     std::optional<std::size_t> horizon = std::nullopt);

  /// v_p(x) = scale * x.
  static AdditiveFunctional mean_state(std::size_t dim, double scale = 1.0);
  /// v_p(x) = x / (horizon + 1): the posterior mean state averaged over [0, horizon].
  static AdditiveFunctional time_averaged_mean_state(std::size_t dim, std::size_t horizon);
  /// v_p = c for every p.
  static AdditiveFunctional constant(double c);
  /// v_0 = 0, v_p(x_{p-1}, x_p) = x_{p-1} x_p (componentwise).
  static AdditiveFunctional lag_product(std::size_t dim);

  [[nodiscard]] std::size_t value_dim() const { return value_dim_; }
  [[nodiscard]] bool is_unary() const { return !pair_term_; }
  [[nodiscard]] std::optional<std::size_t> horizon() const { return horizon_; }

  void initial(std::span<const double> x0, std::span<double> out) const;
  /// Requires p >= 1.
  void term(std::size_t p, std::span<const double> prev, std::span<const double> x,
            std::span<double> out) const;

  /// Evaluates V_n on a whole path x_{0:n}.
  [[nodiscard]] Vector on_path(std::span<const Vector> path) const;

 private:
  AdditiveFunctional() = default;

  std::size_t value_dim_ = 1;
  UnaryTerm unary_term_;
  PairwiseTerm pair_term_;
  std::optional<std::size_t> horizon_;
};

}  // namespace abcsmooth
