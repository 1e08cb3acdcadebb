#include "abcsmooth/functional.hpp"

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

AdditiveFunctional AdditiveFunctional::unary(std::size_t value_dim, UnaryTerm term,
                                             std::optional<std::size_t> horizon) {
  if (value_dim == 0 || !term) throw PreconditionError("functional needs a term and value_dim > 0");
  AdditiveFunctional out;
  out.value_dim_ = value_dim;
  out.unary_term_ = std::move(term);
  out.horizon_ = horizon;
  return out;
}

AdditiveFunctional AdditiveFunctional::pairwise(std::size_t value_dim, UnaryTerm initial,
                                                PairwiseTerm term,
                                                std::optional<std::size_t> horizon) {
  if (value_dim == 0 || !initial || !term) {
    throw PreconditionError("functional needs terms and value_dim > 0");
  }
  AdditiveFunctional out;
  out.value_dim_ = value_dim;
  out.unary_term_ = std::move(initial);
  out.pair_term_ = std::move(term);
  out.horizon_ = horizon;
  return out;
}

AdditiveFunctional AdditiveFunctional::mean_state(std::size_t dim, double scale) {
  return unary(dim, [scale](std::size_t, std::span<const double> x, std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = scale * x[k];
  });
}

AdditiveFunctional AdditiveFunctional::time_averaged_mean_state(std::size_t dim,
                                                                std::size_t horizon) {
  auto out = mean_state(dim, 1.0 / static_cast<double>(horizon + 1));
  out.horizon_ = horizon;
  return out;
}

AdditiveFunctional AdditiveFunctional::constant(double c) {
  return unary(1, [c](std::size_t, std::span<const double>, std::span<double> out) { out[0] = c; });
}

AdditiveFunctional AdditiveFunctional::lag_product(std::size_t dim) {
  return pairwise(
      dim,
      [](std::size_t, std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
      },
      [](std::size_t, std::span<const double> prev, std::span<const double> x,
         std::span<double> out) {
        for (std::size_t k = 0; k < x.size(); ++k) out[k] = prev[k] * x[k];
      });
}

void AdditiveFunctional::initial(std::span<const double> x0, std::span<double> out) const {
  unary_term_(0, x0, out);
}

void AdditiveFunctional::term(std::size_t p, std::span<const double> prev,
                              std::span<const double> x, std::span<double> out) const {
  if (pair_term_) {
    pair_term_(p, prev, x, out);
  } else {
    unary_term_(p, x, out);
  }
}

Vector AdditiveFunctional::on_path(std::span<const Vector> path) const {
  if (path.empty()) throw PreconditionError("empty path");
  Vector total(value_dim_, 0.0);
  Vector buf(value_dim_);
  initial(path[0], buf);
  for (std::size_t k = 0; k < value_dim_; ++k) total[k] += buf[k];
  for (std::size_t p = 1; p < path.size(); ++p) {
    term(p, path[p - 1], path[p], buf);
    for (std::size_t k = 0; k < value_dim_; ++k) total[k] += buf[k];
  }
  return total;
}

}  // namespace abcsmooth
