#include "abcsmooth/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>

#include "abcsmooth/errors.hpp"
#include "abcsmooth/smc.hpp"

namespace abcsmooth {

KalmanResult kalman_rts(const LinearGaussianParams& params, std::span<const Vector> observations) {
  if (!(params.r > 0.0) || !(params.q >= 0.0) || !(params.p0 >= 0.0)) {
    throw InvalidModelError("kalman_rts: need r > 0, q >= 0, p0 >= 0");
  }
  if (observations.empty()) throw PreconditionError("kalman_rts: no observations");
  const std::size_t steps = observations.size();
  const std::size_t dim = observations.front().size();
  const double a = params.a;
  const double c = params.c;

  KalmanResult out;
  out.filtered_means.assign(steps, Vector(dim));
  out.filtered_variances.assign(steps, Vector(dim));
  std::vector<Vector> pred_means(steps, Vector(dim));
  std::vector<Vector> pred_vars(steps, Vector(dim));

  for (std::size_t k = 0; k < dim; ++k) {
    double m = params.m0;
    double p = params.p0;
    for (std::size_t t = 0; t < steps; ++t) {
      if (t > 0) {
        m = a * m;
        p = a * a * p + params.q;
      }
      pred_means[t][k] = m;
      pred_vars[t][k] = p;
      const double s = c * c * p + params.r;
      const double gain = c * p / s;
      const double resid = observations[t][k] - c * m;
      out.log_likelihood += log_normal_density(observations[t][k], c * m, s);
      m += gain * resid;
      p = (1.0 - gain * c) * p;
      out.filtered_means[t][k] = m;
      out.filtered_variances[t][k] = p;
    }
  }

  out.smoothed_means = out.filtered_means;
  out.smoothed_variances = out.filtered_variances;
  for (std::size_t t = steps - 1; t-- > 0;) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double pp = pred_vars[t + 1][k];
      const double j = pp > 0.0 ? out.filtered_variances[t][k] * a / pp : 0.0;
      out.smoothed_means[t][k] =
          out.filtered_means[t][k] + j * (out.smoothed_means[t + 1][k] - pred_means[t + 1][k]);
      out.smoothed_variances[t][k] =
          out.filtered_variances[t][k] + j * j * (out.smoothed_variances[t + 1][k] - pp);
    }
  }
  return out;
}

KalmanResult kalman_rts(const LinearGaussianModel& model, std::span<const Vector> observations) {
  return kalman_rts(model.params(), observations);
}

namespace {

struct Lattice {
  std::vector<double> x;
  std::vector<double> w;  // trapezoid weights
  double h = 0.0;
};

Lattice make_lattice(const GridSpec& grid) {
  if (grid.points < 3 || !(grid.upper > grid.lower)) {
    throw PreconditionError("grid needs at least 3 points and upper > lower");
  }
  Lattice l;
  l.x.resize(grid.points);
  l.w.resize(grid.points);
  const double h = (grid.upper - grid.lower) / static_cast<double>(grid.points - 1);
  for (std::size_t k = 0; k < grid.points; ++k) {
    l.x[k] = grid.lower + h * static_cast<double>(k);
    l.w[k] = h;
  }
  l.h = h;
  l.w.front() *= 0.5;
  l.w.back() *= 0.5;
  return l;
}

// f(from, x_k) at destination time n for every lattice point. Models with an isotropic
// Gaussian transition avoid a density call per entry.
void transition_row(const HmmModel& model, const Lattice& l, double from, std::size_t n,
                    double* out) {
  const std::size_t g = l.x.size();
  const std::span<const double> prev(&from, 1);
  if (const auto var = model.transition_noise_variance(); var && *var > 0.0) {
    double mean = 0.0;
    model.transition_mean(prev, n, std::span<double>(&mean, 1));
    const double scale = -0.5 / *var;
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * *var);
    // exp(scale d^2) along the uniform lattice by a multiplicative recurrence, walking
    // outward from the mode and re-anchored with an exact exp every few entries.
    constexpr std::size_t kAnchor = 32;
    const double step2 = std::exp(2.0 * scale * l.h * l.h);
    const double peak = std::clamp(std::round((mean - l.x[0]) / l.h), 0.0,
                                   static_cast<double>(g - 1));
    const auto k0 = static_cast<std::size_t>(peak);
    auto walk = [&](std::size_t k, std::ptrdiff_t dir) {
      double value = 0.0, ratio = 0.0;
      for (std::size_t i = 0;; ++i) {
        const double d = l.x[k] - mean;
        if (i % kAnchor == 0) {
          value = norm * std::exp(scale * d * d);
          const double hs = dir > 0 ? l.h : -l.h;
          ratio = std::exp(scale * (2.0 * d * hs + l.h * l.h));
        } else {
          value *= ratio;
          ratio *= step2;
        }
        if (value < std::numeric_limits<double>::min()) {
          if (dir > 0) {
            std::fill(out + k, out + g, 0.0);
          } else {
            std::fill(out, out + k + 1, 0.0);
          }
          return;
        }
        out[k] = value;
        if (dir > 0 ? k + 1 == g : k == 0) return;
        k = dir > 0 ? k + 1 : k - 1;
      }
    };
    walk(k0, 1);
    if (k0 > 0) walk(k0 - 1, -1);
    return;
  }
  for (std::size_t k = 0; k < g; ++k) {
    out[k] = std::exp(model.log_transition_density(prev, std::span<const double>(&l.x[k], 1), n));
  }
}

std::vector<double> transition_row(const HmmModel& model, const Lattice& l, double from,
                                   std::size_t n) {
  std::vector<double> row(l.x.size());
  transition_row(model, l, from, n, row.data());
  return row;
}

// f(x_j, x_k) at destination time n, row-major [j][k].
void transition_matrix(const HmmModel& model, const Lattice& l, std::size_t n,
                       std::vector<double>& out) {
  const std::size_t g = l.x.size();
  out.resize(g * g);
  for (std::size_t j = 0; j < g; ++j) transition_row(model, l, l.x[j], n, &out[j * g]);
}

GridOracleResult grid_sweep(const HmmModel& model, std::span<const Vector> y,
                            const AdditiveFunctional& functional, const GridSpec& grid) {
  const Lattice l = make_lattice(grid);
  const std::size_t g = l.x.size();
  const std::size_t steps = y.size();
  const std::size_t vd = functional.value_dim();
  const auto point = model.initial_point();

  std::vector<std::vector<double>> glik(steps, std::vector<double>(g));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < g; ++k) {
      glik[t][k] = std::exp(model.log_observation_density(std::span<const double>(&l.x[k], 1),
                                                          y[t], t));
    }
  }

  // Forward: alpha[t] normalized so that sum_k w_k alpha[t][k] = 1; log_z[t] the scale.
  // With a point-mass start, alpha[0] is unused and the time-0 factor is g(x0, y0).
  std::vector<std::vector<double>> alpha(steps, std::vector<double>(g, 0.0));
  std::vector<double> log_z(steps, 0.0);
  std::vector<double> fmat;
  double x0 = 0.0;
  if (point) {
    x0 = (*point)[0];
    log_z[0] = model.log_observation_density(std::span<const double>(&x0, 1), y[0], 0);
  } else {
    double z = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      alpha[0][k] =
          std::exp(model.log_initial_density(std::span<const double>(&l.x[k], 1))) * glik[0][k];
      z += l.w[k] * alpha[0][k];
    }
    if (!(z > 0.0)) throw AccuracyError("grid oracle: no likelihood mass at time 0");
    for (auto& v : alpha[0]) v /= z;
    log_z[0] = std::log(z);
  }

  for (std::size_t t = 1; t < steps; ++t) {
    std::vector<double> pred(g, 0.0);
    if (t == 1 && point) {
      pred = transition_row(model, l, x0, 1);
    } else {
      transition_matrix(model, l, t, fmat);
      for (std::size_t j = 0; j < g; ++j) {
        const double a = l.w[j] * alpha[t - 1][j];
        if (a == 0.0) continue;
        const double* row = &fmat[j * g];
        for (std::size_t k = 0; k < g; ++k) pred[k] += a * row[k];
      }
    }
    double z = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      alpha[t][k] = pred[k] * glik[t][k];
      z += l.w[k] * alpha[t][k];
    }
    if (!(z > 0.0)) throw AccuracyError("grid oracle: no likelihood mass at time " + std::to_string(t));
    for (auto& v : alpha[t]) v /= z;
    log_z[t] = std::log(z);
  }

  // Backward: beta[t][j] = int f(x_j, x') g(x', y_{t+1}) beta[t+1](x') dx' / Z_{t+1}.
  std::vector<std::vector<double>> beta(steps, std::vector<double>(g, 1.0));
  GridOracleResult out;
  out.grid = grid;
  out.expectation.assign(vd, 0.0);
  out.smoothed_means.assign(steps, 0.0);
  for (const double lz : log_z) out.log_likelihood += lz;

  Vector buf(vd);
  const bool pair = !functional.is_unary();
  for (std::size_t t = steps - 1; t >= 1; --t) {
    const double zt = std::exp(log_z[t]);
    std::vector<double> msg(g);
    for (std::size_t k = 0; k < g; ++k) msg[k] = l.w[k] * glik[t][k] * beta[t][k] / zt;

    const bool from_point = (t == 1 && point);
    if (from_point) {
      const auto row = transition_row(model, l, x0, 1);
      if (pair) {
        for (std::size_t k = 0; k < g; ++k) {
          const double p = row[k] * msg[k];
          if (p == 0.0) continue;
          functional.term(1, std::span<const double>(&x0, 1), std::span<const double>(&l.x[k], 1), buf);
          for (std::size_t c = 0; c < vd; ++c) out.expectation[c] += p * buf[c];
        }
      }
    } else {
      transition_matrix(model, l, t, fmat);
      for (std::size_t j = 0; j < g; ++j) {
        const double* row = &fmat[j * g];
        double acc = 0.0;
        for (std::size_t k = 0; k < g; ++k) acc += row[k] * msg[k];
        beta[t - 1][j] = acc;
      }
      if (pair) {
        for (std::size_t j = 0; j < g; ++j) {
          const double a = l.w[j] * alpha[t - 1][j];
          if (a == 0.0) continue;
          const double* row = &fmat[j * g];
          for (std::size_t k = 0; k < g; ++k) {
            const double p = a * row[k] * msg[k];
            if (p == 0.0) continue;
            functional.term(t, std::span<const double>(&l.x[j], 1),
                            std::span<const double>(&l.x[k], 1), buf);
            for (std::size_t c = 0; c < vd; ++c) out.expectation[c] += p * buf[c];
          }
        }
      }
    }
  }

  // Marginals and unary terms.
  for (std::size_t t = 0; t < steps; ++t) {
    if (t == 0 && point) {
      out.smoothed_means[0] = x0;
      functional.initial(std::span<const double>(&x0, 1), buf);
      for (std::size_t c = 0; c < vd; ++c) out.expectation[c] += buf[c];
      continue;
    }
    std::vector<double> marg(g);
    double norm = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      marg[k] = l.w[k] * alpha[t][k] * beta[t][k];
      norm += marg[k];
    }
    double mean = 0.0;
    for (std::size_t k = 0; k < g; ++k) {
      marg[k] /= norm;
      mean += marg[k] * l.x[k];
    }
    out.smoothed_means[t] = mean;
    if (t == 0 || !pair) {
      for (std::size_t k = 0; k < g; ++k) {
        if (marg[k] == 0.0) continue;
        const std::span<const double> xk(&l.x[k], 1);
        if (t == 0) {
          functional.initial(xk, buf);
        } else {
          functional.term(t, xk, xk, buf);
        }
        for (std::size_t c = 0; c < vd; ++c) out.expectation[c] += marg[k] * buf[c];
      }
    }
  }
  return out;
}

}  // namespace

GridOracleResult grid_oracle(const HmmModel& model, std::span<const Vector> observations,
                             const AdditiveFunctional& functional, const GridSpec& grid,
                             const GridOracleOptions& options) {
  if (model.dim_x() != 1 || model.dim_y() != 1) {
    throw PreconditionError("grid oracle handles one-dimensional models only");
  }
  if (!model.has_observation_density()) {
    throw PreconditionError("grid oracle needs an observation density");
  }
  if (observations.empty()) throw PreconditionError("grid oracle: no observations");

  auto coarse = grid_sweep(model, observations, functional, grid);
  if (!options.check_refinement) return coarse;

  GridSpec fine_spec = grid;
  fine_spec.points = 2 * grid.points - 1;
  auto fine = grid_sweep(model, observations, functional, fine_spec);
  double change = std::abs(fine.log_likelihood - coarse.log_likelihood);
  for (std::size_t c = 0; c < fine.expectation.size(); ++c) {
    change = std::max(change, std::abs(fine.expectation[c] - coarse.expectation[c]));
  }
  for (std::size_t t = 0; t < fine.smoothed_means.size(); ++t) {
    change = std::max(change, std::abs(fine.smoothed_means[t] - coarse.smoothed_means[t]));
  }
  fine.refinement_change = change;
  if (!(change < options.refinement_tolerance)) {
    throw AccuracyError("grid oracle: refinement changed the answer by " + std::to_string(change));
  }
  return fine;
}

GridSpec auto_grid(const HmmModel& model, std::span<const Vector> observations,
                   RandomStream& stream, std::size_t points, std::size_t pilot_particles) {
  if (model.dim_x() != 1) throw PreconditionError("auto_grid handles one-dimensional states only");
  if (observations.empty()) throw PreconditionError("auto_grid: no observations");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  auto widen = [&](const ParticleCloud& cloud) {
    const auto w = cloud.normalized_weights();
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i] * cloud.particles[i];
    double var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = cloud.particles[i] - mean;
      var += w[i] * d * d;
    }
    const double sd = std::sqrt(var);
    lo = std::min(lo, mean - 8.0 * sd);
    hi = std::max(hi, mean + 8.0 * sd);
  };
  auto cloud = smc_init(model, observations[0], pilot_particles, stream);
  widen(cloud);
  for (std::size_t t = 1; t < observations.size(); ++t) {
    cloud = smc_step(cloud, model, observations[t], ResamplePolicy::every_step(), stream);
    widen(cloud);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  return GridSpec{lo, hi, points};
}

}  // namespace abcsmooth
