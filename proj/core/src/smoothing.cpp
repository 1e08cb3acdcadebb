#include "abcsmooth/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Normalized log weights log Wbar_{n-1}^j.
std::vector<double> normalized_log_weights(const ParticleCloud& cloud) {
  const double lse = log_sum_exp(cloud.log_weights);
  if (lse == kNegInf) throw DegenerateWeightsError(cloud.time, "all particle weights are zero");
  std::vector<double> out(cloud.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = cloud.log_weights[j] - lse;
  return out;
}

}  // namespace

FosStats fos_init(const AdditiveFunctional& functional, const ParticleCloud& cloud0) {
  if (cloud0.time != 0) throw PreconditionError("fos_init expects the time-0 cloud");
  FosStats stats;
  stats.time = 0;
  stats.value_dim = functional.value_dim();
  stats.values.resize(cloud0.size() * stats.value_dim);
  for (std::size_t i = 0; i < cloud0.size(); ++i) {
    functional.initial(cloud0.particle(i),
                       std::span<double>(stats.values).subspan(i * stats.value_dim, stats.value_dim));
  }
  return stats;
}

FosStats fos_update(const FosStats& prev_stats, const ParticleCloud& prev_cloud,
                    const ParticleCloud& new_cloud, const HmmModel& model,
                    const AdditiveFunctional& functional) {
  const std::size_t n_prev = prev_cloud.size();
  const std::size_t n_new = new_cloud.size();
  const std::size_t vd = functional.value_dim();
  const std::size_t dx = prev_cloud.dim_x;
  if (prev_stats.size() != n_prev || prev_stats.value_dim != vd) {
    throw PreconditionError("fos_update: statistics do not match the previous cloud");
  }
  if (prev_stats.time != prev_cloud.time || new_cloud.time != prev_cloud.time + 1) {
    throw PreconditionError("fos_update: time indices are not consecutive");
  }
  const std::size_t n = new_cloud.time;
  const auto log_w = normalized_log_weights(prev_cloud);

  // Particles with zero weight never contribute; drop them once.
  std::vector<std::size_t> live;
  live.reserve(n_prev);
  for (std::size_t j = 0; j < n_prev; ++j) {
    if (log_w[j] != kNegInf) live.push_back(j);
  }

  const auto q = model.transition_noise_variance();
  std::vector<double> means;
  if (q) {
    means.resize(live.size() * dx);
    for (std::size_t jj = 0; jj < live.size(); ++jj) {
      model.transition_mean(prev_cloud.particle(live[jj]), n,
                            std::span<double>(means).subspan(jj * dx, dx));
    }
  }
  const double inv_two_q = q ? 0.5 / *q : 0.0;

  FosStats out;
  out.time = n;
  out.value_dim = vd;
  out.values.assign(n_new * vd, 0.0);

  std::vector<double> row(live.size());
  std::vector<double> term(vd);
  std::vector<double> acc(vd);
  for (std::size_t i = 0; i < n_new; ++i) {
    const auto xi = new_cloud.particle(i);
    double mx = kNegInf;
    if (q) {
      for (std::size_t jj = 0; jj < live.size(); ++jj) {
        const double* m = &means[jj * dx];
        double sq = 0.0;
        for (std::size_t k = 0; k < dx; ++k) {
          const double d = xi[k] - m[k];
          sq += d * d;
        }
        row[jj] = log_w[live[jj]] - sq * inv_two_q;
        mx = std::max(mx, row[jj]);
      }
    } else {
      for (std::size_t jj = 0; jj < live.size(); ++jj) {
        row[jj] = log_w[live[jj]] + model.log_transition_density(prev_cloud.particle(live[jj]), xi, n);
        mx = std::max(mx, row[jj]);
      }
    }
    if (mx == kNegInf || std::isnan(mx)) throw DegenerateBackwardKernelError(n, i);

    double denom = 0.0;
    std::fill(acc.begin(), acc.end(), 0.0);
    if (functional.is_unary()) {
      for (std::size_t jj = 0; jj < live.size(); ++jj) {
        const double w = std::exp(row[jj] - mx);
        denom += w;
        const double* v = &prev_stats.values[live[jj] * vd];
        for (std::size_t k = 0; k < vd; ++k) acc[k] += w * v[k];
      }
      functional.term(n, xi, xi, term);
      auto dst = std::span<double>(out.values).subspan(i * vd, vd);
      for (std::size_t k = 0; k < vd; ++k) dst[k] = acc[k] / denom + term[k];
    } else {
      for (std::size_t jj = 0; jj < live.size(); ++jj) {
        const double w = std::exp(row[jj] - mx);
        denom += w;
        const std::size_t j = live[jj];
        functional.term(n, prev_cloud.particle(j), xi, term);
        const double* v = &prev_stats.values[j * vd];
        for (std::size_t k = 0; k < vd; ++k) acc[k] += w * (v[k] + term[k]);
      }
      auto dst = std::span<double>(out.values).subspan(i * vd, vd);
      for (std::size_t k = 0; k < vd; ++k) dst[k] = acc[k] / denom;
    }
  }
  return out;
}

Vector fos_estimate(const FosStats& stats, const ParticleCloud& cloud) {
  if (stats.size() != cloud.size()) throw PreconditionError("fos_estimate: size mismatch");
  if (stats.time != cloud.time) throw PreconditionError("fos_estimate: time mismatch");
  const auto w = cloud.normalized_weights();
  Vector out(stats.value_dim, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto v = stats.value(i);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w[i] * v[k];
  }
  return out;
}

}  // namespace abcsmooth
