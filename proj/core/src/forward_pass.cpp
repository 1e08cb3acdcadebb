#include "abcsmooth/forward_pass.hpp"

#include "abcsmooth/errors.hpp"

namespace abcsmooth {

ForwardPassResult run_forward_pass(const HmmModel& model, std::span<const Vector> observations,
                                   std::size_t n_particles, const ForwardPassOptions& options,
                                   RandomStream& stream) {
  if (observations.empty()) throw PreconditionError("forward pass: no observations");
  if (options.variant == SmcVariant::exact && !model.has_observation_density()) {
    throw PreconditionError("exact SMC needs an observation density");
  }
  const auto* functional = options.functional;
  if (!functional && !options.report_times.empty()) {
    throw PreconditionError("forward pass: report times need a functional");
  }

  ForwardPassResult out;
  std::size_t next_report = 0;
  auto report = [&](const ParticleCloud& cloud) {
    while (next_report < options.report_times.size() &&
           options.report_times[next_report] == cloud.time) {
      out.reported.push_back(fos_estimate(*out.fos, cloud));
      ++next_report;
    }
  };

  ParticleCloud current = options.variant == SmcVariant::exact
                              ? smc_init(model, observations[0], n_particles, stream)
                              : abc_smc_init(model, observations[0], n_particles, options.kernel, stream);
  double log_z = current.log_step_weight_mean;
  if (functional) {
    out.fos = fos_init(*functional, current);
    report(current);
  }

  for (std::size_t t = 1; t < observations.size(); ++t) {
    ParticleCloud next;
    switch (options.variant) {
      case SmcVariant::exact:
        next = smc_step(current, model, observations[t], options.policy, stream);
        break;
      case SmcVariant::abc:
        next = abc_smc_step(current, model, observations[t], options.kernel, options.policy, stream);
        break;
      case SmcVariant::rsmc:
        next = rsmc_step(current, model, observations[t], options.kernel, stream);
        break;
    }
    log_z += next.log_step_weight_mean;
    if (functional) {
      out.fos = fos_update(*out.fos, current, next, model, *functional);
      report(next);
    }
    if (options.keep_history) {
      out.history.push_back(std::move(current));
    }
    current = std::move(next);
  }
  if (next_report != options.report_times.size()) {
    throw PreconditionError("forward pass: report times beyond the horizon or not ascending");
  }
  out.history.push_back(std::move(current));
  out.log_z = log_z;
  if (functional) out.fos_value = fos_estimate(*out.fos, out.final_cloud());
  return out;
}

}  // namespace abcsmooth
