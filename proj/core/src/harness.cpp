#include "abcsmooth/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>
#include <utility>

#include "abcsmooth/errors.hpp"
#include "abcsmooth/forward_pass.hpp"
#include "abcsmooth/functional.hpp"
#include "abcsmooth/oracles.hpp"

namespace abcsmooth {

namespace {

constexpr std::string_view kMethodNames[] = {"smc_exact", "smc_abc", "rsmc_abc", "pmmh_exact",
                                             "pmmh_abc"};

const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys{
      "model.id",          "model.dim",           "model.sigma_x2",      "model.sigma_y2",
      "model.a",           "model.c",             "model.q",             "model.r",
      "model.m0",          "model.p0",            "data.horizon",        "data.seed",
      "functional.id",     "experiment.methods",  "experiment.particles", "experiment.replicates",
      "experiment.seed",   "experiment.report_times", "smc.resample",    "smc.ess_threshold",
      "abc.kernel",        "abc.epsilon",         "abc.epsilon_grid",    "abc.calibration_trials",
      "truth.source",      "truth.particles",     "truth.replicates",    "truth.grid_points",
      "pmmh.iterations",   "pmmh.burn_in",        "pmmh.scales",         "pmmh.prior_shape",
      "pmmh.prior_scale",  "pmmh.estimators",     "pmmh.path_particles", "pmmh.theta0",
      "output.figures",    "output.measure_walltime", "output.chains"};
  return keys;
}

template <class Enum, std::size_t K>
Enum parse_enum(std::string_view key, const std::string& value,
                const std::pair<std::string_view, Enum> (&table)[K]) {
  for (const auto& [name, e] : table) {
    if (name == value) return e;
  }
  std::string allowed;
  for (const auto& [name, e] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError("config key '" + std::string(key) + "': unknown value '" + value +
                    "' (expected one of " + allowed + ")");
}

constexpr std::pair<std::string_view, ModelId> kModels[] = {
    {"benchmark", ModelId::benchmark}, {"linear_gaussian", ModelId::linear_gaussian}};
constexpr std::pair<std::string_view, FunctionalId> kFunctionals[] = {
    {"time_average", FunctionalId::time_average}, {"sum", FunctionalId::sum}};
constexpr std::pair<std::string_view, TruthSource> kTruths[] = {
    {"kalman", TruthSource::kalman},
    {"grid", TruthSource::grid},
    {"reference_run", TruthSource::reference_run}};
constexpr std::pair<std::string_view, KernelShape> kKernels[] = {
    {"indicator", KernelShape::indicator_l1}, {"gaussian", KernelShape::gaussian}};
constexpr std::pair<std::string_view, ChainEstimator> kEstimators[] = {
    {"fos", ChainEstimator::fos}, {"path", ChainEstimator::path}};

// Presets. Values at desk scale fit a single core in minutes; full_* use the full-size grids
// and replicate counts.
constexpr std::pair<std::string_view, std::string_view> kPresets[] = {
    {"desk_fig1",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_exact,smc_abc\nexperiment.particles = 100:100:1000\n"
     "experiment.replicates = 20\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 2000\ntruth.replicates = 20\n"},
    {"full_fig1",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_exact,smc_abc\nexperiment.particles = 100:100:1000\n"
     "experiment.replicates = 50\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 5000\ntruth.replicates = 50\n"},
    {"desk_fig3",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_abc,rsmc_abc\nexperiment.particles = 400,700,1000\n"
     "experiment.replicates = 20\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 2000\ntruth.replicates = 20\n"},
    {"full_fig3",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_abc,rsmc_abc\nexperiment.particles = 100:100:1000\n"
     "experiment.replicates = 50\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 5000\ntruth.replicates = 50\n"},
    {"desk_fig4",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_abc\nexperiment.particles = 1000\n"
     "experiment.report_times = 10:10:100\nexperiment.replicates = 20\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 2000\ntruth.replicates = 20\n"},
    {"full_fig4",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 100\nfunctional.id = time_average\n"
     "experiment.methods = smc_abc\nexperiment.particles = 1000\n"
     "experiment.report_times = 10:10:100\nexperiment.replicates = 50\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 5000\ntruth.replicates = 50\n"},
    {"desk_pmmh",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 50\nfunctional.id = time_average\n"
     "experiment.methods = pmmh_exact\nexperiment.particles = 100\n"
     "experiment.replicates = 20\npmmh.estimators = fos,path\npmmh.path_particles = 4427\n"
     "pmmh.iterations = 1000\npmmh.burn_in = 250\n"
     "truth.source = reference_run\ntruth.particles = 2000\ntruth.replicates = 20\n"},
    {"full_pmmh",
     "model.id = benchmark\nmodel.dim = 1\ndata.horizon = 50\nfunctional.id = time_average\n"
     "experiment.methods = pmmh_exact,pmmh_abc\nexperiment.particles = 100:100:500\n"
     "experiment.replicates = 50\npmmh.estimators = fos,path\n"
     "pmmh.path_particles = 4427,17139,39020,68258,107007\n"
     "pmmh.iterations = 50000\npmmh.burn_in = 10000\nabc.kernel = indicator\n"
     "truth.source = reference_run\ntruth.particles = 5000\ntruth.replicates = 50\n"},
    {"lg_check",
     "model.id = linear_gaussian\nmodel.dim = 1\ndata.horizon = 20\nfunctional.id = time_average\n"
     "experiment.methods = smc_exact,smc_abc\nexperiment.particles = 100,400\n"
     "experiment.replicates = 20\nabc.kernel = gaussian\nabc.epsilon = 0.5\n"
     "truth.source = kalman\n"},
};

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (const double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (const double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

std::vector<Vector> prefix(const std::vector<Vector>& ys, std::size_t time) {
  return {ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(time + 1)};
}

Vector scaled(Vector v, double s) {
  for (auto& x : v) x *= s;
  return v;
}

// Sum over p <= time of E[X_p | y_{0:time}] from a Kalman pass on the prefix.
Vector kalman_sum(const LinearGaussianParams& params, const std::vector<Vector>& ys,
                  std::size_t time) {
  const auto y = prefix(ys, time);
  const auto k = kalman_rts(params, y);
  Vector out(ys.front().size(), 0.0);
  for (const auto& m : k.smoothed_means) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += m[j];
  }
  return out;
}

std::optional<double> cell_epsilon(const ExperimentConfig& config, Method method, std::size_t n,
                                   const std::map<std::size_t, CalibrationResult>& calibrations) {
  if (!uses_abc(method)) return std::nullopt;
  if (config.epsilon) return config.epsilon;
  return calibrations.at(n).epsilon;
}

AbcKernel kernel_for(const ExperimentConfig& config, double eps) {
  return config.kernel_shape == KernelShape::gaussian ? AbcKernel::gaussian(eps)
                                                      : AbcKernel::indicator(eps);
}

// One unit of work: a (method, estimator, N, replicate) combination.
struct Cell {
  Method method = Method::smc_exact;
  ChainEstimator estimator = ChainEstimator::fos;
  std::string label;
  std::size_t particles = 0;
  std::optional<double> epsilon;
  std::size_t replicate = 0;
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& config,
                                  const std::map<std::size_t, CalibrationResult>& calibrations) {
  std::vector<Cell> cells;
  for (const Method m : config.methods) {
    if (!is_pmmh(m)) {
      for (const std::size_t n : config.particles) {
        const auto eps = cell_epsilon(config, m, n, calibrations);
        for (std::size_t r = 0; r < config.replicates; ++r) {
          cells.push_back({m, ChainEstimator::fos, std::string(method_name(m)), n, eps, r});
        }
      }
      continue;
    }
    for (const ChainEstimator est : config.pmmh_estimators) {
      for (std::size_t k = 0; k < config.particles.size(); ++k) {
        const std::size_t n = est == ChainEstimator::path && !config.pmmh_path_particles.empty()
                                  ? config.pmmh_path_particles[k]
                                  : config.particles[k];
        const auto eps = cell_epsilon(config, m, n, calibrations);
        const std::string label =
            std::string(method_name(m)) + (est == ChainEstimator::fos ? "_fos" : "_path");
        for (std::size_t r = 0; r < config.replicates; ++r) {
          cells.push_back({m, est, label, n, eps, r});
        }
      }
    }
  }
  return cells;
}

std::uint64_t cell_seed(const ExperimentConfig& config, const Cell& cell) {
  return derive_seed(config.seed, {hash_tag(cell.label), cell.particles,
                                   bits_of(cell.epsilon.value_or(0.0)), cell.replicate});
}

struct CellOutput {
  std::vector<Vector> estimates;  ///< one per report time, empty when degenerate
  bool degenerate = false;
  std::vector<PmmhChainState> chain;
};

CellOutput run_smoothing_cell(const ExperimentConfig& config, const HmmModel& model,
                              const std::vector<Vector>& ys, const Cell& cell,
                              RandomStream& stream) {
  const auto functional = AdditiveFunctional::mean_state(config.dim, 1.0);
  ForwardPassOptions opts;
  opts.policy = config.policy;
  opts.functional = &functional;
  opts.report_times = config.times();
  switch (cell.method) {
    case Method::smc_exact: opts.variant = SmcVariant::exact; break;
    case Method::smc_abc: opts.variant = SmcVariant::abc; break;
    case Method::rsmc_abc: opts.variant = SmcVariant::rsmc; break;
    default: throw PreconditionError("not a smoothing method");
  }
  if (cell.epsilon) opts.kernel = kernel_for(config, *cell.epsilon);

  CellOutput out;
  try {
    const auto pass = run_forward_pass(model, ys, cell.particles, opts, stream);
    for (std::size_t k = 0; k < pass.reported.size(); ++k) {
      out.estimates.push_back(scaled(pass.reported[k], config.functional_scale(opts.report_times[k])));
    }
  } catch (const DegenerateWeightsError&) {
    out.degenerate = true;
  } catch (const DegenerateBackwardKernelError&) {
    out.degenerate = true;
  }
  return out;
}

CellOutput run_pmmh_cell(const ExperimentConfig& config, const std::vector<Vector>& ys,
                         const ThetaVector& theta0, const Cell& cell, RandomStream& stream) {
  PmmhOptions opts;
  opts.mode = cell.method == Method::pmmh_abc ? PmmhMode::abc : PmmhMode::exact;
  opts.policy = config.policy;
  opts.n_particles = cell.particles;
  opts.functional = std::make_shared<const AdditiveFunctional>(
      AdditiveFunctional::mean_state(config.dim, config.functional_scale(config.horizon)));
  opts.use_fos = cell.estimator == ChainEstimator::fos;
  if (cell.epsilon) opts.kernel = kernel_for(config, *cell.epsilon);

  const PmmhSampler sampler(make_model_family(config),
                            PriorSpec::inverse_gamma(theta0.size(), config.prior_shape,
                                                     config.prior_scale),
                            ProposalSpec{config.pmmh_scales, true}, ys, opts);
  CellOutput out;
  try {
    auto chain = sampler.run(theta0, config.pmmh_iterations, stream);
    out.estimates.push_back(cell.estimator == ChainEstimator::fos
                                ? pmmh_fos_estimate(chain, config.pmmh_burn_in)
                                : pmmh_path_estimate(chain, config.pmmh_burn_in));
    if (config.write_chains) out.chain = std::move(chain);
  } catch (const DegenerateWeightsError&) {
    out.degenerate = true;
  } catch (const DegenerateBackwardKernelError&) {
    out.degenerate = true;
  }
  return out;
}

}  // namespace

std::string_view method_name(Method method) { return kMethodNames[static_cast<int>(method)]; }

Method parse_method(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

bool is_pmmh(Method method) { return method == Method::pmmh_exact || method == Method::pmmh_abc; }

bool uses_abc(Method method) {
  return method == Method::smc_abc || method == Method::rsmc_abc || method == Method::pmmh_abc;
}

std::string_view truth_source_name(TruthSource source) {
  for (const auto& [name, s] : kTruths) {
    if (s == source) return name;
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  if (const auto v = kv.get("model.id")) c.model = parse_enum("model.id", *v, kModels);
  c.dim = kv.get_size("model.dim", c.dim);
  c.sigma_x2 = kv.get_double("model.sigma_x2", c.sigma_x2);
  c.sigma_y2 = kv.get_double("model.sigma_y2", c.sigma_y2);
  c.lg.a = kv.get_double("model.a", c.lg.a);
  c.lg.c = kv.get_double("model.c", c.lg.c);
  c.lg.q = kv.get_double("model.q", c.lg.q);
  c.lg.r = kv.get_double("model.r", c.lg.r);
  c.lg.m0 = kv.get_double("model.m0", c.lg.m0);
  c.lg.p0 = kv.get_double("model.p0", c.lg.p0);

  c.horizon = kv.get_size("data.horizon", c.horizon);
  if (kv.has("data.seed")) c.data_seed = kv.get_u64("data.seed", 0);
  if (const auto v = kv.get("functional.id")) c.functional = parse_enum("functional.id", *v, kFunctionals);

  if (kv.has("experiment.methods")) {
    c.methods.clear();
    for (const auto& name : kv.get_strings("experiment.methods", {})) {
      c.methods.push_back(parse_method(name));
    }
  }
  c.particles = kv.get_sizes("experiment.particles", c.particles);
  c.replicates = kv.get_size("experiment.replicates", c.replicates);
  c.seed = kv.get_u64("experiment.seed", c.seed);
  c.report_times = kv.get_sizes("experiment.report_times", c.report_times);

  const auto resample = kv.get_string("smc.resample", "ess");
  const double threshold = kv.get_double("smc.ess_threshold", 0.5);
  if (resample == "ess") {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("smc.ess_threshold must lie in (0, 1]");
    c.policy = ResamplePolicy::ess_below(threshold);
  } else if (resample == "every") {
    c.policy = ResamplePolicy::every_step();
  } else if (resample == "never") {
    c.policy = ResamplePolicy::never();
  } else {
    throw ConfigError("smc.resample must be ess, every or never");
  }

  if (const auto v = kv.get("abc.kernel")) c.kernel_shape = parse_enum("abc.kernel", *v, kKernels);
  if (kv.has("abc.epsilon")) c.epsilon = kv.get_double("abc.epsilon", 1.0);
  c.epsilon_grid = kv.get_doubles("abc.epsilon_grid", c.epsilon_grid);
  c.calibration_trials = kv.get_size("abc.calibration_trials", c.calibration_trials);

  if (const auto v = kv.get("truth.source")) c.truth = parse_enum("truth.source", *v, kTruths);
  c.truth_particles = kv.get_size("truth.particles", c.truth_particles);
  c.truth_replicates = kv.get_size("truth.replicates", c.truth_replicates);
  c.truth_grid_points = kv.get_size("truth.grid_points", c.truth_grid_points);

  c.pmmh_iterations = kv.get_size("pmmh.iterations", c.pmmh_iterations);
  c.pmmh_burn_in = kv.get_size("pmmh.burn_in", c.pmmh_burn_in);
  c.pmmh_scales = kv.get_doubles("pmmh.scales", c.pmmh_scales);
  c.prior_shape = kv.get_double("pmmh.prior_shape", c.prior_shape);
  c.prior_scale = kv.get_double("pmmh.prior_scale", c.prior_scale);
  if (kv.has("pmmh.estimators")) {
    c.pmmh_estimators.clear();
    for (const auto& name : kv.get_strings("pmmh.estimators", {})) {
      c.pmmh_estimators.push_back(parse_enum("pmmh.estimators", name, kEstimators));
    }
  }
  c.pmmh_path_particles = kv.get_sizes("pmmh.path_particles", c.pmmh_path_particles);
  c.pmmh_theta0 = kv.get_doubles("pmmh.theta0", c.pmmh_theta0);

  c.figures = kv.get_bool("output.figures", c.figures);
  c.measure_walltime = kv.get_bool("output.measure_walltime", c.measure_walltime);
  c.write_chains = kv.get_bool("output.chains", c.write_chains);

  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (dim == 0) throw ConfigError("model.dim must be positive");
  if (model == ModelId::benchmark && !(sigma_x2 > 0.0 && sigma_y2 > 0.0)) {
    throw ConfigError("benchmark variances must be positive");
  }
  if (model == ModelId::linear_gaussian && !(lg.q > 0.0 && lg.r > 0.0 && lg.p0 >= 0.0)) {
    throw ConfigError("linear-Gaussian model needs q > 0, r > 0 and p0 >= 0");
  }
  if (methods.empty()) throw ConfigError("experiment.methods is empty");
  if (particles.empty()) throw ConfigError("experiment.particles is empty");
  if (std::find(particles.begin(), particles.end(), 0) != particles.end()) {
    throw ConfigError("experiment.particles must be positive");
  }
  if (replicates == 0) throw ConfigError("experiment.replicates must be at least 1");
  if (!report_times.empty()) {
    for (std::size_t k = 1; k < report_times.size(); ++k) {
      if (report_times[k] <= report_times[k - 1]) {
        throw ConfigError("experiment.report_times must be strictly increasing");
      }
    }
    if (report_times.back() != horizon) {
      throw ConfigError("experiment.report_times must end at data.horizon");
    }
  }
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("abc.epsilon must be positive");
  if (!epsilon) {
    if (epsilon_grid.empty()) throw ConfigError("abc.epsilon_grid is empty");
    for (std::size_t k = 0; k < epsilon_grid.size(); ++k) {
      if (!(epsilon_grid[k] > 0.0) || (k > 0 && !(epsilon_grid[k] < epsilon_grid[k - 1]))) {
        throw ConfigError("abc.epsilon_grid must be positive and strictly decreasing");
      }
    }
    if (calibration_trials == 0) throw ConfigError("abc.calibration_trials must be positive");
  }
  const bool any_rsmc = std::find(methods.begin(), methods.end(), Method::rsmc_abc) != methods.end();
  if (any_rsmc && kernel_shape != KernelShape::indicator_l1) {
    throw ConfigError("rsmc_abc requires abc.kernel = indicator");
  }

  switch (truth) {
    case TruthSource::kalman:
      if (model != ModelId::linear_gaussian) {
        throw ConfigError("truth.source = kalman needs model.id = linear_gaussian");
      }
      break;
    case TruthSource::grid:
      if (dim != 1) throw ConfigError("truth.source = grid needs model.dim = 1");
      if (truth_grid_points < 3) throw ConfigError("truth.grid_points must be at least 3");
      break;
    case TruthSource::reference_run:
      if (truth_particles == 0 || truth_replicates == 0) {
        throw ConfigError("truth.particles and truth.replicates must be positive");
      }
      break;
  }

  const bool any_pmmh = std::any_of(methods.begin(), methods.end(), is_pmmh);
  if (any_pmmh) {
    if (pmmh_iterations == 0 || pmmh_burn_in >= pmmh_iterations) {
      throw ConfigError("pmmh.burn_in must be smaller than pmmh.iterations");
    }
    if (pmmh_scales.size() != 2) throw ConfigError("pmmh.scales needs one scale per parameter (2)");
    for (const double s : pmmh_scales) {
      if (s < 0.0) throw ConfigError("pmmh.scales must be non-negative");
    }
    if (!(prior_shape > 0.0 && prior_scale > 0.0)) {
      throw ConfigError("pmmh prior hyperparameters must be positive");
    }
    if (pmmh_estimators.empty()) throw ConfigError("pmmh.estimators is empty");
    if (!pmmh_path_particles.empty() && pmmh_path_particles.size() != particles.size()) {
      throw ConfigError("pmmh.path_particles must match experiment.particles in length");
    }
    if (!pmmh_theta0.empty() && pmmh_theta0.size() != 2) {
      throw ConfigError("pmmh.theta0 needs two values");
    }
    for (const double t : pmmh_theta0) {
      if (!(t > 0.0)) throw ConfigError("pmmh.theta0 must be positive");
    }
  }
}

std::vector<std::size_t> ExperimentConfig::times() const {
  return report_times.empty() ? std::vector<std::size_t>{horizon} : report_times;
}

double ExperimentConfig::functional_scale(std::size_t time) const {
  return functional == FunctionalId::time_average ? 1.0 / static_cast<double>(time + 1) : 1.0;
}

KeyValueConfig preset(std::string_view name) {
  for (const auto& [n, text] : kPresets) {
    if (n == name) return KeyValueConfig::parse(text);
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& [n, text] : kPresets) out.emplace_back(n);
  return out;
}

std::shared_ptr<const HmmModel> make_model(const ExperimentConfig& config) {
  if (config.model == ModelId::benchmark) {
    return std::make_shared<NonlinearGrowthModel>(config.dim, config.sigma_x2, config.sigma_y2);
  }
  return std::make_shared<LinearGaussianModel>(config.dim, config.lg);
}

ModelFamily make_model_family(const ExperimentConfig& config) {
  if (config.model == ModelId::benchmark) {
    const std::size_t dim = config.dim;
    return [dim](const ThetaVector& theta) -> std::shared_ptr<const HmmModel> {
      return std::make_shared<NonlinearGrowthModel>(dim, theta[0], theta[1]);
    };
  }
  const std::size_t dim = config.dim;
  const LinearGaussianParams base = config.lg;
  return [dim, base](const ThetaVector& theta) -> std::shared_ptr<const HmmModel> {
    LinearGaussianParams p = base;
    p.q = theta[0];
    p.r = theta[1];
    return std::make_shared<LinearGaussianModel>(dim, p);
  };
}

Trajectory experiment_data(const ExperimentConfig& config) {
  const auto model = make_model(config);
  const std::uint64_t seed = config.data_seed.value_or(derive_seed(config.seed, {hash_tag("data")}));
  return simulate(*model, config.horizon, seed);
}

double l1_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw PreconditionError("l1_error: dimension mismatch");
  if (estimate.empty()) throw PreconditionError("l1_error: empty vectors");
  double s = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) s += std::abs(estimate[k] - truth[k]);
  return s / static_cast<double>(estimate.size());
}

std::size_t Truth::index_of(std::size_t time) const {
  const auto it = std::find(times.begin(), times.end(), time);
  if (it == times.end()) throw PreconditionError("truth not available at time " + std::to_string(time));
  return static_cast<std::size_t>(it - times.begin());
}

Truth compute_truth(const ExperimentConfig& config, const Trajectory& data) {
  config.validate();
  Truth truth;
  truth.source = config.truth;
  truth.times = config.times();
  const auto& ys = data.observations;
  if (ys.size() < config.horizon + 1) throw PreconditionError("compute_truth: data shorter than horizon");
  const auto model = make_model(config);

  switch (config.truth) {
    case TruthSource::kalman: {
      for (const std::size_t t : truth.times) {
        truth.values.push_back(scaled(kalman_sum(config.lg, ys, t), config.functional_scale(t)));
        truth.standard_errors.emplace_back(config.dim, 0.0);
      }
      break;
    }
    case TruthSource::grid: {
      const auto functional = AdditiveFunctional::mean_state(1, 1.0);
      for (const std::size_t t : truth.times) {
        const auto y = prefix(ys, t);
        RandomStream pilot(derive_seed(config.seed, {hash_tag("grid"), t}));
        const auto grid = auto_grid(*model, y, pilot, config.truth_grid_points);
        const auto res = grid_oracle(*model, y, functional, grid);
        truth.values.push_back(scaled(res.expectation, config.functional_scale(t)));
        truth.standard_errors.emplace_back(1, 0.0);
      }
      break;
    }
    case TruthSource::reference_run: {
      const std::size_t reps = config.truth_replicates;
      std::vector<std::vector<Vector>> runs(reps);
      const auto functional = AdditiveFunctional::mean_state(config.dim, 1.0);
      parallel_for(reps, worker_count(), [&](std::size_t r) {
        RandomStream stream(derive_seed(config.seed, {hash_tag("truth"), config.truth_particles, r}));
        ForwardPassOptions opts;
        opts.policy = config.policy;
        opts.functional = &functional;
        opts.report_times = truth.times;
        try {
          runs[r] = run_forward_pass(*model, ys, config.truth_particles, opts, stream).reported;
        } catch (const DegenerateWeightsError& e) {
          throw AccuracyError(std::string("reference run degenerated: ") + e.what());
        }
      });
      for (std::size_t k = 0; k < truth.times.size(); ++k) {
        const double scale = config.functional_scale(truth.times[k]);
        Vector mean(config.dim), se(config.dim);
        std::vector<double> column(reps);
        for (std::size_t j = 0; j < config.dim; ++j) {
          for (std::size_t r = 0; r < reps; ++r) column[r] = runs[r][k][j] * scale;
          mean[j] = mean_of(column);
          se[j] = standard_error(column);
        }
        truth.values.push_back(std::move(mean));
        truth.standard_errors.push_back(std::move(se));
      }
      break;
    }
  }
  return truth;
}

Truth compute_truth(const ExperimentConfig& config) {
  return compute_truth(config, experiment_data(config));
}

std::vector<SummaryRow> summarize(std::span<const ErrorRecord> records) {
  // Groups keep the order in which they first appear.
  using Key = std::tuple<std::string, std::size_t, std::optional<double>, std::size_t>;
  std::vector<Key> order;
  std::map<Key, std::vector<const ErrorRecord*>> groups;
  for (const auto& rec : records) {
    Key key{rec.method, rec.particles, rec.epsilon, rec.time};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&rec);
  }

  std::vector<SummaryRow> out;
  for (const auto& key : order) {
    const auto& members = groups.at(key);
    SummaryRow row;
    std::tie(row.method, row.particles, row.epsilon, row.time) = key;
    std::vector<double> errors, walltimes;
    std::vector<const ErrorRecord*> ok;
    for (const auto* rec : members) {
      walltimes.push_back(rec->walltime_ms);
      if (rec->degenerate) {
        ++row.degenerate;
      } else {
        errors.push_back(rec->error);
        ok.push_back(rec);
      }
    }
    row.replicates = errors.size();
    row.mean_walltime_ms = mean_of(walltimes);
    if (errors.empty()) {
      row.mean_error = row.se_error = row.estimate_se = std::nan("");
    } else {
      row.mean_error = mean_of(errors);
      row.se_error = standard_error(errors);
      const std::size_t d = ok.front()->estimate.size();
      double se_sum = 0.0;
      std::vector<double> column(ok.size());
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t r = 0; r < ok.size(); ++r) column[r] = ok[r]->estimate[j];
        se_sum += standard_error(column);
      }
      row.estimate_se = se_sum / static_cast<double>(d);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("ABCSMOOTH_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("ABCSMOOTH_WORKERS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& task) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

std::map<std::size_t, CalibrationResult> calibrate(const ExperimentConfig& config,
                                                   const Trajectory& data) {
  std::map<std::size_t, CalibrationResult> out;
  if (config.epsilon) return out;
  std::set<std::size_t> sizes;
  for (const Method m : config.methods) {
    if (!uses_abc(m)) continue;
    sizes.insert(config.particles.begin(), config.particles.end());
    const bool path = is_pmmh(m) && std::find(config.pmmh_estimators.begin(),
                                              config.pmmh_estimators.end(),
                                              ChainEstimator::path) != config.pmmh_estimators.end();
    if (path) sizes.insert(config.pmmh_path_particles.begin(), config.pmmh_path_particles.end());
  }
  if (sizes.empty()) return out;

  const auto model = make_model(config);
  EpsilonCalibration cal;
  cal.grid = config.epsilon_grid;
  cal.trials = config.calibration_trials;
  cal.shape = config.kernel_shape;
  cal.sampler = AbcSampler::smc;
  cal.policy = config.policy;

  const std::vector<std::size_t> list(sizes.begin(), sizes.end());
  std::vector<CalibrationResult> results(list.size());
  parallel_for(list.size(), worker_count(), [&](std::size_t k) {
    RandomStream stream(derive_seed(config.seed, {hash_tag("calibration"), list[k]}));
    results[k] = calibrate_epsilon(*model, data.observations, list[k], cal, stream);
  });
  for (std::size_t k = 0; k < list.size(); ++k) out.emplace(list[k], std::move(results[k]));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  auto data = experiment_data(config);
  auto truth = compute_truth(config, data);
  return run_experiment(config, data, truth);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Trajectory& data,
                                const Truth& truth) {
  config.validate();
  ExperimentResult result;
  result.config = config;
  result.data = data;
  result.truth = truth;
  result.calibrations = calibrate(config, data);

  const auto model = make_model(config);
  const auto times = config.times();
  const ThetaVector theta0 =
      config.pmmh_theta0.empty() ? model->theta()
                                 : ThetaVector(model->theta().names(), config.pmmh_theta0);
  const auto cells = enumerate_cells(config, result.calibrations);
  const auto& ys = data.observations;

  std::vector<CellOutput> outputs(cells.size());
  std::vector<double> walltimes(cells.size(), 0.0);
  parallel_for(cells.size(), worker_count(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    RandomStream stream(cell_seed(config, cell));
    const auto start = std::chrono::steady_clock::now();
    outputs[i] = is_pmmh(cell.method) ? run_pmmh_cell(config, ys, theta0, cell, stream)
                                      : run_smoothing_cell(config, *model, ys, cell, stream);
    if (config.measure_walltime) {
      walltimes[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                         .count();
    }
  });

  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    const auto& out = outputs[i];
    const std::vector<std::size_t> cell_times =
        is_pmmh(cell.method) ? std::vector<std::size_t>{config.horizon} : times;
    for (std::size_t k = 0; k < cell_times.size(); ++k) {
      ErrorRecord rec;
      rec.method = cell.label;
      rec.particles = cell.particles;
      rec.epsilon = cell.epsilon;
      rec.replicate = cell.replicate;
      rec.time = cell_times[k];
      rec.truth = truth.values[truth.index_of(rec.time)];
      rec.walltime_ms = walltimes[i];
      rec.degenerate = out.degenerate;
      if (out.degenerate) {
        rec.error = std::nan("");
      } else {
        rec.estimate = out.estimates[k];
        rec.error = l1_error(rec.estimate, rec.truth);
      }
      result.records.push_back(std::move(rec));
    }
    if (!out.chain.empty()) {
      result.chains.push_back({cell.label, cell.particles, cell.replicate, out.chain});
    }
  }
  result.summaries = summarize(result.records);

  // With a Gaussian kernel on the linear-Gaussian model the ABC target is itself a
  // linear-Gaussian model, so the ABC and Monte Carlo parts of the error separate exactly.
  if (config.model == ModelId::linear_gaussian && config.kernel_shape == KernelShape::gaussian &&
      config.truth == TruthSource::kalman) {
    std::map<std::pair<double, std::size_t>, Vector> aux_cache;
    for (const auto& row : result.summaries) {
      if (!row.epsilon || row.replicates == 0) continue;
      const auto key = std::make_pair(*row.epsilon, row.time);
      auto it = aux_cache.find(key);
      if (it == aux_cache.end()) {
        const auto inflated = inflate_observation_noise(config.lg, AbcKernel::gaussian(*row.epsilon));
        it = aux_cache
                 .emplace(key, scaled(kalman_sum(inflated, ys, row.time), config.functional_scale(row.time)))
                 .first;
      }
      const Vector& aux = it->second;
      DecompositionRow d;
      d.method = row.method;
      d.particles = row.particles;
      d.epsilon = *row.epsilon;
      d.time = row.time;
      d.abc_error = l1_error(aux, truth.values[truth.index_of(row.time)]);
      std::vector<double> smc_errors, totals;
      for (const auto& rec : result.records) {
        if (rec.degenerate || rec.method != row.method || rec.particles != row.particles ||
            rec.time != row.time || rec.epsilon != row.epsilon) {
          continue;
        }
        smc_errors.push_back(l1_error(rec.estimate, aux));
        totals.push_back(rec.error);
      }
      d.mean_smc_error = mean_of(smc_errors);
      d.se_smc_error = standard_error(smc_errors);
      d.mean_total_error = mean_of(totals);
      d.se_total_error = standard_error(totals);
      result.decomposition.push_back(std::move(d));
    }
  }
  return result;
}

}  // namespace abcsmooth
