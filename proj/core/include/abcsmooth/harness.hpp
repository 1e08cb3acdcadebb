#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/config.hpp"
#include "abcsmooth/model.hpp"
#include "abcsmooth/pmmh.hpp"
#include "abcsmooth/smc.hpp"

namespace abcsmooth {

enum class Method { smc_exact, smc_abc, rsmc_abc, pmmh_exact, pmmh_abc };
enum class ModelId { benchmark, linear_gaussian };
enum class FunctionalId { time_average, sum };
enum class TruthSource { kalman, grid, reference_run };
enum class ChainEstimator { fos, path };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);
bool is_pmmh(Method method);
bool uses_abc(Method method);

std::string_view truth_source_name(TruthSource source);

struct ExperimentConfig {
  ModelId model = ModelId::benchmark;
  std::size_t dim = 1;
  double sigma_x2 = 10.0;
  double sigma_y2 = 1.0;
  LinearGaussianParams lg{};

  std::size_t horizon = 100;
  FunctionalId functional = FunctionalId::time_average;
  std::vector<std::size_t> report_times;  ///< empty means the horizon only

  std::vector<Method> methods{Method::smc_exact};
  std::vector<std::size_t> particles{100};
  std::size_t replicates = 20;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> data_seed;

  ResamplePolicy policy = ResamplePolicy::ess_below(0.5);

  KernelShape kernel_shape = KernelShape::indicator_l1;
  std::optional<double> epsilon;  ///< fixed tolerance; calibrated per N when absent
  std::vector<double> epsilon_grid = EpsilonCalibration::powers_of_two(3, -4);
  std::size_t calibration_trials = 3;

  TruthSource truth = TruthSource::reference_run;
  std::size_t truth_particles = 1000;
  std::size_t truth_replicates = 20;
  std::size_t truth_grid_points = 2001;

  std::size_t pmmh_iterations = 2000;
  std::size_t pmmh_burn_in = 500;
  std::vector<double> pmmh_scales{0.2, 0.2};
  double prior_shape = 2.0;
  double prior_scale = 2.0;
  std::vector<ChainEstimator> pmmh_estimators{ChainEstimator::fos};
  std::vector<std::size_t> pmmh_path_particles;  ///< matched-cost N for the path estimator
  std::vector<double> pmmh_theta0;               ///< defaults to the data-generating theta

  bool figures = true;
  bool measure_walltime = false;
  bool write_chains = false;

  /// Reads every recognised key; unknown keys and invalid values raise ConfigError.
  static ExperimentConfig from_config(const KeyValueConfig& config);

  void validate() const;
  [[nodiscard]] std::vector<std::size_t> times() const;
  [[nodiscard]] double functional_scale(std::size_t time) const;
};

/// Named configurations shipped with the tool (desk-scale and full-size grids).
KeyValueConfig preset(std::string_view name);
std::vector<std::string> preset_names();

std::shared_ptr<const HmmModel> make_model(const ExperimentConfig& config);
ModelFamily make_model_family(const ExperimentConfig& config);
Trajectory experiment_data(const ExperimentConfig& config);

double l1_error(std::span<const double> estimate, std::span<const double> truth);

struct Truth {
  TruthSource source = TruthSource::reference_run;
  std::vector<std::size_t> times;
  std::vector<Vector> values;
  std::vector<Vector> standard_errors;  ///< zero for exact sources

  [[nodiscard]] std::size_t index_of(std::size_t time) const;
};

Truth compute_truth(const ExperimentConfig& config, const Trajectory& data);
Truth compute_truth(const ExperimentConfig& config);

struct ErrorRecord {
  std::string method;
  std::size_t particles = 0;
  std::optional<double> epsilon;
  std::size_t replicate = 0;
  std::size_t time = 0;
  Vector estimate;
  Vector truth;
  double error = 0.0;
  double walltime_ms = 0.0;
  bool degenerate = false;
};

struct SummaryRow {
  std::string method;
  std::size_t particles = 0;
  std::optional<double> epsilon;
  std::size_t time = 0;
  std::size_t replicates = 0;  ///< non-degenerate replicates
  std::size_t degenerate = 0;
  double mean_error = 0.0;
  double se_error = 0.0;
  double estimate_se = 0.0;  ///< dimension-averaged standard error of the estimates
  double mean_walltime_ms = 0.0;
};

std::vector<SummaryRow> summarize(std::span<const ErrorRecord> records);

/// ABC/SMC split of the error, available for the linear-Gaussian model with a Gaussian kernel.
struct DecompositionRow {
  std::string method;
  std::size_t particles = 0;
  double epsilon = 0.0;
  std::size_t time = 0;
  double abc_error = 0.0;
  double mean_smc_error = 0.0;
  double se_smc_error = 0.0;
  double mean_total_error = 0.0;
  double se_total_error = 0.0;
};

struct ChainOutput {
  std::string method;
  std::size_t particles = 0;
  std::size_t replicate = 0;
  std::vector<PmmhChainState> chain;
};

struct ExperimentResult {
  ExperimentConfig config;
  Trajectory data;
  Truth truth;
  std::vector<ErrorRecord> records;
  std::vector<SummaryRow> summaries;
  std::map<std::size_t, CalibrationResult> calibrations;
  std::vector<DecompositionRow> decomposition;
  std::vector<ChainOutput> chains;
};

/// Worker count: ABCSMOOTH_WORKERS when set, otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs task(i) for i in [0, count) on up to `workers` threads. The first exception is
/// rethrown after every worker has stopped.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& task);

std::map<std::size_t, CalibrationResult> calibrate(const ExperimentConfig& config,
                                                   const Trajectory& data);

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const Trajectory& data,
                                const Truth& truth);

}  // namespace abcsmooth
