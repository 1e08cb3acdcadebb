// abcsmooth: command line front end for the experiment harness.
//
//   abcsmooth smooth    [config] [--preset NAME] [--seed S] [--out DIR] [--dump-cloud T]
//   abcsmooth pmmh      [config] [--preset NAME] [--seed S] [--out DIR]
//   abcsmooth calibrate [config] [--preset NAME] [--seed S] [--out DIR]
//   abcsmooth truth     [config] [--preset NAME] [--seed S] [--out DIR]
//   abcsmooth report    [--out DIR]
//
// Exit status: 0 success, 2 configuration error, 3 calibration failure, 1 anything else.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "abcsmooth/abc.hpp"
#include "abcsmooth/config.hpp"
#include "abcsmooth/errors.hpp"
#include "abcsmooth/forward_pass.hpp"
#include "abcsmooth/harness.hpp"
#include "abcsmooth/outputs.hpp"

namespace fs = std::filesystem;
using namespace abcsmooth;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCalibration = 3;

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("config", args.config_path, "key = value configuration file");
  cmd->add_option("--preset", args.preset, "named preset applied before the config file");
  cmd->add_option("--seed", args.seed, "master seed (overrides experiment.seed)");
  cmd->add_option("--out", args.out, "output directory")->capture_default_str();
}

ExperimentConfig load_config(const CommonArgs& args) {
  KeyValueConfig kv;
  if (!args.preset.empty()) kv.merge(preset(args.preset));
  if (!args.config_path.empty()) kv.merge(KeyValueConfig::load(args.config_path));
  if (args.seed) kv.set("experiment.seed", std::to_string(*args.seed));
  return ExperimentConfig::from_config(kv);
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + dir.string());
}

void print_summary(const std::vector<SummaryRow>& rows) {
  write_summary(std::cout, rows);
}

void check_methods(const ExperimentConfig& config, bool want_pmmh) {
  for (const Method m : config.methods) {
    if (is_pmmh(m) != want_pmmh) {
      throw ConfigError(std::string("method ") + std::string(method_name(m)) + " belongs to the " +
                        (is_pmmh(m) ? "pmmh" : "smooth") + " subcommand");
    }
  }
}

// Writes the particle cloud of one exact or ABC pass at time `t`, for inspection.
void dump_cloud_at(const ExperimentConfig& config, const ExperimentResult& result, std::size_t t,
                   const fs::path& out) {
  if (t > config.horizon) throw ConfigError("--dump-cloud time beyond data.horizon");
  const Method method = config.methods.front();
  const std::size_t n = config.particles.front();
  ForwardPassOptions opts;
  opts.policy = config.policy;
  opts.keep_history = true;
  if (uses_abc(method)) {
    const double eps = config.epsilon ? *config.epsilon : result.calibrations.at(n).epsilon;
    opts.kernel = config.kernel_shape == KernelShape::gaussian ? AbcKernel::gaussian(eps)
                                                               : AbcKernel::indicator(eps);
    opts.variant = method == Method::rsmc_abc ? SmcVariant::rsmc : SmcVariant::abc;
  }
  const auto model = make_model(config);
  RandomStream stream(derive_seed(config.seed, {hash_tag("cloud"), n}));
  const auto pass = run_forward_pass(*model, result.data.observations, n, opts, stream);
  const auto path = out / ("cloud_" + std::to_string(t) + ".txt");
  std::ofstream os(path);
  if (!os) throw OutputError("cannot write " + path.string());
  dump_cloud(os, pass.history.at(t));
}

int run_smooth(const CommonArgs& args, std::optional<std::size_t> dump_time) {
  const auto config = load_config(args);
  check_methods(config, false);
  const auto result = run_experiment(config);
  emit_experiment(result, args.out, OutputOptions{config.figures});
  if (dump_time) dump_cloud_at(config, result, *dump_time, args.out);
  print_summary(result.summaries);
  return 0;
}

int run_pmmh(const CommonArgs& args) {
  const auto config = load_config(args);
  check_methods(config, true);
  const auto result = run_experiment(config);
  emit_experiment(result, args.out, OutputOptions{config.figures});
  print_summary(result.summaries);
  return 0;
}

int run_calibrate(const CommonArgs& args) {
  const auto config = load_config(args);
  if (config.epsilon) throw ConfigError("abc.epsilon is fixed; nothing to calibrate");
  const auto data = experiment_data(config);
  auto calibrations = calibrate(config, data);
  if (calibrations.empty()) throw ConfigError("no ABC method configured; nothing to calibrate");
  ensure_directory(args.out);
  std::ofstream eps_file(fs::path(args.out) / "epsilon.csv");
  eps_file << "N,epsilon\n";
  for (const auto& [n, cal] : calibrations) {
    eps_file << n << ',' << format_real(cal.epsilon) << '\n';
    std::ofstream log(fs::path(args.out) / ("calibration_N" + std::to_string(n) + ".csv"));
    write_calibration_log(log, cal.log);
    std::cout << "N=" << n << " epsilon=" << format_real(cal.epsilon) << '\n';
  }
  if (!eps_file) throw OutputError("cannot write epsilon.csv");
  return 0;
}

int run_truth(const CommonArgs& args) {
  const auto config = load_config(args);
  const auto truth = compute_truth(config);
  ensure_directory(args.out);
  std::ofstream os(fs::path(args.out) / "truth.csv");
  write_truth(os, truth);
  if (!os) throw OutputError("cannot write truth.csv");
  write_truth(std::cout, truth);
  return 0;
}

int run_report(const std::string& dir, bool figures) {
  const fs::path base(dir);
  fs::path source = base / "records_time.csv";
  if (!fs::exists(source)) source = base / "records.csv";
  std::ifstream is(source);
  if (!is) throw ConfigError("no records file in " + dir);
  const auto records = read_records(is);
  if (records.empty()) throw ConfigError("records file " + source.string() + " has no rows");
  const auto summaries = summarize(records);
  emit_outputs(records, summaries, base, OutputOptions{figures});
  print_summary(summaries);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ABC smoothing and PMMH experiments for hidden Markov models"};
  app.require_subcommand(1);

  CommonArgs smooth_args, pmmh_args, calibrate_args, truth_args;
  std::optional<std::size_t> dump_time;
  auto* smooth = app.add_subcommand("smooth", "replicated SMC smoothing runs against a truth");
  add_common(smooth, smooth_args);
  smooth->add_option("--dump-cloud", dump_time, "write the particle cloud at this time index");

  auto* pmmh = app.add_subcommand("pmmh", "replicated PMMH runs with FOS or path post-processing");
  add_common(pmmh, pmmh_args);

  auto* calibrate_cmd = app.add_subcommand("calibrate", "select the ABC tolerance per N");
  add_common(calibrate_cmd, calibrate_args);

  auto* truth = app.add_subcommand("truth", "compute the reference smoothing expectation");
  add_common(truth, truth_args);

  std::string report_dir = "out";
  bool report_figures = true;
  auto* report = app.add_subcommand("report", "rebuild summary and figures from a records file");
  report->add_option("--out", report_dir, "directory holding records.csv")->capture_default_str();
  report->add_flag("!--no-figures", report_figures, "skip the SVG figures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*smooth) return run_smooth(smooth_args, dump_time);
    if (*pmmh) return run_pmmh(pmmh_args);
    if (*calibrate_cmd) return run_calibrate(calibrate_args);
    if (*truth) return run_truth(truth_args);
    if (*report) return run_report(report_dir, report_figures);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CalibrationError& e) {
    std::cerr << "calibration failed: " << e.what() << '\n';
    return kExitCalibration;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
