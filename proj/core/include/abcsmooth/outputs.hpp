#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "abcsmooth/harness.hpp"

namespace abcsmooth {

inline constexpr const char* kRecordsHeader =
    "method,N,epsilon,replicate,error,walltime_ms,degenerate_flag";
inline constexpr const char* kSummaryHeader =
    "method,N,epsilon,n,replicates,degenerate,mean_error,se_error,estimate_se,mean_walltime_ms";

struct OutputOptions {
  bool figures = true;
};

/// Shortest round-trip-safe text for a double (17 significant digits); "nan" for NaN.
std::string format_real(double value);

void write_records(std::ostream& os, std::span<const ErrorRecord> records);
void write_records_by_time(std::ostream& os, std::span<const ErrorRecord> records);
void write_summary(std::ostream& os, std::span<const SummaryRow> summaries);
void write_estimates(std::ostream& os, std::span<const ErrorRecord> records);
void write_truth(std::ostream& os, const Truth& truth);
void write_decomposition(std::ostream& os, std::span<const DecompositionRow> rows);

/// Reads a file written by write_records (time is 0) or write_records_by_time.
std::vector<ErrorRecord> read_records(std::istream& is);

enum class FigureValue { mean_error, se_error };

/// Mean (with ±SE bars) or SE of the error against N, one curve per method, at one time.
void write_figure_vs_particles(std::ostream& os, std::span<const SummaryRow> summaries,
                               FigureValue value, const std::string& title);
/// Mean error ±SE against the time index, one curve per (method, N).
void write_figure_vs_time(std::ostream& os, std::span<const SummaryRow> summaries,
                          const std::string& title);

/// Writes records.csv, summary.csv and, when enabled, the figure files. Records at the
/// latest time go to records.csv; with several times records_time.csv holds them all.
void emit_outputs(std::span<const ErrorRecord> records, std::span<const SummaryRow> summaries,
                  const std::filesystem::path& destination, const OutputOptions& options = {});

/// emit_outputs plus truth, estimates, calibration, decomposition and chain files.
void emit_experiment(const ExperimentResult& result, const std::filesystem::path& destination,
                     const OutputOptions& options = {});

}  // namespace abcsmooth
