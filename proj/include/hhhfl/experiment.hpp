#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hhhfl/config.hpp"
#include "hhhfl/federation.hpp"

namespace hhhfl {

struct RunOptions {
    bool log_messages = false; // write messages.jsonl next to the CSV
    bool timings = false;      // write real durations; breaks byte-for-byte
                               // reproducibility across runs, so off by default
    bool quiet = false;        // suppress per-round console progress
};

struct ExperimentResult {
    std::vector<RoundReport> reports;
    std::map<DeviceKind, double> final_accuracy;
    double final_pooled_accuracy = 0.0;
    double best_pooled_accuracy = 0.0;
    int rounds_to_090_of_best = 0; // first round reaching 90% of the best
    std::string csv_path;
    std::string summary_path;
    std::string message_log_path; // empty unless log_messages
};

// Resolves the experiment's data per its source (generate, ingest or load
// cache) and applies the optional class balancing. Throws data_error when a
// configured device ends up with no usable examples.
std::map<DeviceKind, std::vector<LabeledExample>> load_experiment_data(
    const ExperimentConfig& config);

// Device configs as the experiment sees them (synthetic dims come from the
// synthetic spec, real data uses the defaults, cache dims come from the file).
std::map<DeviceKind, DeviceConfig> experiment_device_configs(
    const ExperimentConfig& config,
    const std::map<DeviceKind, std::vector<LabeledExample>>& data);

// Full pipeline: data -> split -> federation rounds -> metrics.csv +
// summary.json under config.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const RunOptions& options = {});

// Renders one CSV cell stream per report; exposed for the reduction-law
// check, which compares baseline and single-device runs row by row.
std::string csv_header_row(const std::vector<DeviceKind>& devices);
std::string csv_data_row(const RoundReport& report, const std::vector<DeviceKind>& devices,
                         bool timings);

struct RunSummary {
    std::string label; // method:DEV+DEV
    std::string method;
    std::vector<DeviceKind> devices;
    std::uint64_t seed = 0;
    std::map<DeviceKind, double> final_accuracy;
    double final_pooled_accuracy = 0.0;
    double best_pooled_accuracy = 0.0;
    int rounds_to_090_of_best = 0;
    int rounds = 0;
};

struct ComparisonTable {
    std::string text;         // aligned table
    std::string machine_json; // same content as JSON
    std::vector<RunSummary> runs;
};

// Reads metrics CSVs (with their provenance headers) and builds an aligned
// per-device comparison of final/best accuracy and the convergence proxy.
// Malformed input throws parse_error with the line number.
ComparisonTable summarize(const std::vector<std::string>& csv_paths);

// Shortest round-trip decimal rendering used in every text output.
std::string format_double(double v);

} // namespace hhhfl
