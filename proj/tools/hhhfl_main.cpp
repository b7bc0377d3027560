// Command-line front end: ingest raw recordings, run experiments, compare
// metric files, and run the built-in verification suites.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hhhfl/config.hpp"
#include "hhhfl/data.hpp"
#include "hhhfl/errors.hpp"
#include "hhhfl/experiment.hpp"
#include "hhhfl/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitProtocol = 4;

int print_checks(const std::vector<hhhfl::CheckResult>& checks) {
    bool all_ok = true;
    for (const hhhfl::CheckResult& c : checks) {
        const char* tag = c.skipped ? "SKIP" : (c.pass ? "PASS" : "FAIL");
        std::cout << "[" << tag << "] " << c.name;
        if (!c.detail.empty()) std::cout << ": " << c.detail;
        std::cout << "\n";
        if (!c.pass && !c.skipped) all_ok = false;
    }
    return all_ok ? kExitOk : kExitFailure;
}

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& out_path,
               const std::vector<std::string>& device_tags) {
    std::map<hhhfl::DeviceKind, hhhfl::DeviceConfig> configs;
    if (device_tags.empty()) {
        for (hhhfl::DeviceKind device : hhhfl::kAllDevices) {
            configs.emplace(device, hhhfl::default_device_config(device));
        }
    } else {
        for (const std::string& tag : device_tags) {
            const hhhfl::DeviceKind device = hhhfl::parse_device(tag);
            configs.emplace(device, hhhfl::default_device_config(device));
        }
    }
    hhhfl::IngestResult result = hhhfl::ingest_files(inputs, configs);
    const auto& s = result.stats;
    std::cout << "lines " << s.lines << ", parsed " << s.parsed << ", parse errors "
              << s.parse_errors << ", other-device " << s.skipped_other_device << "\n";
    std::cout << "events " << s.assembly.events << ", dropped incomplete "
              << s.assembly.dropped_incomplete << ", code conflicts "
              << s.assembly.dropped_code_conflict << ", duplicate channels "
              << s.assembly.dropped_duplicate_channel << ", unknown channels "
              << s.assembly.skipped_unknown_channel << ", preprocess rejects "
              << s.preprocess_rejects << "\n";
    std::size_t total = 0;
    for (const auto& [device, examples] : result.examples) {
        std::cout << "  " << hhhfl::device_name(device) << ": " << examples.size()
                  << " examples\n";
        total += examples.size();
    }
    if (total == 0) {
        throw hhhfl::data_error("no usable events in the given files");
    }
    hhhfl::save_dataset_cache(out_path, result.examples);
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& out_override,
            long long seed_override, bool log_messages, bool timings) {
    hhhfl::ExperimentConfig config = hhhfl::load_config(config_path);
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) config.out_dir = out_override;

    hhhfl::RunOptions options;
    options.log_messages = log_messages;
    options.timings = timings;

    hhhfl::ExperimentResult result = hhhfl::run_experiment(config, options);

    std::cout << "final pooled accuracy " << hhhfl::format_double(result.final_pooled_accuracy)
              << ", best " << hhhfl::format_double(result.best_pooled_accuracy)
              << ", reached 90% of best at round " << result.rounds_to_090_of_best << "\n";
    std::cout << "wrote " << result.csv_path << " and " << result.summary_path << "\n";
    if (!result.message_log_path.empty()) {
        std::cout << "wrote " << result.message_log_path << "\n";
    }
    return kExitOk;
}

int cmd_summarize(const std::vector<std::string>& csvs, const std::string& out_json) {
    hhhfl::ComparisonTable table = hhhfl::summarize(csvs);
    std::cout << table.text;
    if (!out_json.empty()) {
        std::ofstream out(out_json, std::ios::trunc);
        if (!out) {
            throw hhhfl::data_error("cannot open output file: " + out_json);
        }
        out << table.machine_json << "\n";
        std::cout << "wrote " << out_json << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hhhfl: heterogeneous federated EEG classification simulator"};
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "parse raw recordings into a dataset cache");
    std::vector<std::string> ingest_inputs;
    std::string ingest_out = "dataset.bin";
    std::vector<std::string> ingest_devices;
    ingest->add_option("files", ingest_inputs, "raw record files")->required();
    ingest->add_option("--out", ingest_out, "cache file to write");
    ingest->add_option("--devices", ingest_devices, "device tags to keep (default: all)");

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    std::string run_config;
    std::string run_out;
    long long run_seed = -1;
    bool run_log_messages = false;
    bool run_timings = false;
    run->add_option("--config", run_config, "experiment config (JSON)")->required();
    run->add_option("--seed", run_seed, "override the config seed");
    run->add_option("--out", run_out, "override the output directory");
    run->add_flag("--log-messages", run_log_messages, "write messages.jsonl");
    run->add_flag("--timings", run_timings,
                  "write real round durations into the CSV (breaks byte-for-byte "
                  "reproducibility across runs)");

    auto* summ = app.add_subcommand("summarize", "compare metric CSVs across runs");
    std::vector<std::string> summ_csvs;
    std::string summ_out;
    summ->add_option("csvs", summ_csvs, "metrics.csv files")->required();
    summ->add_option("--out", summ_out, "also write the comparison as JSON");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient self-test");
    auto* selftest = app.add_subcommand("selftest", "run the full property suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            return cmd_ingest(ingest_inputs, ingest_out, ingest_devices);
        }
        if (run->parsed()) {
            return cmd_run(run_config, run_out, run_seed, run_log_messages, run_timings);
        }
        if (summ->parsed()) {
            return cmd_summarize(summ_csvs, summ_out);
        }
        if (gradcheck->parsed()) {
            return print_checks({hhhfl::check_gradient_correctness()});
        }
        if (selftest->parsed()) {
            return print_checks(hhhfl::run_selftest_checks());
        }
    } catch (const hhhfl::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const hhhfl::parse_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const hhhfl::data_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const hhhfl::serialization_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const hhhfl::protocol_error& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const hhhfl::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
