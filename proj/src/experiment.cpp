#include "hhhfl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "hhhfl/errors.hpp"
#include "hhhfl/rng.hpp"

namespace hhhfl {

namespace {

using nlohmann::json;

std::string devices_tag(const std::vector<DeviceKind>& devices) {
    std::string out;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        if (i) out += '+';
        out += device_name(devices[i]);
    }
    return out;
}

std::vector<std::pair<DeviceKind, DeviceKind>> device_pairs(
    const std::vector<DeviceKind>& devices) {
    std::vector<std::pair<DeviceKind, DeviceKind>> pairs;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        for (std::size_t j = i + 1; j < devices.size(); ++j) {
            pairs.push_back(device_pair(devices[i], devices[j]));
        }
    }
    return pairs;
}

void balance_device(std::vector<LabeledExample>& examples, std::uint64_t seed,
                    DeviceKind device) {
    std::vector<std::size_t> zeros, ones;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        (examples[i].label == 0 ? zeros : ones).push_back(i);
    }
    if (zeros.empty() || ones.empty() || zeros.size() == ones.size()) return;
    auto& majority = zeros.size() > ones.size() ? zeros : ones;
    const std::size_t keep = std::min(zeros.size(), ones.size());
    Rng rng(mix_seed({seed, 0xBA1AULL, static_cast<std::uint64_t>(device)}));
    rng.shuffle(majority);
    majority.resize(keep);
    std::vector<bool> kept(examples.size(), false);
    auto& minority = zeros.size() > ones.size() ? ones : zeros;
    for (std::size_t i : majority) kept[i] = true;
    for (std::size_t i : minority) kept[i] = true;
    std::vector<LabeledExample> out;
    out.reserve(2 * keep);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (kept[i]) out.push_back(std::move(examples[i]));
    }
    examples = std::move(out);
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::map<DeviceKind, std::vector<LabeledExample>> load_experiment_data(
    const ExperimentConfig& config) {
    std::map<DeviceKind, std::vector<LabeledExample>> data;
    if (config.source == DataSource::synthetic) {
        data = generate_synthetic(config.synthetic, config.seed);
    } else if (config.source == DataSource::mindbigdata) {
        std::map<DeviceKind, DeviceConfig> configs;
        for (DeviceKind device : config.devices) {
            configs.emplace(device, default_device_config(device));
        }
        IngestResult ingest = ingest_files(config.data_paths, configs);
        data = std::move(ingest.examples);
    } else {
        auto cached = load_dataset_cache(config.cache_path);
        for (DeviceKind device : config.devices) {
            auto it = cached.find(device);
            if (it != cached.end()) data.emplace(device, std::move(it->second));
        }
    }
    for (DeviceKind device : config.devices) {
        auto it = data.find(device);
        if (it == data.end() || it->second.empty()) {
            throw data_error("no usable events for configured device " +
                             device_name(device));
        }
    }
    // Drop devices the experiment does not use (a cache or raw file may
    // contain more).
    for (auto it = data.begin(); it != data.end();) {
        if (std::find(config.devices.begin(), config.devices.end(), it->first) ==
            config.devices.end()) {
            it = data.erase(it);
        } else {
            ++it;
        }
    }
    if (config.balance_classes) {
        for (auto& [device, examples] : data) {
            balance_device(examples, config.seed, device);
        }
    }
    return data;
}

std::map<DeviceKind, DeviceConfig> experiment_device_configs(
    const ExperimentConfig& config,
    const std::map<DeviceKind, std::vector<LabeledExample>>& data) {
    std::map<DeviceKind, DeviceConfig> configs;
    for (DeviceKind device : config.devices) {
        DeviceConfig dc = default_device_config(device);
        if (config.source == DataSource::synthetic || config.source == DataSource::cache) {
            dc.input_dim = data.at(device).front().features.size();
        }
        configs.emplace(device, dc);
    }
    return configs;
}

std::string csv_header_row(const std::vector<DeviceKind>& devices) {
    std::string row = "round";
    for (DeviceKind device : devices) {
        row += ",acc_" + device_name(device);
    }
    row += ",acc_pooled,train_loss";
    for (const auto& pair : device_pairs(devices)) {
        row += ",mmd_" + device_name(pair.first) + "_" + device_name(pair.second);
    }
    row += ",duration_ms";
    return row;
}

std::string csv_data_row(const RoundReport& report, const std::vector<DeviceKind>& devices,
                         bool timings) {
    std::string row = std::to_string(report.round);
    for (DeviceKind device : devices) {
        row += ',';
        auto it = report.accuracy.find(device);
        row += format_double(it == report.accuracy.end() ? 0.0 : it->second);
    }
    row += ',';
    row += format_double(report.pooled_accuracy);
    row += ',';
    row += format_double(report.mean_train_loss);
    for (const auto& pair : device_pairs(devices)) {
        row += ',';
        auto it = report.pairwise_mmd.find(pair);
        row += format_double(it == report.pairwise_mmd.end() ? 0.0 : it->second);
    }
    row += ',';
    row += timings ? format_double(report.duration_ms) : "0";
    return row;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    auto data = load_experiment_data(config);
    auto device_configs = experiment_device_configs(config, data);
    SplitResult split = split_dataset(data, config.clients_per_device,
                                      config.test_fraction, config.seed);

    std::filesystem::create_directories(config.out_dir);
    ExperimentResult result;
    result.csv_path = config.out_dir + "/metrics.csv";
    result.summary_path = config.out_dir + "/summary.json";

    std::ofstream csv(result.csv_path, std::ios::trunc);
    if (!csv) {
        throw data_error("cannot open metrics CSV for writing: " + result.csv_path);
    }
    csv << "# hhhfl-metrics v1 method=" << method_name(config.method)
        << " devices=" << devices_tag(config.devices) << " seed=" << config.seed
        << " config=" << config.config_hash << "\n";
    csv << csv_header_row(config.devices) << "\n";

    auto on_round = [&](const RoundReport& report) {
        csv << csv_data_row(report, config.devices, options.timings) << "\n";
        if (!options.quiet &&
            (report.round == 1 || report.round % 10 == 0 ||
             report.round == config.hyper.rounds)) {
            std::cout << "round " << report.round << "/" << config.hyper.rounds
                      << " pooled_acc=" << format_double(report.pooled_accuracy)
                      << " train_loss=" << format_double(report.mean_train_loss) << "\n";
        }
    };

    MessageLog captured_log;
    if (config.method == Method::baseline) {
        const DeviceKind device = config.devices.front();
        result.reports = run_baseline(device_configs.at(device), std::move(split),
                                      config.hyper, config.seed, on_round);
    } else {
        Federation fed(device_configs, std::move(split), config.hyper,
                       make_mmd_config(config), config.seed, /*exchange_enabled=*/true);
        result.reports = fed.run_all(on_round);
        captured_log = fed.message_log();
    }
    csv.flush();
    if (!csv) {
        throw data_error("failed writing metrics CSV: " + result.csv_path);
    }

    if (options.log_messages) {
        result.message_log_path = config.out_dir + "/messages.jsonl";
        json meta;
        meta["meta"] = "hhhfl-messages";
        meta["format_version"] = 1;
        meta["method"] = method_name(config.method);
        meta["seed"] = config.seed;
        meta["config_hash"] = config.config_hash;
        captured_log.write_jsonl(result.message_log_path, meta.dump());
    }

    const RoundReport& last = result.reports.back();
    result.final_accuracy = last.accuracy;
    result.final_pooled_accuracy = last.pooled_accuracy;
    for (const RoundReport& r : result.reports) {
        result.best_pooled_accuracy = std::max(result.best_pooled_accuracy, r.pooled_accuracy);
    }
    for (const RoundReport& r : result.reports) {
        if (r.pooled_accuracy >= 0.9 * result.best_pooled_accuracy) {
            result.rounds_to_090_of_best = r.round;
            break;
        }
    }

    json summary;
    summary["format_version"] = 1;
    summary["config_hash"] = config.config_hash;
    summary["seed"] = config.seed;
    summary["method"] = method_name(config.method);
    json devs = json::array();
    for (DeviceKind device : config.devices) devs.push_back(device_name(device));
    summary["devices"] = std::move(devs);
    summary["rounds"] = config.hyper.rounds;
    json fin;
    for (const auto& [device, acc] : result.final_accuracy) {
        fin[device_name(device)] = acc;
    }
    summary["final_accuracy"] = std::move(fin);
    summary["final_pooled_accuracy"] = result.final_pooled_accuracy;
    summary["best_pooled_accuracy"] = result.best_pooled_accuracy;
    summary["rounds_to_090_of_best"] = result.rounds_to_090_of_best;
    summary["final_train_loss"] = last.mean_train_loss;
    json mmd;
    for (const auto& [pair, value] : last.pairwise_mmd) {
        mmd[device_name(pair.first) + "+" + device_name(pair.second)] = value;
    }
    summary["final_mmd"] = std::move(mmd);

    std::ofstream summary_out(result.summary_path, std::ios::trunc);
    if (!summary_out) {
        throw data_error("cannot open summary for writing: " + result.summary_path);
    }
    summary_out << summary.dump(2) << "\n";
    return result;
}

namespace {

struct CsvRun {
    std::string method;
    std::vector<DeviceKind> devices;
    std::uint64_t seed = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

CsvRun parse_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw parse_error("cannot open CSV: " + path);
    }
    CsvRun run;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) {
        throw parse_error("empty CSV: " + path, 1);
    }
    ++line_no;
    if (line.rfind("# hhhfl-metrics v1 ", 0) != 0) {
        throw parse_error("missing provenance header in " + path, line_no);
    }
    std::istringstream header(line.substr(2));
    std::string token;
    while (header >> token) {
        const std::size_t eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "method") {
            run.method = value;
        } else if (key == "devices") {
            std::string tag;
            std::istringstream devs(value);
            while (std::getline(devs, tag, '+')) {
                try {
                    run.devices.push_back(parse_device(tag));
                } catch (const parse_error&) {
                    throw parse_error("bad device tag '" + tag + "' in header", line_no);
                }
            }
        } else if (key == "seed") {
            run.seed = std::strtoull(value.c_str(), nullptr, 10);
        }
    }
    if (run.method.empty() || run.devices.empty()) {
        throw parse_error("provenance header lacks method/devices", line_no);
    }

    if (!std::getline(in, line)) {
        throw parse_error("missing column header", line_no + 1);
    }
    ++line_no;
    {
        std::istringstream cols(line);
        std::string col;
        while (std::getline(cols, col, ',')) run.columns.push_back(col);
    }
    if (run.columns.empty() || run.columns.front() != "round") {
        throw parse_error("first column must be 'round'", line_no);
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            double v = 0.0;
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last) {
                throw parse_error("bad numeric cell '" + cell + "'", line_no);
            }
            row.push_back(v);
        }
        if (row.size() != run.columns.size()) {
            throw parse_error("row has " + std::to_string(row.size()) + " cells, header has " +
                              std::to_string(run.columns.size()), line_no);
        }
        run.rows.push_back(std::move(row));
    }
    if (run.rows.empty()) {
        throw parse_error("CSV has no data rows: " + path, line_no);
    }
    return run;
}

} // namespace

ComparisonTable summarize(const std::vector<std::string>& csv_paths) {
    if (csv_paths.empty()) {
        throw config_error("summarize: no CSV paths given");
    }
    ComparisonTable table;
    std::vector<DeviceKind> all_devices;
    for (const std::string& path : csv_paths) {
        CsvRun run = parse_metrics_csv(path);
        RunSummary rs;
        rs.method = run.method;
        rs.devices = run.devices;
        rs.seed = run.seed;
        rs.label = run.method + ":" + devices_tag(run.devices);
        rs.rounds = static_cast<int>(run.rows.size());

        auto col_index = [&](const std::string& name) -> int {
            for (std::size_t i = 0; i < run.columns.size(); ++i) {
                if (run.columns[i] == name) return static_cast<int>(i);
            }
            return -1;
        };
        const int pooled = col_index("acc_pooled");
        if (pooled < 0) {
            throw parse_error("CSV lacks acc_pooled column: " + path);
        }
        const std::vector<double>& last = run.rows.back();
        rs.final_pooled_accuracy = last[static_cast<std::size_t>(pooled)];
        for (DeviceKind device : run.devices) {
            const int c = col_index("acc_" + device_name(device));
            if (c >= 0) rs.final_accuracy[device] = last[static_cast<std::size_t>(c)];
            if (std::find(all_devices.begin(), all_devices.end(), device) ==
                all_devices.end()) {
                all_devices.push_back(device);
            }
        }
        for (const auto& row : run.rows) {
            rs.best_pooled_accuracy =
                std::max(rs.best_pooled_accuracy, row[static_cast<std::size_t>(pooled)]);
        }
        for (const auto& row : run.rows) {
            if (row[static_cast<std::size_t>(pooled)] >= 0.9 * rs.best_pooled_accuracy) {
                rs.rounds_to_090_of_best = static_cast<int>(row[0]);
                break;
            }
        }
        table.runs.push_back(std::move(rs));
    }
    std::sort(all_devices.begin(), all_devices.end());

    // Text table: metrics down, one column per run.
    std::vector<std::string> metric_names;
    for (DeviceKind device : all_devices) {
        metric_names.push_back("final_acc_" + device_name(device));
    }
    metric_names.push_back("final_acc_pooled");
    metric_names.push_back("best_acc_pooled");
    metric_names.push_back("rounds_to_090_of_best");

    auto cell_for = [&](const RunSummary& rs, const std::string& metric) -> std::string {
        for (DeviceKind device : all_devices) {
            if (metric == "final_acc_" + device_name(device)) {
                auto it = rs.final_accuracy.find(device);
                return it == rs.final_accuracy.end() ? "-" : format_double(it->second);
            }
        }
        if (metric == "final_acc_pooled") return format_double(rs.final_pooled_accuracy);
        if (metric == "best_acc_pooled") return format_double(rs.best_pooled_accuracy);
        return std::to_string(rs.rounds_to_090_of_best);
    };

    std::vector<std::size_t> widths;
    widths.push_back(0);
    for (const std::string& m : metric_names) widths[0] = std::max(widths[0], m.size());
    for (const RunSummary& rs : table.runs) {
        std::size_t w = rs.label.size();
        for (const std::string& m : metric_names) w = std::max(w, cell_for(rs, m).size());
        widths.push_back(w);
    }
    std::ostringstream text;
    auto emit_row = [&](const std::string& head, const std::vector<std::string>& cells) {
        text << head;
        text << std::string(widths[0] - head.size(), ' ');
        for (std::size_t i = 0; i < cells.size(); ++i) {
            text << " | " << cells[i] << std::string(widths[i + 1] - cells[i].size(), ' ');
        }
        text << "\n";
    };
    {
        std::vector<std::string> heads;
        for (const RunSummary& rs : table.runs) heads.push_back(rs.label);
        emit_row("metric", heads);
        std::size_t total = widths[0];
        for (std::size_t i = 1; i < widths.size(); ++i) total += widths[i] + 3;
        text << std::string(total, '-') << "\n";
    }
    for (const std::string& m : metric_names) {
        std::vector<std::string> cells;
        for (const RunSummary& rs : table.runs) cells.push_back(cell_for(rs, m));
        emit_row(m, cells);
    }
    table.text = text.str();

    json machine;
    machine["format_version"] = 1;
    json runs = json::array();
    for (const RunSummary& rs : table.runs) {
        json r;
        r["label"] = rs.label;
        r["method"] = rs.method;
        json devs = json::array();
        for (DeviceKind device : rs.devices) devs.push_back(device_name(device));
        r["devices"] = std::move(devs);
        r["seed"] = rs.seed;
        json fin;
        for (const auto& [device, acc] : rs.final_accuracy) {
            fin[device_name(device)] = acc;
        }
        r["final_accuracy"] = std::move(fin);
        r["final_pooled_accuracy"] = rs.final_pooled_accuracy;
        r["best_pooled_accuracy"] = rs.best_pooled_accuracy;
        r["rounds_to_090_of_best"] = rs.rounds_to_090_of_best;
        r["rounds"] = rs.rounds;
        runs.push_back(std::move(r));
    }
    machine["runs"] = std::move(runs);
    table.machine_json = machine.dump(2);
    return table;
}

} // namespace hhhfl
