#include "hhhfl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <utility>

#include "hhhfl/rng.hpp"

namespace hhhfl {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::int64_t parse_int_field(std::string_view field, const char* what,
                             std::size_t line_no) {
    field = trim(field);
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw parse_error(std::string(what) + " field is not an integer: '" +
                          std::string(field) + "'", line_no);
    }
    return value;
}

double parse_double_field(std::string_view field, std::size_t line_no) {
    field = trim(field);
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw parse_error("sample is not a number: '" + std::string(field) + "'",
                          line_no);
    }
    if (!std::isfinite(value)) {
        throw parse_error("sample is not finite: '" + std::string(field) + "'", line_no);
    }
    return value;
}

std::string render_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

void z_normalize_inplace(std::vector<double>& x) {
    if (x.empty()) return;
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n);
    if (sd < 1e-12) sd = 1.0;
    for (double& v : x) v = (v - mean) / sd;
}

std::string device_name(DeviceKind kind) {
    switch (kind) {
        case DeviceKind::MW: return "MW";
        case DeviceKind::EP: return "EP";
        case DeviceKind::MU: return "MU";
    }
    return "??";
}

DeviceKind parse_device(const std::string& tag, std::size_t line_no) {
    if (tag == "MW") return DeviceKind::MW;
    if (tag == "EP") return DeviceKind::EP;
    if (tag == "MU") return DeviceKind::MU;
    throw parse_error("unknown device tag '" + tag + "'", line_no);
}

DeviceConfig default_device_config(DeviceKind kind) {
    DeviceConfig cfg;
    cfg.kind = kind;
    switch (kind) {
        case DeviceKind::MW:
            cfg.channel_names = {"FP1"};
            cfg.sampling_rate_hz = 512;
            cfg.input_dim = 1024;
            break;
        case DeviceKind::EP:
            cfg.channel_names = {"AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
                                 "O2", "P8", "T8", "FC6", "F4", "F8", "AF4"};
            cfg.sampling_rate_hz = 128;
            cfg.input_dim = 440;
            break;
        case DeviceKind::MU:
            cfg.channel_names = {"TP9", "FP1", "FP2", "TP10"};
            cfg.sampling_rate_hz = 220;
            cfg.input_dim = 512;
            break;
    }
    return cfg;
}

EegRecord parse_mindbigdata_line(const std::string& line, std::size_t line_no) {
    if (trim(line).empty()) {
        throw parse_error("empty line", line_no);
    }
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    if (!rest.empty() && rest.back() == '\n') rest.remove_suffix(1);
    if (!rest.empty() && rest.back() == '\r') rest.remove_suffix(1);
    while (true) {
        const std::size_t tab = rest.find('\t');
        if (tab == std::string_view::npos) {
            fields.push_back(rest);
            break;
        }
        fields.push_back(rest.substr(0, tab));
        rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 7) {
        throw parse_error("expected 7 tab-separated fields, got " +
                          std::to_string(fields.size()), line_no);
    }

    EegRecord rec;
    rec.record_id = parse_int_field(fields[0], "id", line_no);
    rec.event_id = parse_int_field(fields[1], "event", line_no);
    rec.device = parse_device(std::string(trim(fields[2])), line_no);
    rec.channel = std::string(trim(fields[3]));
    if (rec.channel.empty()) {
        throw parse_error("empty channel name", line_no);
    }
    const std::int64_t code = parse_int_field(fields[4], "code", line_no);
    if (code < -1 || code > 9) {
        throw parse_error("code " + std::to_string(code) + " outside [-1, 9]", line_no);
    }
    rec.code = static_cast<int>(code);
    const std::int64_t size = parse_int_field(fields[5], "size", line_no);
    if (size < 0) {
        throw parse_error("negative size field", line_no);
    }
    rec.size = static_cast<std::size_t>(size);

    std::string_view data = trim(fields[6]);
    if (!data.empty()) {
        rec.samples.reserve(std::min<std::size_t>(rec.size, 1 << 20));
        while (true) {
            const std::size_t comma = data.find(',');
            if (comma == std::string_view::npos) {
                rec.samples.push_back(parse_double_field(data, line_no));
                break;
            }
            rec.samples.push_back(parse_double_field(data.substr(0, comma), line_no));
            data.remove_prefix(comma + 1);
        }
    }
    if (rec.samples.size() != rec.size) {
        throw parse_error("size field says " + std::to_string(rec.size) +
                          " samples, found " + std::to_string(rec.samples.size()),
                          line_no);
    }
    return rec;
}

std::string serialize_record(const EegRecord& record) {
    std::string out;
    out += std::to_string(record.record_id);
    out += '\t';
    out += std::to_string(record.event_id);
    out += '\t';
    out += device_name(record.device);
    out += '\t';
    out += record.channel;
    out += '\t';
    out += std::to_string(record.code);
    out += '\t';
    out += std::to_string(record.size);
    out += '\t';
    for (std::size_t i = 0; i < record.samples.size(); ++i) {
        if (i) out += ',';
        out += render_double(record.samples[i]);
    }
    return out;
}

AssemblyResult assemble_events(const std::vector<EegRecord>& records,
                               const std::map<DeviceKind, DeviceConfig>& configs) {
    AssemblyResult result;
    std::map<std::pair<int, std::int64_t>, std::vector<const EegRecord*>> groups;
    for (const EegRecord& rec : records) {
        auto cfg_it = configs.find(rec.device);
        if (cfg_it == configs.end()) {
            ++result.stats.skipped_unconfigured_device;
            continue;
        }
        const auto& names = cfg_it->second.channel_names;
        if (std::find(names.begin(), names.end(), rec.channel) == names.end()) {
            ++result.stats.skipped_unknown_channel;
            continue;
        }
        groups[{static_cast<int>(rec.device), rec.event_id}].push_back(&rec);
    }
    for (const auto& [key, group] : groups) {
        const DeviceKind device = static_cast<DeviceKind>(key.first);
        const DeviceConfig& cfg = configs.at(device);

        bool duplicate = false;
        bool conflict = false;
        std::map<std::string, const EegRecord*> by_channel;
        for (const EegRecord* rec : group) {
            if (!by_channel.emplace(rec->channel, rec).second) duplicate = true;
            if (rec->code != group.front()->code) conflict = true;
        }
        if (duplicate) {
            ++result.stats.dropped_duplicate_channel;
            continue;
        }
        if (conflict) {
            ++result.stats.dropped_code_conflict;
            continue;
        }
        bool complete = true;
        for (const std::string& name : cfg.channel_names) {
            if (!by_channel.count(name)) {
                complete = false;
                break;
            }
        }
        if (!complete) {
            ++result.stats.dropped_incomplete;
            continue;
        }
        EegEvent event;
        event.event_id = key.second;
        event.device = device;
        event.code = group.front()->code;
        for (const auto& [name, rec] : by_channel) {
            event.channels.emplace(name, rec->samples);
        }
        result.events.push_back(std::move(event));
        ++result.stats.events;
    }
    return result;
}

std::vector<double> resample_linear(const std::vector<double>& samples,
                                    std::size_t out_len) {
    if (samples.empty()) {
        throw data_error("resample_linear: empty input");
    }
    if (out_len == 0) {
        throw config_error("resample_linear: zero output length");
    }
    if (samples.size() == out_len) {
        return samples;
    }
    std::vector<double> out(out_len);
    if (samples.size() == 1) {
        std::fill(out.begin(), out.end(), samples[0]);
        return out;
    }
    if (out_len == 1) {
        out[0] = samples[0];
        return out;
    }
    const double scale = static_cast<double>(samples.size() - 1) /
                         static_cast<double>(out_len - 1);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double pos = static_cast<double>(i) * scale;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= samples.size() - 1) lo = samples.size() - 2;
        const double frac = pos - static_cast<double>(lo);
        out[i] = samples[lo] * (1.0 - frac) + samples[lo + 1] * frac;
    }
    return out;
}

LabeledExample preprocess(const EegEvent& event, const DeviceConfig& config) {
    if (event.device != config.kind) {
        throw config_error("preprocess: event device " + device_name(event.device) +
                           " does not match config " + device_name(config.kind));
    }
    if (config.channel_names.empty() || config.input_dim == 0) {
        throw config_error("preprocess: config has no channels or zero input_dim");
    }
    const std::size_t per_channel = config.input_dim / config.channel_names.size();
    if (per_channel == 0) {
        throw config_error("preprocess: input_dim " + std::to_string(config.input_dim) +
                           " smaller than channel count");
    }
    std::vector<double> concat;
    concat.reserve(per_channel * config.channel_names.size());
    for (const std::string& name : config.channel_names) {
        auto it = event.channels.find(name);
        if (it == event.channels.end()) {
            throw data_error("preprocess: event " + std::to_string(event.event_id) +
                             " is missing channel " + name);
        }
        if (it->second.empty()) {
            throw data_error("preprocess: event " + std::to_string(event.event_id) +
                             " has empty channel " + name);
        }
        const std::vector<double> res = resample_linear(it->second, per_channel);
        concat.insert(concat.end(), res.begin(), res.end());
    }
    LabeledExample ex;
    ex.features = resample_linear(concat, config.input_dim);
    z_normalize_inplace(ex.features);
    ex.label = (event.code >= 0 && event.code <= 9) ? 1 : 0;
    ex.device = config.kind;
    return ex;
}

SplitResult split_dataset(const std::map<DeviceKind, std::vector<LabeledExample>>& examples,
                          int clients_per_device, double test_fraction,
                          std::uint64_t seed) {
    if (clients_per_device < 1) {
        throw config_error("split_dataset: clients_per_device must be >= 1");
    }
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0)) {
        throw config_error("split_dataset: test_fraction must be in (0, 1)");
    }
    SplitResult result;
    int next_client_id = 0;
    for (DeviceKind device : kAllDevices) {
        auto it = examples.find(device);
        if (it == examples.end()) continue;
        const auto& all = it->second;
        const std::size_t n = all.size();
        if (n < static_cast<std::size_t>(clients_per_device) + 1) {
            throw config_error("split_dataset: device " + device_name(device) + " has " +
                               std::to_string(n) + " examples, needs at least " +
                               std::to_string(clients_per_device + 1));
        }
        // Stratify: shuffle each label group separately, hold out a
        // largest-remainder share of each, round-robin the rest.
        std::vector<std::vector<const LabeledExample*>> by_label(2);
        for (const LabeledExample& ex : all) {
            by_label[ex.label == 1 ? 1 : 0].push_back(&ex);
        }
        for (int label = 0; label < 2; ++label) {
            Rng rng(mix_seed({seed, 0x5b117ULL, static_cast<std::uint64_t>(device),
                              static_cast<std::uint64_t>(label)}));
            rng.shuffle(by_label[label]);
        }
        const std::size_t test_total =
            static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 1e-9));
        if (test_total == 0) {
            throw config_error("split_dataset: device " + device_name(device) +
                               " gets an empty test holdout; raise test_fraction or "
                               "add examples");
        }
        std::size_t take[2];
        double frac[2];
        std::size_t base_sum = 0;
        for (int label = 0; label < 2; ++label) {
            const double ideal = test_fraction * static_cast<double>(by_label[label].size());
            take[label] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
            frac[label] = ideal - static_cast<double>(take[label]);
            base_sum += take[label];
        }
        for (std::size_t extra = base_sum; extra < test_total; ++extra) {
            const int label = (frac[1] > frac[0]) ? 1 : 0;
            if (take[label] < by_label[label].size()) {
                ++take[label];
                frac[label] = -1.0;
            } else {
                ++take[1 - label];
            }
        }

        std::vector<ClientShard> shards(static_cast<std::size_t>(clients_per_device));
        for (int c = 0; c < clients_per_device; ++c) {
            shards[static_cast<std::size_t>(c)].client_id = next_client_id + c;
            shards[static_cast<std::size_t>(c)].device = device;
        }
        auto& test_set = result.test_sets[device];
        for (int label = 0; label < 2; ++label) {
            const auto& group = by_label[label];
            for (std::size_t i = 0; i < group.size(); ++i) {
                if (i < take[label]) {
                    test_set.push_back(*group[i]);
                } else {
                    const std::size_t c = (i - take[label]) %
                                          static_cast<std::size_t>(clients_per_device);
                    shards[c].train.push_back(*group[i]);
                }
            }
        }
        for (const ClientShard& shard : shards) {
            if (shard.train.empty()) {
                throw config_error("split_dataset: device " + device_name(device) +
                                   " has too few examples for " +
                                   std::to_string(clients_per_device) +
                                   " clients after the test holdout");
            }
        }
        next_client_id += clients_per_device;
        for (ClientShard& shard : shards) {
            result.shards.push_back(std::move(shard));
        }
    }
    if (result.shards.empty()) {
        throw config_error("split_dataset: no examples for any device");
    }
    return result;
}

std::vector<EegRecord> parse_stream(std::istream& in,
                                    const std::map<DeviceKind, DeviceConfig>& configs,
                                    IngestStats& stats) {
    std::vector<EegRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        ++stats.lines;
        if (line.empty() || line == "\r") continue;
        try {
            EegRecord rec = parse_mindbigdata_line(line, stats.lines);
            if (!configs.count(rec.device)) {
                ++stats.skipped_other_device;
                continue;
            }
            ++stats.parsed;
            records.push_back(std::move(rec));
        } catch (const parse_error&) {
            ++stats.parse_errors;
        }
    }
    return records;
}

IngestResult ingest_files(const std::vector<std::string>& paths,
                          const std::map<DeviceKind, DeviceConfig>& configs) {
    IngestResult result;
    std::vector<EegRecord> records;
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw data_error("cannot open input file: " + path);
        }
        auto chunk = parse_stream(in, configs, result.stats);
        records.insert(records.end(), std::make_move_iterator(chunk.begin()),
                       std::make_move_iterator(chunk.end()));
    }
    AssemblyResult assembled = assemble_events(records, configs);
    result.stats.assembly = assembled.stats;
    for (const EegEvent& event : assembled.events) {
        try {
            result.examples[event.device].push_back(
                preprocess(event, configs.at(event.device)));
        } catch (const data_error&) {
            ++result.stats.preprocess_rejects;
        }
    }
    return result;
}

namespace {

constexpr char kCacheMagic[8] = {'H', 'H', 'F', 'L', 'D', 'S', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw serialization_error("dataset cache: truncated file");
}

} // namespace

void save_dataset_cache(const std::string& path,
                        const std::map<DeviceKind, std::vector<LabeledExample>>& examples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw serialization_error("cannot open cache file for writing: " + path);
    }
    out.write(kCacheMagic, sizeof(kCacheMagic));
    write_pod(out, static_cast<std::uint32_t>(examples.size()));
    for (const auto& [device, exs] : examples) {
        write_pod(out, static_cast<std::uint8_t>(device));
        write_pod(out, static_cast<std::uint64_t>(exs.size()));
        const std::uint64_t dim = exs.empty() ? 0 : exs.front().features.size();
        write_pod(out, dim);
        for (const LabeledExample& ex : exs) {
            if (ex.features.size() != dim) {
                throw serialization_error("dataset cache: ragged feature lengths for " +
                                          device_name(device));
            }
            write_pod(out, static_cast<std::uint8_t>(ex.label));
            out.write(reinterpret_cast<const char*>(ex.features.data()),
                      static_cast<std::streamsize>(dim * sizeof(double)));
        }
    }
    if (!out) {
        throw serialization_error("failed writing cache file: " + path);
    }
}

std::map<DeviceKind, std::vector<LabeledExample>> load_dataset_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw serialization_error("cannot open cache file: " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(kCacheMagic)) != 0) {
        throw serialization_error("dataset cache: bad magic/version in " + path);
    }
    std::uint32_t device_count = 0;
    read_pod(in, device_count);
    if (device_count > 3) {
        throw serialization_error("dataset cache: implausible device count");
    }
    std::map<DeviceKind, std::vector<LabeledExample>> result;
    for (std::uint32_t d = 0; d < device_count; ++d) {
        std::uint8_t kind_raw = 0;
        std::uint64_t count = 0, dim = 0;
        read_pod(in, kind_raw);
        if (kind_raw > 2) {
            throw serialization_error("dataset cache: unknown device id " +
                                      std::to_string(int(kind_raw)));
        }
        const DeviceKind device = static_cast<DeviceKind>(kind_raw);
        read_pod(in, count);
        read_pod(in, dim);
        auto& exs = result[device];
        exs.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint8_t label = 0;
            read_pod(in, label);
            if (label > 1) {
                throw serialization_error("dataset cache: bad label value");
            }
            LabeledExample ex;
            ex.device = device;
            ex.label = label;
            ex.features.resize(dim);
            in.read(reinterpret_cast<char*>(ex.features.data()),
                    static_cast<std::streamsize>(dim * sizeof(double)));
            if (!in) throw serialization_error("dataset cache: truncated file");
            exs.push_back(std::move(ex));
        }
    }
    return result;
}

} // namespace hhhfl
