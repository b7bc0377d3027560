#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hhhfl/errors.hpp"

namespace hhhfl {

// The three EEG headset kinds. The enum order (MW < EP < MU) is the fixed
// iteration order used everywhere determinism matters.
enum class DeviceKind { MW = 0, EP = 1, MU = 2 };

constexpr DeviceKind kAllDevices[] = {DeviceKind::MW, DeviceKind::EP, DeviceKind::MU};

std::string device_name(DeviceKind kind);
// Throws parse_error for tags outside the closed {MW, EP, MU} set.
DeviceKind parse_device(const std::string& tag, std::size_t line_no = 0);

// Per-device-kind metadata.
struct DeviceConfig {
    DeviceKind kind = DeviceKind::MW;
    std::vector<std::string> channel_names;
    int sampling_rate_hz = 0;
    std::size_t input_dim = 0; // fixed feature length fed to the projector
};

// MW: 1 channel @ 512 Hz -> 1024 features; EP: 14 channels @ 128 Hz -> 440;
// MU: 4 channels @ 220 Hz -> 512.
DeviceConfig default_device_config(DeviceKind kind);

// One parsed signal line: a single channel of a single stimulus event.
struct EegRecord {
    std::int64_t record_id = 0;
    std::int64_t event_id = 0;
    DeviceKind device = DeviceKind::MW;
    std::string channel;
    int code = -1; // digit shown (0..9), or -1 for no stimulus
    std::size_t size = 0;
    std::vector<double> samples;

    friend bool operator==(const EegRecord&, const EegRecord&) = default;
};

// One stimulus event with all channels of one device.
struct EegEvent {
    std::int64_t event_id = 0;
    DeviceKind device = DeviceKind::MW;
    int code = -1;
    std::map<std::string, std::vector<double>> channels;
};

// A preprocessed training example: fixed-length, z-normalized features and a
// binary stimulus label.
struct LabeledExample {
    std::vector<double> features;
    int label = 0; // 1 = stimulus (code 0..9), 0 = no stimulus (code -1)
    DeviceKind device = DeviceKind::MW;

    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

// One client's training shard. The per-device test set lives beside the
// shards in SplitResult; shards of the same device are pairwise disjoint.
struct ClientShard {
    int client_id = 0;
    DeviceKind device = DeviceKind::MW;
    std::vector<LabeledExample> train;
};

struct SplitResult {
    std::vector<ClientShard> shards; // ordered by client_id
    std::map<DeviceKind, std::vector<LabeledExample>> test_sets;
};

// Parses one line of the tab-separated record format:
//   id <TAB> event <TAB> device <TAB> channel <TAB> code <TAB> size <TAB> data
// where data is a comma-separated list of decimals (surrounding spaces
// tolerated). Throws parse_error carrying line_no on any malformed field.
EegRecord parse_mindbigdata_line(const std::string& line, std::size_t line_no = 0);

// Renders a record back to its canonical line form: tab-separated fields,
// samples comma-separated in shortest round-trip decimal notation.
std::string serialize_record(const EegRecord& record);

struct AssemblyStats {
    std::size_t events = 0;
    std::size_t dropped_incomplete = 0;     // a configured channel was missing
    std::size_t dropped_code_conflict = 0;  // records of one event disagree on code
    std::size_t dropped_duplicate_channel = 0;
    std::size_t skipped_unknown_channel = 0; // records naming channels not in the config
    std::size_t skipped_unconfigured_device = 0;
};

struct AssemblyResult {
    std::vector<EegEvent> events; // sorted by (device, event_id)
    AssemblyStats stats;
};

// Groups records by (device, event_id) into complete events. Drops are
// counted, never fatal.
AssemblyResult assemble_events(const std::vector<EegRecord>& records,
                               const std::map<DeviceKind, DeviceConfig>& configs);

// Resamples each channel to floor(input_dim / channel_count) points,
// concatenates channels in config order, resamples the concatenation to
// exactly input_dim, and z-normalizes. Throws data_error on an empty channel
// or a device mismatch.
LabeledExample preprocess(const EegEvent& event, const DeviceConfig& config);

// Linear interpolation of a series onto out_len evenly spaced points with
// endpoint alignment; the identity when lengths already match.
std::vector<double> resample_linear(const std::vector<double>& samples,
                                    std::size_t out_len);

// Subtract the mean, divide by the population sd (by 1 when sd < 1e-12).
void z_normalize_inplace(std::vector<double>& x);

// Stratified, seeded split into per-device test sets plus round-robin client
// shards. Client ids are assigned device-major in MW < EP < MU order.
SplitResult split_dataset(const std::map<DeviceKind, std::vector<LabeledExample>>& examples,
                          int clients_per_device, double test_fraction,
                          std::uint64_t seed);

struct IngestStats {
    std::size_t lines = 0;
    std::size_t parsed = 0;
    std::size_t parse_errors = 0;
    std::size_t skipped_other_device = 0; // valid lines for devices not requested
    AssemblyStats assembly;
    std::size_t preprocess_rejects = 0;
};

struct IngestResult {
    std::map<DeviceKind, std::vector<LabeledExample>> examples;
    IngestStats stats;
};

// Skip-and-count line parsing; malformed lines and lines for devices absent
// from configs are counted, never fatal.
std::vector<EegRecord> parse_stream(std::istream& in,
                                    const std::map<DeviceKind, DeviceConfig>& configs,
                                    IngestStats& stats);

// Full pipeline over raw files: parse -> assemble -> preprocess.
IngestResult ingest_files(const std::vector<std::string>& paths,
                          const std::map<DeviceKind, DeviceConfig>& configs);

// Versioned binary dataset cache; features round-trip bit-exactly.
void save_dataset_cache(const std::string& path,
                        const std::map<DeviceKind, std::vector<LabeledExample>>& examples);
std::map<DeviceKind, std::vector<LabeledExample>> load_dataset_cache(const std::string& path);

} // namespace hhhfl
