#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hhhfl/data.hpp"
#include "hhhfl/federation.hpp"
#include "hhhfl/synthetic.hpp"

namespace hhhfl {

enum class Method { baseline, hhhfl };
enum class DataSource { synthetic, mindbigdata, cache };

std::string method_name(Method method);

// A fully validated experiment description. Parsing is strict: any key the
// schema does not know is an error naming the key path.
struct ExperimentConfig {
    Method method = Method::hhhfl;
    std::vector<DeviceKind> devices; // sorted MW < EP < MU, no duplicates
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    DataSource source = DataSource::synthetic;
    SyntheticSpec synthetic;             // source == synthetic
    std::vector<std::string> data_paths; // source == mindbigdata
    std::string cache_path;              // source == cache

    Hyperparameters hyper;
    KernelConfig kernel = KernelConfig::rbf_median();
    // Pair weight for the MMD term; either one value for all pairs or an
    // explicit per-pair map in the config file.
    std::map<std::pair<DeviceKind, DeviceKind>, double> pair_weights;

    int clients_per_device = 3;
    double test_fraction = 0.2;
    bool balance_classes = false;

    std::string config_hash; // FNV-1a of the canonical config document
};

// Builds the MmdConfig for the federation run from kernel + pair weights.
MmdConfig make_mmd_config(const ExperimentConfig& config);

// Parses and validates a config file (JSON). Throws config_error with the
// offending key path; missing file is also a config_error.
ExperimentConfig load_config(const std::string& path);

// Same, from an in-memory document (the file loader calls this).
ExperimentConfig parse_config_text(const std::string& text);

// 64-bit FNV-1a, hex-encoded; used for provenance headers.
std::string fnv1a_hex(const std::string& text);

} // namespace hhhfl
