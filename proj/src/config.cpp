#include "hhhfl/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hhhfl/errors.hpp"

namespace hhhfl {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& path) {
    for (const auto& item : obj.items()) {
        if (!known.count(item.key())) {
            throw config_error("unknown key '" + path + item.key() + "'");
        }
    }
}

const json& require_key(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key)) {
        throw config_error("missing required key '" + path + key + "'");
    }
    return obj.at(key);
}

std::string get_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw config_error("'" + path + "' must be a string");
    return v.get<std::string>();
}

double get_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw config_error("'" + path + "' must be a number");
    return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw config_error("'" + path + "' must be an integer");
    return v.get<std::int64_t>();
}

DeviceKind get_device(const json& v, const std::string& path) {
    const std::string tag = get_string(v, path);
    try {
        return parse_device(tag);
    } catch (const parse_error&) {
        throw config_error("'" + path + "': unknown device '" + tag + "'");
    }
}

std::pair<DeviceKind, DeviceKind> parse_pair_key(const std::string& key,
                                                 const std::string& path) {
    const std::size_t plus = key.find('+');
    if (plus == std::string::npos) {
        throw config_error("'" + path + "': pair key '" + key +
                           "' must look like 'MW+MU'");
    }
    try {
        return device_pair(parse_device(key.substr(0, plus)),
                           parse_device(key.substr(plus + 1)));
    } catch (const parse_error&) {
        throw config_error("'" + path + "': pair key '" + key + "' names an unknown device");
    }
}

SyntheticSpec parse_synthetic(const json& node, const std::string& path) {
    if (!node.is_object()) throw config_error("'" + path + "' must be an object");
    reject_unknown_keys(node, {"devices"}, path + ".");
    const json& arr = require_key(node, "devices", path + ".");
    if (!arr.is_array() || arr.empty()) {
        throw config_error("'" + path + ".devices' must be a nonempty array");
    }
    SyntheticSpec spec;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ipath = path + ".devices[" + std::to_string(i) + "]";
        const json& item = arr[i];
        if (!item.is_object()) throw config_error("'" + ipath + "' must be an object");
        reject_unknown_keys(item, {"device", "input_dim", "examples_per_class",
                                   "separation", "noise_scale"},
                            ipath + ".");
        SyntheticDeviceSpec dev;
        dev.device = get_device(require_key(item, "device", ipath + "."), ipath + ".device");
        const std::int64_t dim =
            get_integer(require_key(item, "input_dim", ipath + "."), ipath + ".input_dim");
        if (dim < 2) throw config_error("'" + ipath + ".input_dim' must be >= 2");
        dev.input_dim = static_cast<std::size_t>(dim);
        const std::int64_t per_class = get_integer(
            require_key(item, "examples_per_class", ipath + "."), ipath + ".examples_per_class");
        if (per_class < 1) {
            throw config_error("'" + ipath + ".examples_per_class' must be >= 1");
        }
        dev.examples_per_class = static_cast<std::size_t>(per_class);
        dev.separation =
            get_number(require_key(item, "separation", ipath + "."), ipath + ".separation");
        if (item.contains("noise_scale")) {
            dev.noise_scale = get_number(item.at("noise_scale"), ipath + ".noise_scale");
        }
        spec.devices.push_back(dev);
    }
    validate_synthetic_spec(spec);
    return spec;
}

} // namespace

std::string method_name(Method method) {
    return method == Method::baseline ? "baseline" : "hhhfl";
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex;
    for (int shift = 60; shift >= 0; shift -= 4) {
        out << ((h >> shift) & 0xF);
    }
    return out.str();
}

MmdConfig make_mmd_config(const ExperimentConfig& config) {
    MmdConfig mmd;
    mmd.kernel = config.kernel;
    mmd.weights = config.pair_weights;
    return mmd;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw config_error("config root must be an object");
    }
    reject_unknown_keys(doc, {"method", "devices", "seed", "out_dir", "data", "hyper",
                              "mmd", "split", "balance_classes"},
                        "");

    ExperimentConfig cfg;
    cfg.config_hash = fnv1a_hex(doc.dump());

    const std::string method = get_string(require_key(doc, "method", ""), "method");
    if (method == "baseline") {
        cfg.method = Method::baseline;
    } else if (method == "hhhfl") {
        cfg.method = Method::hhhfl;
    } else {
        throw config_error("'method' must be 'baseline' or 'hhhfl', got '" + method + "'");
    }

    const json& devices = require_key(doc, "devices", "");
    if (!devices.is_array() || devices.empty()) {
        throw config_error("'devices' must be a nonempty array");
    }
    for (std::size_t i = 0; i < devices.size(); ++i) {
        cfg.devices.push_back(get_device(devices[i], "devices[" + std::to_string(i) + "]"));
    }
    std::sort(cfg.devices.begin(), cfg.devices.end());
    if (std::adjacent_find(cfg.devices.begin(), cfg.devices.end()) != cfg.devices.end()) {
        throw config_error("'devices' contains a duplicate");
    }
    if (cfg.method == Method::baseline && cfg.devices.size() != 1) {
        throw config_error("baseline runs use exactly one device, got " +
                           std::to_string(cfg.devices.size()));
    }
    if (cfg.method == Method::hhhfl && cfg.devices.size() < 2) {
        throw config_error("hhhfl runs need at least two devices");
    }

    const std::int64_t seed = get_integer(require_key(doc, "seed", ""), "seed");
    if (seed < 0) throw config_error("'seed' must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);

    if (doc.contains("out_dir")) {
        cfg.out_dir = get_string(doc.at("out_dir"), "out_dir");
    }

    const json& data = require_key(doc, "data", "");
    if (!data.is_object()) throw config_error("'data' must be an object");
    reject_unknown_keys(data, {"source", "synthetic", "paths", "cache"}, "data.");
    const std::string source = get_string(require_key(data, "source", "data."), "data.source");
    if (source == "synthetic") {
        cfg.source = DataSource::synthetic;
        if (data.contains("paths") || data.contains("cache")) {
            throw config_error("'data.paths'/'data.cache' not applicable when "
                               "data.source is 'synthetic'");
        }
        cfg.synthetic = parse_synthetic(require_key(data, "synthetic", "data."),
                                        "data.synthetic");
        std::set<DeviceKind> spec_devices;
        for (const SyntheticDeviceSpec& dev : cfg.synthetic.devices) {
            spec_devices.insert(dev.device);
        }
        for (DeviceKind dev : cfg.devices) {
            if (!spec_devices.count(dev)) {
                throw config_error("'data.synthetic' has no entry for device " +
                                   device_name(dev));
            }
        }
        if (spec_devices.size() != cfg.devices.size()) {
            throw config_error("'data.synthetic' lists a device not in 'devices'");
        }
    } else if (source == "mindbigdata") {
        cfg.source = DataSource::mindbigdata;
        if (data.contains("synthetic") || data.contains("cache")) {
            throw config_error("'data.synthetic'/'data.cache' not applicable when "
                               "data.source is 'mindbigdata'");
        }
        const json& paths = require_key(data, "paths", "data.");
        if (!paths.is_array() || paths.empty()) {
            throw config_error("'data.paths' must be a nonempty array");
        }
        for (std::size_t i = 0; i < paths.size(); ++i) {
            cfg.data_paths.push_back(
                get_string(paths[i], "data.paths[" + std::to_string(i) + "]"));
        }
    } else if (source == "cache") {
        cfg.source = DataSource::cache;
        if (data.contains("synthetic") || data.contains("paths")) {
            throw config_error("'data.synthetic'/'data.paths' not applicable when "
                               "data.source is 'cache'");
        }
        cfg.cache_path = get_string(require_key(data, "cache", "data."), "data.cache");
    } else {
        throw config_error("'data.source' must be 'synthetic', 'mindbigdata' or 'cache'");
    }

    if (doc.contains("hyper")) {
        const json& hyper = doc.at("hyper");
        if (!hyper.is_object()) throw config_error("'hyper' must be an object");
        reject_unknown_keys(hyper, {"rounds", "local_epochs", "batch_size",
                                    "learning_rate", "exchange_size"},
                            "hyper.");
        if (hyper.contains("rounds")) {
            cfg.hyper.rounds = static_cast<int>(get_integer(hyper.at("rounds"), "hyper.rounds"));
        }
        if (hyper.contains("local_epochs")) {
            cfg.hyper.local_epochs =
                static_cast<int>(get_integer(hyper.at("local_epochs"), "hyper.local_epochs"));
        }
        if (hyper.contains("batch_size")) {
            cfg.hyper.batch_size =
                static_cast<int>(get_integer(hyper.at("batch_size"), "hyper.batch_size"));
        }
        if (hyper.contains("learning_rate")) {
            cfg.hyper.learning_rate = get_number(hyper.at("learning_rate"), "hyper.learning_rate");
        }
        if (hyper.contains("exchange_size")) {
            cfg.hyper.exchange_size =
                static_cast<int>(get_integer(hyper.at("exchange_size"), "hyper.exchange_size"));
        }
    }
    try {
        validate_hyperparameters(cfg.hyper);
    } catch (const config_error& e) {
        throw config_error(std::string("'hyper': ") + e.what());
    }

    double uniform_weight = 1.0;
    bool explicit_pairs = false;
    if (doc.contains("mmd")) {
        const json& mmd = doc.at("mmd");
        if (!mmd.is_object()) throw config_error("'mmd' must be an object");
        reject_unknown_keys(mmd, {"kernel", "bandwidth", "lambda"}, "mmd.");
        std::string kernel = "rbf";
        if (mmd.contains("kernel")) kernel = get_string(mmd.at("kernel"), "mmd.kernel");
        if (kernel == "rbf") {
            cfg.kernel = KernelConfig::rbf_median();
            if (mmd.contains("bandwidth")) {
                const json& bw = mmd.at("bandwidth");
                if (bw.is_string() && bw.get<std::string>() == "median") {
                    cfg.kernel = KernelConfig::rbf_median();
                } else if (bw.is_number()) {
                    const double sigma = bw.get<double>();
                    if (!(sigma > 0.0)) {
                        throw config_error("'mmd.bandwidth' must be > 0");
                    }
                    cfg.kernel = KernelConfig::rbf_fixed(sigma);
                } else {
                    throw config_error("'mmd.bandwidth' must be 'median' or a number");
                }
            }
        } else if (kernel == "linear") {
            if (mmd.contains("bandwidth")) {
                throw config_error("'mmd.bandwidth' not applicable to the linear kernel");
            }
            cfg.kernel = KernelConfig::linear();
        } else {
            throw config_error("'mmd.kernel' must be 'rbf' or 'linear'");
        }
        if (mmd.contains("lambda")) {
            const json& lam = mmd.at("lambda");
            if (lam.is_number()) {
                uniform_weight = lam.get<double>();
                if (uniform_weight < 0.0) throw config_error("'mmd.lambda' must be >= 0");
            } else if (lam.is_object()) {
                explicit_pairs = true;
                for (const auto& item : lam.items()) {
                    const auto key = parse_pair_key(item.key(), "mmd.lambda");
                    const double w = get_number(item.value(), "mmd.lambda." + item.key());
                    if (w < 0.0) {
                        throw config_error("'mmd.lambda." + item.key() + "' must be >= 0");
                    }
                    cfg.pair_weights[key] = w;
                }
            } else {
                throw config_error("'mmd.lambda' must be a number or an object of pair keys");
            }
        }
    }
    if (!explicit_pairs) {
        for (std::size_t i = 0; i < cfg.devices.size(); ++i) {
            for (std::size_t j = i + 1; j < cfg.devices.size(); ++j) {
                cfg.pair_weights[device_pair(cfg.devices[i], cfg.devices[j])] = uniform_weight;
            }
        }
    }

    if (doc.contains("split")) {
        const json& split = doc.at("split");
        if (!split.is_object()) throw config_error("'split' must be an object");
        reject_unknown_keys(split, {"clients_per_device", "test_fraction"}, "split.");
        if (split.contains("clients_per_device")) {
            cfg.clients_per_device = static_cast<int>(
                get_integer(split.at("clients_per_device"), "split.clients_per_device"));
        }
        if (split.contains("test_fraction")) {
            cfg.test_fraction = get_number(split.at("test_fraction"), "split.test_fraction");
        }
    }
    if (cfg.clients_per_device < 1) {
        throw config_error("'split.clients_per_device' must be >= 1");
    }
    if (!(cfg.test_fraction > 0.0) || !(cfg.test_fraction < 1.0)) {
        throw config_error("'split.test_fraction' must be in (0, 1)");
    }

    if (doc.contains("balance_classes")) {
        const json& b = doc.at("balance_classes");
        if (!b.is_boolean()) throw config_error("'balance_classes' must be a boolean");
        cfg.balance_classes = b.get<bool>();
    }

    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot open config file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

} // namespace hhhfl
