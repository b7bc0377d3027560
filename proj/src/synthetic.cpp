#include "hhhfl/synthetic.hpp"

#include <cmath>
#include <set>

#include "hhhfl/errors.hpp"
#include "hhhfl/rng.hpp"

namespace hhhfl {

void validate_synthetic_spec(const SyntheticSpec& spec) {
    if (spec.devices.empty()) {
        throw config_error("synthetic spec: no devices");
    }
    std::set<std::size_t> dims;
    std::set<DeviceKind> kinds;
    for (const SyntheticDeviceSpec& dev : spec.devices) {
        if (!kinds.insert(dev.device).second) {
            throw config_error("synthetic spec: duplicate device " +
                               device_name(dev.device));
        }
        if (dev.input_dim < 2) {
            throw config_error("synthetic spec: " + device_name(dev.device) +
                               " input_dim must be >= 2");
        }
        if (!dims.insert(dev.input_dim).second) {
            throw config_error("synthetic spec: input_dims must be pairwise distinct");
        }
        if (dev.examples_per_class < 1) {
            throw config_error("synthetic spec: " + device_name(dev.device) +
                               " examples_per_class must be >= 1");
        }
        if (!(dev.separation > 0.0)) {
            throw config_error("synthetic spec: " + device_name(dev.device) +
                               " separation must be > 0");
        }
        if (!(dev.noise_scale > 0.0)) {
            throw config_error("synthetic spec: " + device_name(dev.device) +
                               " noise_scale must be > 0");
        }
    }
}

std::map<DeviceKind, std::vector<LabeledExample>> generate_synthetic(
    const SyntheticSpec& spec, std::uint64_t seed) {
    validate_synthetic_spec(spec);
    std::map<DeviceKind, std::vector<LabeledExample>> result;
    for (const SyntheticDeviceSpec& dev : spec.devices) {
        Rng rng(mix_seed({seed, 0xDA7AULL, static_cast<std::uint64_t>(dev.device)}));
        const std::size_t d = dev.input_dim;

        // Device-specific random unit direction for the class-mean axis.
        std::vector<double> axis(d);
        double norm = 0.0;
        for (double& v : axis) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : axis) v /= norm;

        const double half_gap = 0.5 * dev.separation * dev.noise_scale;
        auto& examples = result[dev.device];
        examples.reserve(2 * dev.examples_per_class);
        for (int label = 0; label < 2; ++label) {
            const double sign = label == 0 ? -1.0 : 1.0;
            for (std::size_t i = 0; i < dev.examples_per_class; ++i) {
                LabeledExample ex;
                ex.device = dev.device;
                ex.label = label;
                ex.features.resize(d);
                for (std::size_t j = 0; j < d; ++j) {
                    ex.features[j] = sign * half_gap * axis[j] +
                                     dev.noise_scale * rng.normal();
                }
                z_normalize_inplace(ex.features);
                examples.push_back(std::move(ex));
            }
        }
    }
    return result;
}

} // namespace hhhfl
