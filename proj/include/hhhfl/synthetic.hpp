#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "hhhfl/data.hpp"

namespace hhhfl {

// One pseudo-device of the synthetic benchmark: two Gaussian classes in its
// own feature space.
struct SyntheticDeviceSpec {
    DeviceKind device = DeviceKind::MW;
    std::size_t input_dim = 0;
    std::size_t examples_per_class = 0;
    double separation = 0.0;  // class-mean distance, in units of noise sd
    double noise_scale = 1.0; // isotropic noise sd
};

struct SyntheticSpec {
    std::vector<SyntheticDeviceSpec> devices;
};

// input_dims pairwise distinct, separation > 0, examples_per_class >= 1,
// noise_scale > 0, no duplicate device tags.
void validate_synthetic_spec(const SyntheticSpec& spec);

// Per device: class means +/- (separation * noise_scale / 2) along a
// device-specific random unit direction, isotropic Gaussian noise, then the
// same per-example z-normalization the real pipeline applies. Because the
// noise is isotropic, the random mean direction realizes a device-specific
// rotation of the canonical two-blob layout, so no two raw feature spaces
// are compatible. Deterministic in seed.
std::map<DeviceKind, std::vector<LabeledExample>> generate_synthetic(
    const SyntheticSpec& spec, std::uint64_t seed);

} // namespace hhhfl
