#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hhhfl/data.hpp"
#include "hhhfl/nn.hpp"

namespace hhhfl {

// The shared low-dimensional space every device's data is projected into.
struct EmbeddingSpace {
    std::size_t dim = 10;

    friend bool operator==(const EmbeddingSpace&, const EmbeddingSpace&) = default;
};

// Architecture knobs for the per-device projector: one conv1d over the flat
// feature vector treated as a single-channel series, ReLU, then a dense map
// into the embedding space.
struct ProjectorTopology {
    std::size_t conv_channels = 8;
    std::size_t kernel_width = 16;
    std::size_t stride = 8;
};

// Per-device network mapping raw features (length input_dim) to embeddings.
struct ProjectorParams {
    DeviceKind device = DeviceKind::MW;
    std::size_t input_dim = 0;
    std::vector<LayerParams> layers; // [conv1d, dense -> embedding dim]

    friend bool operator==(const ProjectorParams&, const ProjectorParams&) = default;
};

// Shared classifier over the embedding space (two classes).
struct ClassifierParams {
    std::vector<LayerParams> layers; // [dense: embedding dim -> 2]

    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

// What federation broadcasts and aggregates: one projector per participating
// device kind plus the shared classifier.
struct ModelParams {
    EmbeddingSpace embedding;
    std::map<DeviceKind, ProjectorParams> projectors;
    ClassifierParams classifier;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

constexpr std::size_t kNumClasses = 2;

// Shapes for a device's projector, validated against the topology.
ProjectorParams make_projector_shape(DeviceKind device, std::size_t input_dim,
                                     const ProjectorTopology& topo,
                                     std::size_t embedding_dim);

// Xavier-uniform weights, zero biases, deterministic in seed with devices
// visited in MW < EP < MU order.
ModelParams init_params(const std::map<DeviceKind, DeviceConfig>& configs,
                        std::uint64_t seed,
                        const ProjectorTopology& topo = {},
                        std::size_t embedding_dim = 10);

// conv1d -> ReLU -> flatten -> dense. Throws config_error on device mismatch.
std::vector<double> project(const ProjectorParams& projector,
                            const LabeledExample& example);
std::vector<double> project_features(const ProjectorParams& projector,
                                     const std::vector<double>& features);

// Two-class logits for one embedding.
std::vector<double> classify(const ClassifierParams& classifier,
                             const std::vector<double>& embedding);

// Flat serialized form of ModelParams. Component names are "projector:<DEV>"
// and "classifier"; within a component values run layer by layer, weights
// row-major then bias. unflatten(flatten(p)) == p bit-exactly.
struct FlatParams {
    std::map<std::string, std::vector<double>> vectors;
    std::string manifest; // JSON shape descriptors
};

FlatParams flatten_params(const ModelParams& params);
ModelParams unflatten_params(const FlatParams& flat);

// Flat view of a single component (same ordering rule as flatten_params).
std::vector<double> flatten_layers(const std::vector<LayerParams>& layers);
void unflatten_layers(const std::vector<double>& flat, std::vector<LayerParams>& layers);

// Model checkpoint: manifest + raw little-endian double arrays. Extra named
// arrays and metadata ride along so the federation can checkpoint a full
// server state. Round-trips bit-exactly.
struct Checkpoint {
    ModelParams params;
    int round = 0;
    std::map<std::string, Matrix> extras;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace hhhfl
