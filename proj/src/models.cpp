#include "hhhfl/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "hhhfl/errors.hpp"
#include "hhhfl/rng.hpp"

namespace hhhfl {

namespace {

using nlohmann::json;

void xavier_fill(LayerParams& layer, Rng& rng) {
    std::size_t fan_in, fan_out;
    if (layer.kind == LayerKind::conv1d) {
        fan_in = layer.conv->in_channels * layer.conv->kernel_width;
        fan_out = layer.conv->out_channels * layer.conv->kernel_width;
    } else {
        fan_in = layer.weights.cols;
        fan_out = layer.weights.rows;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : layer.weights.data) {
        w = rng.uniform(-bound, bound);
    }
    // Biases stay zero.
}

json layer_manifest(const LayerParams& layer) {
    json j;
    j["kind"] = layer.kind == LayerKind::conv1d ? "conv1d" : "dense";
    j["rows"] = layer.weights.rows;
    j["cols"] = layer.weights.cols;
    j["bias"] = layer.bias.size();
    if (layer.conv) {
        j["conv"] = {{"in", layer.conv->in_channels},
                     {"out", layer.conv->out_channels},
                     {"kernel", layer.conv->kernel_width},
                     {"stride", layer.conv->stride}};
    }
    return j;
}

LayerParams layer_from_manifest(const json& j) {
    LayerParams layer;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv1d") {
        layer.kind = LayerKind::conv1d;
        const json& c = j.at("conv");
        layer.conv = ConvMeta{c.at("in").get<std::size_t>(), c.at("out").get<std::size_t>(),
                              c.at("kernel").get<std::size_t>(), c.at("stride").get<std::size_t>()};
    } else if (kind == "dense") {
        layer.kind = LayerKind::dense;
    } else {
        throw serialization_error("manifest: unknown layer kind '" + kind + "'");
    }
    layer.weights = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    layer.bias.assign(j.at("bias").get<std::size_t>(), 0.0);
    return layer;
}

std::size_t layers_flat_size(const std::vector<LayerParams>& layers) {
    std::size_t total = 0;
    for (const LayerParams& l : layers) total += l.weights.size() + l.bias.size();
    return total;
}

} // namespace

ProjectorParams make_projector_shape(DeviceKind device, std::size_t input_dim,
                                     const ProjectorTopology& topo,
                                     std::size_t embedding_dim) {
    if (embedding_dim < 2) {
        throw config_error("embedding dimension must be >= 2, got " +
                           std::to_string(embedding_dim));
    }
    if (input_dim < topo.kernel_width) {
        throw config_error("projector for " + device_name(device) + ": input_dim " +
                           std::to_string(input_dim) + " smaller than kernel width " +
                           std::to_string(topo.kernel_width));
    }
    ProjectorParams proj;
    proj.device = device;
    proj.input_dim = input_dim;
    proj.layers.push_back(make_conv1d(1, topo.conv_channels, topo.kernel_width, topo.stride));
    const std::size_t conv_out = (input_dim - topo.kernel_width) / topo.stride + 1;
    proj.layers.push_back(make_dense(topo.conv_channels * conv_out, embedding_dim));
    validate_network(proj.layers, input_dim);
    return proj;
}

ModelParams init_params(const std::map<DeviceKind, DeviceConfig>& configs,
                        std::uint64_t seed, const ProjectorTopology& topo,
                        std::size_t embedding_dim) {
    if (configs.empty()) {
        throw config_error("init_params: no devices");
    }
    ModelParams params;
    params.embedding.dim = embedding_dim;
    Rng rng(mix_seed({seed, 0x1a17ULL}));
    // std::map keys iterate MW < EP < MU, the required device order.
    for (const auto& [device, cfg] : configs) {
        ProjectorParams proj = make_projector_shape(device, cfg.input_dim, topo, embedding_dim);
        for (LayerParams& layer : proj.layers) xavier_fill(layer, rng);
        params.projectors.emplace(device, std::move(proj));
    }
    params.classifier.layers.push_back(make_dense(embedding_dim, kNumClasses));
    xavier_fill(params.classifier.layers.back(), rng);
    return params;
}

std::vector<double> project_features(const ProjectorParams& projector,
                                     const std::vector<double>& features) {
    if (features.size() != projector.input_dim) {
        throw shape_error("project: feature length " + std::to_string(features.size()) +
                          " vs projector input_dim " + std::to_string(projector.input_dim));
    }
    return network_forward(projector.layers, features);
}

std::vector<double> project(const ProjectorParams& projector,
                            const LabeledExample& example) {
    if (example.device != projector.device) {
        throw config_error("project: example from " + device_name(example.device) +
                           " fed to projector for " + device_name(projector.device));
    }
    return project_features(projector, example.features);
}

std::vector<double> classify(const ClassifierParams& classifier,
                             const std::vector<double>& embedding) {
    std::vector<double> out = embedding;
    for (const LayerParams& layer : classifier.layers) {
        out = dense_forward(layer, out);
    }
    return out;
}

std::vector<double> flatten_layers(const std::vector<LayerParams>& layers) {
    std::vector<double> flat;
    flat.reserve(layers_flat_size(layers));
    for (const LayerParams& layer : layers) {
        flat.insert(flat.end(), layer.weights.data.begin(), layer.weights.data.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

void unflatten_layers(const std::vector<double>& flat, std::vector<LayerParams>& layers) {
    if (flat.size() != layers_flat_size(layers)) {
        throw serialization_error("unflatten: flat vector has " + std::to_string(flat.size()) +
                                  " values, layer shapes need " +
                                  std::to_string(layers_flat_size(layers)));
    }
    std::size_t offset = 0;
    for (LayerParams& layer : layers) {
        std::copy(flat.begin() + offset, flat.begin() + offset + layer.weights.size(),
                  layer.weights.data.begin());
        offset += layer.weights.size();
        std::copy(flat.begin() + offset, flat.begin() + offset + layer.bias.size(),
                  layer.bias.begin());
        offset += layer.bias.size();
    }
}

FlatParams flatten_params(const ModelParams& params) {
    FlatParams flat;
    json manifest;
    manifest["version"] = 1;
    manifest["embedding_dim"] = params.embedding.dim;
    json components = json::array();
    for (const auto& [device, proj] : params.projectors) {
        const std::string name = "projector:" + device_name(device);
        flat.vectors[name] = flatten_layers(proj.layers);
        json comp;
        comp["name"] = name;
        comp["device"] = device_name(device);
        comp["input_dim"] = proj.input_dim;
        comp["layers"] = json::array();
        for (const LayerParams& layer : proj.layers) comp["layers"].push_back(layer_manifest(layer));
        components.push_back(std::move(comp));
    }
    {
        flat.vectors["classifier"] = flatten_layers(params.classifier.layers);
        json comp;
        comp["name"] = "classifier";
        comp["layers"] = json::array();
        for (const LayerParams& layer : params.classifier.layers) {
            comp["layers"].push_back(layer_manifest(layer));
        }
        components.push_back(std::move(comp));
    }
    manifest["components"] = std::move(components);
    flat.manifest = manifest.dump();
    return flat;
}

ModelParams unflatten_params(const FlatParams& flat) {
    json manifest;
    try {
        manifest = json::parse(flat.manifest);
    } catch (const json::exception& e) {
        throw serialization_error(std::string("manifest is not valid JSON: ") + e.what());
    }
    try {
        ModelParams params;
        params.embedding.dim = manifest.at("embedding_dim").get<std::size_t>();
        for (const json& comp : manifest.at("components")) {
            const std::string name = comp.at("name").get<std::string>();
            auto vec_it = flat.vectors.find(name);
            if (vec_it == flat.vectors.end()) {
                throw serialization_error("manifest component '" + name +
                                          "' has no flat vector");
            }
            std::vector<LayerParams> layers;
            for (const json& lj : comp.at("layers")) layers.push_back(layer_from_manifest(lj));
            unflatten_layers(vec_it->second, layers);
            if (name == "classifier") {
                params.classifier.layers = std::move(layers);
            } else if (name.rfind("projector:", 0) == 0) {
                ProjectorParams proj;
                proj.device = parse_device(comp.at("device").get<std::string>());
                proj.input_dim = comp.at("input_dim").get<std::size_t>();
                proj.layers = std::move(layers);
                validate_network(proj.layers, proj.input_dim);
                params.projectors.emplace(proj.device, std::move(proj));
            } else {
                throw serialization_error("manifest: unknown component '" + name + "'");
            }
        }
        if (params.classifier.layers.empty()) {
            throw serialization_error("manifest has no classifier component");
        }
        return params;
    } catch (const json::exception& e) {
        throw serialization_error(std::string("manifest is malformed: ") + e.what());
    } catch (const shape_error& e) {
        throw serialization_error(std::string("manifest shapes are inconsistent: ") + e.what());
    } catch (const parse_error& e) {
        throw serialization_error(std::string("manifest is malformed: ") + e.what());
    }
}

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'H', 'F', 'L', 'C', 'K', 'P', '1'};

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw serialization_error("checkpoint: truncated file");
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    FlatParams flat = flatten_params(ckpt.params);
    json manifest = json::parse(flat.manifest);
    manifest["round"] = ckpt.round;
    json extras = json::array();
    for (const auto& [name, m] : ckpt.extras) {
        extras.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    }
    manifest["extras"] = std::move(extras);
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw serialization_error("cannot open checkpoint for writing: " + path);
    }
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    // Arrays are laid out in manifest component order; the loader reads them
    // back the same way.
    for (const json& comp : manifest.at("components")) {
        write_doubles(out, flat.vectors.at(comp.at("name").get<std::string>()));
    }
    for (const auto& [name, m] : ckpt.extras) {
        write_doubles(out, m.data);
    }
    if (!out) {
        throw serialization_error("failed writing checkpoint: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw serialization_error("cannot open checkpoint: " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw serialization_error("checkpoint: bad magic in " + path);
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1ULL << 30)) {
        throw serialization_error("checkpoint: bad manifest length");
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw serialization_error("checkpoint: truncated manifest");

    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::exception& e) {
        throw serialization_error(std::string("checkpoint manifest is not JSON: ") + e.what());
    }

    FlatParams flat;
    flat.manifest = text;
    try {
        for (const json& comp : manifest.at("components")) {
            const std::string name = comp.at("name").get<std::string>();
            std::size_t total = 0;
            for (const json& lj : comp.at("layers")) {
                total += lj.at("rows").get<std::size_t>() * lj.at("cols").get<std::size_t>() +
                         lj.at("bias").get<std::size_t>();
            }
            std::vector<double> vec(total);
            read_doubles(in, vec);
            flat.vectors.emplace(name, std::move(vec));
        }
        Checkpoint ckpt;
        ckpt.params = unflatten_params(flat);
        ckpt.round = manifest.value("round", 0);
        if (manifest.contains("extras")) {
            for (const json& ej : manifest.at("extras")) {
                Matrix m(ej.at("rows").get<std::size_t>(), ej.at("cols").get<std::size_t>());
                read_doubles(in, m.data);
                ckpt.extras.emplace(ej.at("name").get<std::string>(), std::move(m));
            }
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw serialization_error(std::string("checkpoint manifest is malformed: ") + e.what());
    }
}

} // namespace hhhfl
