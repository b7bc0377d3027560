#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "hhhfl/errors.hpp"
#include "hhhfl/models.hpp"
#include "hhhfl/rng.hpp"

using namespace hhhfl;

namespace {

std::map<DeviceKind, DeviceConfig> all_default_configs() {
    std::map<DeviceKind, DeviceConfig> configs;
    for (DeviceKind device : kAllDevices) {
        configs.emplace(device, default_device_config(device));
    }
    return configs;
}

LabeledExample example_for(DeviceKind device, std::size_t dim, std::uint64_t seed) {
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(device)}));
    LabeledExample ex;
    ex.device = device;
    ex.label = static_cast<int>(rng.index(2));
    ex.features.resize(dim);
    for (double& v : ex.features) v = rng.normal();
    return ex;
}

// Keeps the finite-difference window inside one linear piece of every conv
// ReLU (see the same guard in test_nn.cpp).
bool conv_preacts_clear(const std::vector<LayerParams>& net,
                        const std::vector<std::vector<double>>& inputs, double margin) {
    for (const auto& input : inputs) {
        std::vector<double> flat = input;
        for (const LayerParams& layer : net) {
            if (layer.kind == LayerKind::conv1d) {
                Matrix shaped(layer.conv->in_channels,
                              flat.size() / layer.conv->in_channels);
                shaped.data = flat;
                Matrix pre = conv1d_forward(layer, shaped);
                for (double v : pre.data) {
                    if (std::abs(v) < margin) return false;
                }
                flat = relu(std::move(pre)).data;
            } else {
                flat = dense_forward(layer, flat);
            }
        }
    }
    return true;
}

} // namespace

TEST_CASE("init_params is deterministic and seed-sensitive") {
    auto configs = all_default_configs();
    const ModelParams a = init_params(configs, 42);
    const ModelParams b = init_params(configs, 42);
    CHECK(a == b);
    const ModelParams c = init_params(configs, 43);
    CHECK_FALSE(a == c);
}

TEST_CASE("init_params biases are exactly zero, weights inside the Xavier bound") {
    auto configs = all_default_configs();
    const ModelParams params = init_params(configs, 7);
    for (const auto& [device, proj] : params.projectors) {
        for (const LayerParams& layer : proj.layers) {
            for (double b : layer.bias) CHECK(b == 0.0);
        }
    }
    // Classifier is a 10 -> 2 dense layer: bound sqrt(6 / 12).
    const double bound = std::sqrt(6.0 / 12.0);
    const LayerParams& cls = params.classifier.layers.front();
    CHECK(cls.weights.rows == 2);
    CHECK(cls.weights.cols == 10);
    for (double w : cls.weights.data) {
        CHECK(w > -bound);
        CHECK(w < bound);
    }
    for (double b : cls.bias) CHECK(b == 0.0);
    // No degenerate constant init.
    bool all_same = true;
    for (double w : cls.weights.data) all_same = all_same && w == cls.weights.data[0];
    CHECK_FALSE(all_same);
}

TEST_CASE("project reaches the 10-dim embedding space for all devices") {
    auto configs = all_default_configs();
    const ModelParams params = init_params(configs, 3);
    for (DeviceKind device : kAllDevices) {
        const LabeledExample ex =
            example_for(device, configs.at(device).input_dim, 11);
        const std::vector<double> emb = project(params.projectors.at(device), ex);
        CHECK(emb.size() == 10);
    }
}

TEST_CASE("project with all-zero weights gives the zero embedding") {
    ProjectorParams proj = make_projector_shape(DeviceKind::MU, 512, {}, 10);
    const LabeledExample ex = example_for(DeviceKind::MU, 512, 5);
    const std::vector<double> emb = project(proj, ex);
    for (double v : emb) CHECK(v == 0.0);
}

TEST_CASE("project rejects foreign devices") {
    auto configs = all_default_configs();
    const ModelParams params = init_params(configs, 3);
    const LabeledExample mu = example_for(DeviceKind::MU, 512, 5);
    CHECK_THROWS_AS(project(params.projectors.at(DeviceKind::MW), mu), config_error);
}

TEST_CASE("classify") {
    ClassifierParams cls;
    cls.layers.push_back(make_dense(10, 2));
    std::vector<double> emb(10, 0.0);
    CHECK(classify(cls, emb) == std::vector<double>{0, 0});

    cls.layers[0].weights(0, 0) = 1.0; // row 0 selects emb[0]
    cls.layers[0].weights(1, 1) = 1.0; // row 1 selects emb[1]
    emb[0] = 2.0;
    emb[1] = -1.0;
    CHECK(classify(cls, emb) == std::vector<double>{2, -1});

    CHECK_THROWS_AS(classify(cls, std::vector<double>(9, 0.0)), shape_error);
}

TEST_CASE("flatten/unflatten round-trip is bit-exact") {
    auto configs = all_default_configs();
    const ModelParams params = init_params(configs, 99);
    const FlatParams flat = flatten_params(params);
    CHECK(flat.vectors.count("classifier") == 1);
    CHECK(flat.vectors.count("projector:MW") == 1);
    CHECK(flat.vectors.count("projector:EP") == 1);
    CHECK(flat.vectors.count("projector:MU") == 1);
    const ModelParams back = unflatten_params(flat);
    CHECK(back == params);

    // Structurally equal params produce equal flat vectors.
    const FlatParams again = flatten_params(back);
    CHECK(again.vectors == flat.vectors);
    CHECK(again.manifest == flat.manifest);
}

TEST_CASE("unflatten rejects corrupted manifests") {
    auto configs = all_default_configs();
    const ModelParams params = init_params(configs, 1);
    FlatParams flat = flatten_params(params);

    FlatParams bad_json = flat;
    bad_json.manifest = "{not json";
    CHECK_THROWS_AS(unflatten_params(bad_json), serialization_error);

    FlatParams missing_vec = flat;
    missing_vec.vectors.erase("classifier");
    CHECK_THROWS_AS(unflatten_params(missing_vec), serialization_error);

    FlatParams wrong_len = flat;
    wrong_len.vectors["projector:MW"].pop_back();
    CHECK_THROWS_AS(unflatten_params(wrong_len), serialization_error);
}

TEST_CASE("checkpoint round-trip with extras") {
    auto configs = all_default_configs();
    Checkpoint ckpt;
    ckpt.params = init_params(configs, 123);
    ckpt.round = 17;
    Matrix pool(6, 10);
    Rng rng(mix_seed({0xEE}));
    for (double& v : pool.data) v = rng.normal();
    ckpt.extras.emplace("pool:MW", pool);
    Matrix bw(1, 1);
    bw(0, 0) = 1.75;
    ckpt.extras.emplace("bandwidth", bw);

    const std::string path =
        (std::filesystem::temp_directory_path() / "hhhfl_test_ckpt.bin").string();
    save_checkpoint(path, ckpt);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.params == ckpt.params);
    CHECK(back.round == 17);
    CHECK(back.extras.at("pool:MW") == pool);
    CHECK(back.extras.at("bandwidth") == bw);
    std::filesystem::remove(path);
}

TEST_CASE("end-to-end gradient check through all three device input dims") {
    auto configs = all_default_configs();
    for (DeviceKind device : kAllDevices) {
        const std::size_t input_dim = configs.at(device).input_dim;
        std::vector<LayerParams> net;
        Batch batch;
        bool clear = false;
        for (std::uint64_t attempt = 0; attempt < 20 && !clear; ++attempt) {
            std::map<DeviceKind, DeviceConfig> one{{device, configs.at(device)}};
            const ModelParams params =
                init_params(one, mix_seed({attempt, static_cast<std::uint64_t>(device)}));
            net = params.projectors.at(device).layers;
            net.insert(net.end(), params.classifier.layers.begin(),
                       params.classifier.layers.end());
            batch = Batch{};
            Rng rng(mix_seed({attempt, 0xB0, static_cast<std::uint64_t>(device)}));
            for (int s = 0; s < 2; ++s) {
                std::vector<double> x(input_dim);
                for (double& v : x) v = rng.normal();
                z_normalize_inplace(x);
                batch.inputs.push_back(std::move(x));
                batch.labels.push_back(s % 2);
            }
            clear = conv_preacts_clear(net, batch.inputs, 1e-4);
        }
        REQUIRE(clear);
        CHECK(finite_difference_check(net, batch, 1e-5) < 1e-4);
    }
}

TEST_CASE("make_projector_shape validates geometry") {
    CHECK_THROWS_AS(make_projector_shape(DeviceKind::MW, 8, {}, 10), config_error);
    CHECK_THROWS_AS(make_projector_shape(DeviceKind::MW, 512, {}, 1), config_error);
    const ProjectorParams proj = make_projector_shape(DeviceKind::EP, 440, {}, 10);
    // (440 - 16) / 8 + 1 = 54 conv positions, 8 channels.
    CHECK(proj.layers[1].weights.cols == 8 * 54);
    CHECK(proj.layers[1].weights.rows == 10);
}
