#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hhhfl/errors.hpp"
#include "hhhfl/nn.hpp"
#include "hhhfl/rng.hpp"

using namespace hhhfl;

namespace {

LayerParams dense_with(std::size_t in, std::size_t out,
                       std::initializer_list<double> weights,
                       std::initializer_list<double> bias) {
    LayerParams p = make_dense(in, out);
    std::copy(weights.begin(), weights.end(), p.weights.data.begin());
    std::copy(bias.begin(), bias.end(), p.bias.begin());
    return p;
}

void fill_uniform(std::vector<LayerParams>& layers, Rng& rng, double bound) {
    for (LayerParams& layer : layers) {
        for (double& w : layer.weights.data) w = rng.uniform(-bound, bound);
        for (double& b : layer.bias) b = rng.uniform(-bound, bound) * 0.1;
    }
}

Batch random_batch(Rng& rng, std::size_t input_dim, std::size_t classes, std::size_t n) {
    Batch batch;
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> x(input_dim);
        for (double& v : x) v = rng.normal();
        batch.inputs.push_back(std::move(x));
        batch.labels.push_back(static_cast<int>(rng.index(classes)));
    }
    return batch;
}

// Central differences through ReLU are exact only inside a linear piece;
// resample nets whose conv pre-activations sit within the margin of a kink.
bool conv_preacts_clear(const std::vector<LayerParams>& net, const Batch& batch,
                        double margin) {
    for (const auto& input : batch.inputs) {
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

struct ConvCase {
    std::vector<LayerParams> net;
    Batch batch;
};

ConvCase random_conv_case(Rng& rng) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        ConvCase c;
        const std::size_t in_ch = 1 + rng.index(2);
        const std::size_t out_ch = 1 + rng.index(3);
        const std::size_t kernel = 3 + rng.index(3);
        const std::size_t stride = 1 + rng.index(2);
        const std::size_t len = kernel + 2 + rng.index(10);
        const std::size_t classes = 2 + rng.index(2);
        c.net.push_back(make_conv1d(in_ch, out_ch, kernel, stride));
        const std::size_t conv_out = out_ch * ((len - kernel) / stride + 1);
        c.net.push_back(make_dense(conv_out, classes));
        fill_uniform(c.net, rng, 0.6);
        c.batch = random_batch(rng, in_ch * len, classes, 4);
        if (conv_preacts_clear(c.net, c.batch, 5e-4)) return c;
    }
    FAIL("could not sample a conv net clear of ReLU kinks");
    return {};
}

} // namespace

TEST_CASE("dense_forward identity") {
    LayerParams p = dense_with(2, 2, {1, 0, 0, 1}, {0, 0});
    const std::vector<double> y = dense_forward(p, {3, -1});
    CHECK(y == std::vector<double>{3, -1});
}

TEST_CASE("dense_forward hand product") {
    LayerParams p = dense_with(2, 2, {1, 2, 0, 1}, {1, 0});
    const std::vector<double> y = dense_forward(p, {1, 1});
    CHECK(y == std::vector<double>{4, 1});
}

TEST_CASE("dense_forward shape error names both dims") {
    LayerParams p = make_dense(2, 3); // expects inputs of length 2
    try {
        dense_forward(p, {1, 2, 3});
        FAIL("expected shape_error");
    } catch (const shape_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find('3') != std::string::npos);
        CHECK(msg.find('2') != std::string::npos);
    }
}

TEST_CASE("conv1d_forward identity kernel") {
    LayerParams p = make_conv1d(1, 1, 1, 1);
    p.weights(0, 0) = 1.0;
    Matrix signal(1, 5);
    signal.data = {1, -2, 3, 0.5, -0.25};
    CHECK(conv1d_forward(p, signal) == signal);
}

TEST_CASE("conv1d_forward sliding-window sums") {
    LayerParams p = make_conv1d(1, 1, 2, 1);
    p.weights(0, 0) = 1.0;
    p.weights(0, 1) = 1.0;
    Matrix signal(1, 3);
    signal.data = {1, 2, 3};
    const Matrix out = conv1d_forward(p, signal);
    CHECK(out.rows == 1);
    CHECK(out.cols == 2);
    CHECK(out.data == std::vector<double>{3, 5});
}

TEST_CASE("conv1d_forward rejects short signals") {
    LayerParams p = make_conv1d(1, 1, 4, 1);
    Matrix signal(1, 3, 1.0);
    CHECK_THROWS_AS(conv1d_forward(p, signal), shape_error);
}

TEST_CASE("relu") {
    CHECK(relu(std::vector<double>{-1, 0, 2}) == std::vector<double>{0, 0, 2});
    CHECK(relu(std::vector<double>{1, 0.5, 3}) == std::vector<double>{1, 0.5, 3});
    CHECK(relu(std::vector<double>{-1, -0.5, -3}) == std::vector<double>{0, 0, 0});
}

TEST_CASE("softmax_cross_entropy symmetric case") {
    const SoftmaxCeResult r = softmax_cross_entropy({0, 0}, 0);
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(r.probabilities[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.probabilities[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy extreme logits") {
    // Closed form: loss = log(1 + e^-20) when the label is right,
    // 20 + log(1 + e^-20) when it is wrong.
    const SoftmaxCeResult right = softmax_cross_entropy({10, -10}, 0);
    CHECK(right.loss > 0.0);
    CHECK(right.loss < 1e-8);
    CHECK(right.loss == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
    const SoftmaxCeResult wrong = softmax_cross_entropy({10, -10}, 1);
    CHECK(wrong.loss == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("softmax_cross_entropy label out of range") {
    CHECK_THROWS_AS(softmax_cross_entropy({0.5, 0.5}, 2), index_error);
}

TEST_CASE("softmax probabilities sum to 1 up to huge logits") {
    Rng rng(mix_seed({43}));
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 2 + rng.index(9);
        std::vector<double> logits(n);
        for (double& v : logits) v = rng.uniform(-1e3, 1e3);
        const SoftmaxCeResult r = softmax_cross_entropy(logits, rng.index(n));
        double sum = 0.0;
        for (double p : r.probabilities) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("backprop zero learning signal") {
    // Uniform-logit network (all-zero weights) and balanced labels: the
    // classifier bias gradient is exactly the mean of (probs - onehot) = 0.
    std::vector<LayerParams> net{make_dense(3, 2)};
    Batch batch;
    batch.inputs = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
    batch.labels = {0, 1, 0, 1};
    const BackpropResult r = backprop(net, batch);
    CHECK(std::abs(r.grads.layers[0].bias[0]) < 1e-15);
    CHECK(std::abs(r.grads.layers[0].bias[1]) < 1e-15);
}

TEST_CASE("backprop matches finite differences on random nets") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed({seed, 0xFD}));
        std::vector<LayerParams> net{make_dense(5, 4), make_dense(4, 2)};
        fill_uniform(net, rng, 0.8);
        Batch batch = random_batch(rng, 5, 2, 4);
        CHECK(finite_difference_check(net, batch, 1e-5) < 1e-4);
    }
}

TEST_CASE("gradient oracle property over layer kinds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed({seed, 0xFDC}));
        ConvCase c = random_conv_case(rng);
        CHECK(finite_difference_check(c.net, c.batch, 1e-5) < 1e-4);
    }
}

TEST_CASE("extra output gradients with frozen loss term") {
    // One linear dense layer y = Wx + b: the gradient of <g, y> is exactly
    // g x^T for W and g for b, and J^T g = W^T g for the input.
    LayerParams p = dense_with(2, 2, {1, 2, -1, 0.5}, {0.25, -0.75});
    std::vector<LayerParams> net{p};
    Batch batch;
    batch.inputs = {{0.5, -1.5}};
    const std::vector<std::vector<double>> extra{{2.0, -3.0}};
    const BackpropResult r = backprop(net, batch, &extra, 0.0);
    CHECK(r.grads.layers[0].weights(0, 0) == doctest::Approx(2.0 * 0.5).epsilon(1e-15));
    CHECK(r.grads.layers[0].weights(0, 1) == doctest::Approx(2.0 * -1.5).epsilon(1e-15));
    CHECK(r.grads.layers[0].weights(1, 0) == doctest::Approx(-3.0 * 0.5).epsilon(1e-15));
    CHECK(r.grads.layers[0].weights(1, 1) == doctest::Approx(-3.0 * -1.5).epsilon(1e-15));
    CHECK(r.grads.layers[0].bias == std::vector<double>{2.0, -3.0});
    // And against the finite-difference oracle on <g, output>.
    CHECK(finite_difference_check(net, batch, 1e-5, &extra, 0.0) < 1e-8);
}

TEST_CASE("extra output gradients through a conv stack") {
    Rng rng(mix_seed({77}));
    ConvCase c = random_conv_case(rng);
    std::vector<std::vector<double>> extra;
    const std::size_t out_dim = validate_network(c.net, c.batch.inputs.front().size());
    for (std::size_t s = 0; s < c.batch.inputs.size(); ++s) {
        std::vector<double> g(out_dim);
        for (double& v : g) v = rng.uniform(-1, 1);
        extra.push_back(std::move(g));
    }
    CHECK(finite_difference_check(c.net, c.batch, 1e-5, &extra, 0.0) < 1e-4);
    // Combined CE + extra channel.
    CHECK(finite_difference_check(c.net, c.batch, 1e-5, &extra, 1.0) < 1e-4);
}

TEST_CASE("finite_difference_check on a linear 1-layer network") {
    Rng rng(mix_seed({5}));
    std::vector<LayerParams> net{make_dense(4, 2)};
    fill_uniform(net, rng, 0.9);
    Batch batch = random_batch(rng, 4, 2, 6);
    CHECK(finite_difference_check(net, batch, 1e-5) < 1e-6);
}

TEST_CASE("finite_difference_check rejects bad eps") {
    std::vector<LayerParams> net{make_dense(2, 2)};
    Batch batch;
    batch.inputs = {{1, 1}};
    batch.labels = {0};
    CHECK_THROWS_AS(finite_difference_check(net, batch, 0.0), config_error);
    CHECK_THROWS_AS(finite_difference_check(net, batch, 0.5), config_error);
}

TEST_CASE("sgd_step") {
    std::vector<LayerParams> params{dense_with(1, 1, {1.0}, {1.0})};
    Gradients zero = zero_gradients(params);
    CHECK(sgd_step(params, zero, 0.1) == params);

    Gradients g = zero_gradients(params);
    g.layers[0].weights(0, 0) = 0.5;
    const std::vector<LayerParams> stepped = sgd_step(params, g, 0.1);
    CHECK(stepped[0].weights(0, 0) == doctest::Approx(0.95).epsilon(1e-15));

    CHECK_THROWS_AS(sgd_step(params, g, 0.0), config_error);
    CHECK_THROWS_AS(sgd_step(params, g, -0.1), config_error);

    Gradients wrong = zero_gradients({make_dense(2, 2)});
    CHECK_THROWS_AS(sgd_step(params, wrong, 0.1), shape_error);
}

TEST_CASE("shape algebra is checked at construction time") {
    // A consistent stack validates and runs without shape errors.
    std::vector<LayerParams> good{make_conv1d(1, 2, 3, 1), make_dense(2 * 6, 3)};
    CHECK(validate_network(good, 8) == 3);
    Batch batch;
    batch.inputs = {std::vector<double>(8, 0.5)};
    batch.labels = {1};
    CHECK_NOTHROW(backprop(good, batch));

    // A broken stack is caught by validation with the layer index named.
    std::vector<LayerParams> bad{make_conv1d(1, 2, 3, 1), make_dense(5, 3)};
    try {
        validate_network(bad, 8);
        FAIL("expected shape_error");
    } catch (const shape_error& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }

    Rng rng(mix_seed({0xA1}));
    for (int i = 0; i < 50; ++i) {
        ConvCase c = random_conv_case(rng);
        const std::size_t declared = validate_network(c.net, c.batch.inputs.front().size());
        CHECK(network_forward(c.net, c.batch.inputs.front()).size() == declared);
    }
}

TEST_CASE("determinism: identical batch gives bit-identical results") {
    Rng rng(mix_seed({0xD3}));
    ConvCase c = random_conv_case(rng);
    const BackpropResult a = backprop(c.net, c.batch);
    const BackpropResult b = backprop(c.net, c.batch);
    CHECK(a.loss == b.loss);
    REQUIRE(a.grads.layers.size() == b.grads.layers.size());
    for (std::size_t li = 0; li < a.grads.layers.size(); ++li) {
        CHECK(a.grads.layers[li].weights == b.grads.layers[li].weights);
        CHECK(a.grads.layers[li].bias == b.grads.layers[li].bias);
    }
}

TEST_CASE("backprop shape errors identify the layer") {
    std::vector<LayerParams> net{make_dense(3, 2), make_dense(4, 2)};
    Batch batch;
    batch.inputs = {{1, 2, 3}};
    batch.labels = {0};
    try {
        backprop(net, batch);
        FAIL("expected shape_error");
    } catch (const shape_error& e) {
        CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}
