#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "hhhfl/matrix.hpp"
#include "hhhfl/rng.hpp"

namespace hhhfl {

enum class LayerKind { dense, conv1d };

// Geometry of a 1-D convolution layer.
struct ConvMeta {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_width = 1;
    std::size_t stride = 1;

    friend bool operator==(const ConvMeta&, const ConvMeta&) = default;
};

// One layer's parameters.
//
// dense:  weights is out_dim x in_dim, bias has out_dim entries.
// conv1d: weights is out_channels x (in_channels * kernel_width); entry
//         (oc, ic * kernel_width + k) is the tap k of filter oc on input
//         channel ic. bias has out_channels entries.
//
// Network convention: in a layer sequence, every conv1d output passes
// through ReLU and is flattened (row-major, channel-major) before the next
// layer; dense layers are linear with no activation. The last dense layer
// therefore emits raw logits or embeddings.
struct LayerParams {
    LayerKind kind = LayerKind::dense;
    Matrix weights;
    std::vector<double> bias;
    std::optional<ConvMeta> conv;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

LayerParams make_dense(std::size_t in_dim, std::size_t out_dim);
LayerParams make_conv1d(std::size_t in_channels, std::size_t out_channels,
                        std::size_t kernel_width, std::size_t stride);

// Shape-congruent mirror of a layer's parameters.
struct LayerGrads {
    Matrix weights;
    std::vector<double> bias;
};

struct Gradients {
    std::vector<LayerGrads> layers;
};

// A training mini-batch. Inputs are flat vectors; a leading conv1d layer
// reshapes its input row-major into in_channels rows. labels may be empty
// when backprop runs with loss_weight == 0.
struct Batch {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
};

struct SoftmaxCeResult {
    double loss = 0.0;
    std::vector<double> probabilities;
};

struct BackpropResult {
    double loss = 0.0;
    Gradients grads;
};

// y[i] = sum_j W[i,j] x[j] + b[i].
std::vector<double> dense_forward(const LayerParams& params,
                                  const std::vector<double>& input);

// Valid (no padding) cross-correlation. signal is in_channels x length,
// output is out_channels x (floor((length - kernel_width) / stride) + 1).
Matrix conv1d_forward(const LayerParams& params, const Matrix& signal);

// Elementwise max(0, x).
std::vector<double> relu(std::vector<double> x);
Matrix relu(Matrix x);

// Numerically stable softmax + cross entropy against one label.
SoftmaxCeResult softmax_cross_entropy(const std::vector<double>& logits,
                                      std::size_t label);

// Walks the declared shapes of a layer sequence applied to a flat input of
// size input_dim. Throws shape_error naming the offending layer; returns the
// final output size. Run this at construction time so forward/backward never
// hit a shape problem mid-batch.
std::size_t validate_network(const std::vector<LayerParams>& network,
                             std::size_t input_dim);

// Forward pass over the whole layer sequence, returning the flat output.
std::vector<double> network_forward(const std::vector<LayerParams>& network,
                                    const std::vector<double>& input);

// Mean cross-entropy loss over a batch plus, when extra_output_grads is
// given, sum_s <extra_output_grads[s], output_s>. This scalar is exactly the
// functional backprop differentiates; finite_difference_check evaluates it.
double evaluate_loss(const std::vector<LayerParams>& network, const Batch& batch,
                     const std::vector<std::vector<double>>* extra_output_grads = nullptr,
                     double loss_weight = 1.0);

// Gradient of loss_weight * (mean batch CE) + sum_s <extra_output_grads[s],
// output_s> with respect to every parameter. Accumulation order is fixed
// (samples in batch order, layers back to front), so identical inputs give
// bit-identical gradients.
BackpropResult backprop(const std::vector<LayerParams>& network, const Batch& batch,
                        const std::vector<std::vector<double>>* extra_output_grads = nullptr,
                        double loss_weight = 1.0);

// Central-difference verification of backprop over every parameter.
// Returns max over parameters of |analytic - fd| / max(1, |analytic|).
// eps must be in (0, 1e-2].
double finite_difference_check(const std::vector<LayerParams>& network,
                               const Batch& batch, double eps,
                               const std::vector<std::vector<double>>* extra_output_grads = nullptr,
                               double loss_weight = 1.0);

// params' = params - learning_rate * grads, elementwise. learning_rate > 0.
std::vector<LayerParams> sgd_step(std::vector<LayerParams> params,
                                  const Gradients& grads, double learning_rate);

// Shape-congruent zero gradients for a network.
Gradients zero_gradients(const std::vector<LayerParams>& network);

// a += b, layer by layer. Shapes must match.
void add_gradients(Gradients& a, const Gradients& b);
void add_gradients_layer(LayerGrads& a, const LayerGrads& b);

} // namespace hhhfl
