#include "hhhfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hhhfl/errors.hpp"

namespace hhhfl {

namespace {

std::size_t conv_output_length(const ConvMeta& meta, std::size_t length) {
    if (length < meta.kernel_width) {
        throw shape_error("conv1d: signal length " + std::to_string(length) +
                          " shorter than kernel width " +
                          std::to_string(meta.kernel_width));
    }
    return (length - meta.kernel_width) / meta.stride + 1;
}

void check_conv_layer(const LayerParams& params) {
    if (params.kind != LayerKind::conv1d || !params.conv) {
        throw shape_error("conv1d_forward: layer is not a conv1d layer");
    }
    const ConvMeta& m = *params.conv;
    if (params.weights.rows != m.out_channels ||
        params.weights.cols != m.in_channels * m.kernel_width) {
        throw shape_error("conv1d: weight shape " + shape_str(params.weights) +
                          " does not match meta " + std::to_string(m.out_channels) +
                          "x(" + std::to_string(m.in_channels) + "*" +
                          std::to_string(m.kernel_width) + ")");
    }
    if (params.bias.size() != m.out_channels) {
        throw shape_error("conv1d: bias length " + std::to_string(params.bias.size()) +
                          " vs out_channels " + std::to_string(m.out_channels));
    }
    if (m.stride == 0 || m.kernel_width == 0 || m.in_channels == 0 || m.out_channels == 0) {
        throw shape_error("conv1d: zero-sized meta field");
    }
}

// Reshape a flat vector into in_channels rows (row-major), as a conv layer
// sees it.
Matrix to_channels(const std::vector<double>& flat, std::size_t channels,
                   std::size_t layer_index) {
    if (channels == 0 || flat.size() % channels != 0) {
        throw shape_error("layer " + std::to_string(layer_index) + ": input size " +
                          std::to_string(flat.size()) + " not divisible by " +
                          std::to_string(channels) + " channels");
    }
    Matrix m(channels, flat.size() / channels);
    m.data = flat;
    return m;
}

// Per-layer forward state kept for the backward pass.
struct LayerCache {
    Matrix conv_input;            // conv only: reshaped input
    Matrix conv_preact;           // conv only: output before ReLU
    std::vector<double> dense_input; // dense only: flat input
};

std::vector<double> forward_sample(const std::vector<LayerParams>& network,
                                   const std::vector<double>& input,
                                   std::vector<LayerCache>* caches) {
    std::vector<double> flat = input;
    for (std::size_t li = 0; li < network.size(); ++li) {
        const LayerParams& layer = network[li];
        LayerCache cache;
        if (layer.kind == LayerKind::conv1d) {
            check_conv_layer(layer);
            Matrix shaped = to_channels(flat, layer.conv->in_channels, li);
            Matrix pre = conv1d_forward(layer, shaped);
            if (caches) {
                cache.conv_input = std::move(shaped);
                cache.conv_preact = pre;
            }
            Matrix post = relu(std::move(pre));
            flat = std::move(post.data); // row-major flatten
        } else {
            if (flat.size() != layer.weights.cols) {
                throw shape_error("layer " + std::to_string(li) + ": dense expects input " +
                                  std::to_string(layer.weights.cols) + ", got " +
                                  std::to_string(flat.size()));
            }
            if (caches) cache.dense_input = flat;
            flat = dense_forward(layer, flat);
        }
        if (caches) caches->push_back(std::move(cache));
    }
    return flat;
}

void backward_sample(const std::vector<LayerParams>& network,
                     const std::vector<LayerCache>& caches,
                     std::vector<double> dout, Gradients& grads) {
    for (std::size_t li = network.size(); li-- > 0;) {
        const LayerParams& layer = network[li];
        const LayerCache& cache = caches[li];
        LayerGrads& lg = grads.layers[li];
        if (layer.kind == LayerKind::dense) {
            const std::vector<double>& x = cache.dense_input;
            const std::size_t out = layer.weights.rows;
            const std::size_t in = layer.weights.cols;
            if (dout.size() != out) {
                throw shape_error("layer " + std::to_string(li) + ": gradient size " +
                                  std::to_string(dout.size()) + " vs output " +
                                  std::to_string(out));
            }
            std::vector<double> din(in, 0.0);
            for (std::size_t i = 0; i < out; ++i) {
                const double g = dout[i];
                lg.bias[i] += g;
                for (std::size_t j = 0; j < in; ++j) {
                    lg.weights(i, j) += g * x[j];
                    din[j] += layer.weights(i, j) * g;
                }
            }
            dout = std::move(din);
        } else {
            const ConvMeta& m = *layer.conv;
            const Matrix& x = cache.conv_input;
            const Matrix& pre = cache.conv_preact;
            if (dout.size() != pre.size()) {
                throw shape_error("layer " + std::to_string(li) + ": gradient size " +
                                  std::to_string(dout.size()) + " vs conv output " +
                                  std::to_string(pre.size()));
            }
            // ReLU mask on the flattened post-activation gradient.
            for (std::size_t i = 0; i < dout.size(); ++i) {
                if (pre.data[i] <= 0.0) dout[i] = 0.0;
            }
            const std::size_t out_len = pre.cols;
            Matrix din(m.in_channels, x.cols, 0.0);
            for (std::size_t oc = 0; oc < m.out_channels; ++oc) {
                for (std::size_t t = 0; t < out_len; ++t) {
                    const double g = dout[oc * out_len + t];
                    if (g == 0.0) continue;
                    lg.bias[oc] += g;
                    const std::size_t base = t * m.stride;
                    for (std::size_t ic = 0; ic < m.in_channels; ++ic) {
                        for (std::size_t k = 0; k < m.kernel_width; ++k) {
                            lg.weights(oc, ic * m.kernel_width + k) += g * x(ic, base + k);
                            din(ic, base + k) += layer.weights(oc, ic * m.kernel_width + k) * g;
                        }
                    }
                }
            }
            dout = std::move(din.data);
        }
    }
}

void check_batch(const std::vector<LayerParams>& network, const Batch& batch,
                 const std::vector<std::vector<double>>* extra, double loss_weight) {
    if (batch.inputs.empty()) {
        throw shape_error("backprop: empty batch");
    }
    if (loss_weight != 0.0 && batch.labels.size() != batch.inputs.size()) {
        throw shape_error("backprop: " + std::to_string(batch.inputs.size()) +
                          " inputs vs " + std::to_string(batch.labels.size()) + " labels");
    }
    if (extra && extra->size() != batch.inputs.size()) {
        throw shape_error("backprop: " + std::to_string(extra->size()) +
                          " extra output gradients vs " +
                          std::to_string(batch.inputs.size()) + " inputs");
    }
    const std::size_t out_dim = validate_network(network, batch.inputs.front().size());
    for (const auto& in : batch.inputs) {
        if (in.size() != batch.inputs.front().size()) {
            throw shape_error("backprop: ragged batch input sizes");
        }
    }
    if (extra) {
        for (const auto& g : *extra) {
            if (g.size() != out_dim) {
                throw shape_error("backprop: extra output gradient size " +
                                  std::to_string(g.size()) + " vs network output " +
                                  std::to_string(out_dim));
            }
        }
    }
}

} // namespace

LayerParams make_dense(std::size_t in_dim, std::size_t out_dim) {
    LayerParams p;
    p.kind = LayerKind::dense;
    p.weights = Matrix(out_dim, in_dim);
    p.bias.assign(out_dim, 0.0);
    return p;
}

LayerParams make_conv1d(std::size_t in_channels, std::size_t out_channels,
                        std::size_t kernel_width, std::size_t stride) {
    LayerParams p;
    p.kind = LayerKind::conv1d;
    p.conv = ConvMeta{in_channels, out_channels, kernel_width, stride};
    p.weights = Matrix(out_channels, in_channels * kernel_width);
    p.bias.assign(out_channels, 0.0);
    return p;
}

std::vector<double> dense_forward(const LayerParams& params,
                                  const std::vector<double>& input) {
    if (params.kind != LayerKind::dense) {
        throw shape_error("dense_forward: layer is not dense");
    }
    if (input.size() != params.weights.cols) {
        throw shape_error("dense_forward: input length " + std::to_string(input.size()) +
                          " vs weight cols " + std::to_string(params.weights.cols));
    }
    if (params.bias.size() != params.weights.rows) {
        throw shape_error("dense_forward: bias length " + std::to_string(params.bias.size()) +
                          " vs weight rows " + std::to_string(params.weights.rows));
    }
    std::vector<double> out(params.weights.rows);
    for (std::size_t i = 0; i < params.weights.rows; ++i) {
        double acc = params.bias[i];
        const double* row = &params.weights.data[i * params.weights.cols];
        for (std::size_t j = 0; j < params.weights.cols; ++j) {
            acc += row[j] * input[j];
        }
        out[i] = acc;
    }
    return out;
}

Matrix conv1d_forward(const LayerParams& params, const Matrix& signal) {
    check_conv_layer(params);
    const ConvMeta& m = *params.conv;
    if (signal.rows != m.in_channels) {
        throw shape_error("conv1d: signal has " + std::to_string(signal.rows) +
                          " channels, layer expects " + std::to_string(m.in_channels));
    }
    const std::size_t out_len = conv_output_length(m, signal.cols);
    Matrix out(m.out_channels, out_len);
    for (std::size_t oc = 0; oc < m.out_channels; ++oc) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double acc = params.bias[oc];
            const std::size_t base = t * m.stride;
            for (std::size_t ic = 0; ic < m.in_channels; ++ic) {
                const double* w = &params.weights.data[oc * params.weights.cols + ic * m.kernel_width];
                const double* x = &signal.data[ic * signal.cols + base];
                for (std::size_t k = 0; k < m.kernel_width; ++k) {
                    acc += w[k] * x[k];
                }
            }
            out(oc, t) = acc;
        }
    }
    return out;
}

std::vector<double> relu(std::vector<double> x) {
    for (double& v : x) v = std::max(0.0, v);
    return x;
}

Matrix relu(Matrix x) {
    for (double& v : x.data) v = std::max(0.0, v);
    return x;
}

SoftmaxCeResult softmax_cross_entropy(const std::vector<double>& logits,
                                      std::size_t label) {
    if (logits.empty()) {
        throw shape_error("softmax_cross_entropy: empty logits");
    }
    if (label >= logits.size()) {
        throw index_error("softmax_cross_entropy: label " + std::to_string(label) +
                          " out of range for " + std::to_string(logits.size()) + " logits");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    SoftmaxCeResult res;
    res.probabilities.resize(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        res.probabilities[i] = std::exp(logits[i] - max_logit);
        sum += res.probabilities[i];
    }
    for (double& p : res.probabilities) p /= sum;
    // loss = -(z_label - max - log sum exp(z - max)); keeps precision when the
    // label probability is close to 1.
    res.loss = -(logits[label] - max_logit - std::log(sum));
    return res;
}

std::size_t validate_network(const std::vector<LayerParams>& network,
                             std::size_t input_dim) {
    if (network.empty()) {
        throw shape_error("network has no layers");
    }
    std::size_t size = input_dim;
    for (std::size_t li = 0; li < network.size(); ++li) {
        const LayerParams& layer = network[li];
        if (layer.kind == LayerKind::conv1d) {
            check_conv_layer(layer);
            const ConvMeta& m = *layer.conv;
            if (m.in_channels == 0 || size % m.in_channels != 0) {
                throw shape_error("layer " + std::to_string(li) + ": input size " +
                                  std::to_string(size) + " not divisible by " +
                                  std::to_string(m.in_channels) + " channels");
            }
            size = m.out_channels * conv_output_length(m, size / m.in_channels);
        } else {
            if (layer.bias.size() != layer.weights.rows) {
                throw shape_error("layer " + std::to_string(li) + ": bias length " +
                                  std::to_string(layer.bias.size()) + " vs weight rows " +
                                  std::to_string(layer.weights.rows));
            }
            if (size != layer.weights.cols) {
                throw shape_error("layer " + std::to_string(li) + ": dense expects input " +
                                  std::to_string(layer.weights.cols) + ", got " +
                                  std::to_string(size));
            }
            size = layer.weights.rows;
        }
        if (size == 0) {
            throw shape_error("layer " + std::to_string(li) + ": produces empty output");
        }
    }
    return size;
}

std::vector<double> network_forward(const std::vector<LayerParams>& network,
                                    const std::vector<double>& input) {
    return forward_sample(network, input, nullptr);
}

double evaluate_loss(const std::vector<LayerParams>& network, const Batch& batch,
                     const std::vector<std::vector<double>>* extra_output_grads,
                     double loss_weight) {
    check_batch(network, batch, extra_output_grads, loss_weight);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.inputs.size());
    for (std::size_t s = 0; s < batch.inputs.size(); ++s) {
        std::vector<double> out = forward_sample(network, batch.inputs[s], nullptr);
        if (loss_weight != 0.0) {
            const int label = batch.labels[s];
            if (label < 0 || static_cast<std::size_t>(label) >= out.size()) {
                throw index_error("evaluate_loss: label " + std::to_string(label) +
                                  " out of range");
            }
            total += loss_weight * inv_n *
                     softmax_cross_entropy(out, static_cast<std::size_t>(label)).loss;
        }
        if (extra_output_grads) {
            const std::vector<double>& g = (*extra_output_grads)[s];
            for (std::size_t i = 0; i < out.size(); ++i) total += g[i] * out[i];
        }
    }
    return total;
}

BackpropResult backprop(const std::vector<LayerParams>& network, const Batch& batch,
                        const std::vector<std::vector<double>>* extra_output_grads,
                        double loss_weight) {
    check_batch(network, batch, extra_output_grads, loss_weight);
    BackpropResult res;
    res.grads = zero_gradients(network);
    const double inv_n = 1.0 / static_cast<double>(batch.inputs.size());
    for (std::size_t s = 0; s < batch.inputs.size(); ++s) {
        std::vector<LayerCache> caches;
        caches.reserve(network.size());
        std::vector<double> out = forward_sample(network, batch.inputs[s], &caches);
        std::vector<double> dout(out.size(), 0.0);
        if (loss_weight != 0.0) {
            const int label = batch.labels[s];
            if (label < 0 || static_cast<std::size_t>(label) >= out.size()) {
                throw index_error("backprop: label " + std::to_string(label) +
                                  " out of range");
            }
            SoftmaxCeResult ce = softmax_cross_entropy(out, static_cast<std::size_t>(label));
            res.loss += loss_weight * inv_n * ce.loss;
            for (std::size_t i = 0; i < out.size(); ++i) {
                dout[i] = loss_weight * inv_n * ce.probabilities[i];
            }
            dout[static_cast<std::size_t>(label)] -= loss_weight * inv_n;
        }
        if (extra_output_grads) {
            const std::vector<double>& g = (*extra_output_grads)[s];
            for (std::size_t i = 0; i < out.size(); ++i) {
                res.loss += g[i] * out[i];
                dout[i] += g[i];
            }
        }
        backward_sample(network, caches, std::move(dout), res.grads);
    }
    return res;
}

double finite_difference_check(const std::vector<LayerParams>& network,
                               const Batch& batch, double eps,
                               const std::vector<std::vector<double>>* extra_output_grads,
                               double loss_weight) {
    if (!(eps > 0.0) || eps > 1e-2) {
        throw config_error("finite_difference_check: eps must be in (0, 1e-2], got " +
                           std::to_string(eps));
    }
    BackpropResult analytic = backprop(network, batch, extra_output_grads, loss_weight);
    std::vector<LayerParams> probe = network;
    double max_rel = 0.0;
    auto probe_one = [&](double& slot, double analytic_grad) {
        const double saved = slot;
        slot = saved + eps;
        const double plus = evaluate_loss(probe, batch, extra_output_grads, loss_weight);
        slot = saved - eps;
        const double minus = evaluate_loss(probe, batch, extra_output_grads, loss_weight);
        slot = saved;
        const double fd = (plus - minus) / (2.0 * eps);
        const double rel = std::abs(analytic_grad - fd) /
                           std::max(1.0, std::abs(analytic_grad));
        max_rel = std::max(max_rel, rel);
    };
    for (std::size_t li = 0; li < probe.size(); ++li) {
        for (std::size_t i = 0; i < probe[li].weights.size(); ++i) {
            probe_one(probe[li].weights.data[i], analytic.grads.layers[li].weights.data[i]);
        }
        for (std::size_t i = 0; i < probe[li].bias.size(); ++i) {
            probe_one(probe[li].bias[i], analytic.grads.layers[li].bias[i]);
        }
    }
    return max_rel;
}

std::vector<LayerParams> sgd_step(std::vector<LayerParams> params,
                                  const Gradients& grads, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw config_error("sgd_step: learning rate must be positive, got " +
                           std::to_string(learning_rate));
    }
    if (grads.layers.size() != params.size()) {
        throw shape_error("sgd_step: " + std::to_string(grads.layers.size()) +
                          " gradient layers vs " + std::to_string(params.size()) +
                          " parameter layers");
    }
    for (std::size_t li = 0; li < params.size(); ++li) {
        LayerParams& p = params[li];
        const LayerGrads& g = grads.layers[li];
        if (!p.weights.same_shape(g.weights) || p.bias.size() != g.bias.size()) {
            throw shape_error("sgd_step: layer " + std::to_string(li) +
                              " gradient shape mismatch");
        }
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
            p.weights.data[i] -= learning_rate * g.weights.data[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            p.bias[i] -= learning_rate * g.bias[i];
        }
    }
    return params;
}

Gradients zero_gradients(const std::vector<LayerParams>& network) {
    Gradients g;
    g.layers.resize(network.size());
    for (std::size_t li = 0; li < network.size(); ++li) {
        g.layers[li].weights = Matrix(network[li].weights.rows, network[li].weights.cols);
        g.layers[li].bias.assign(network[li].bias.size(), 0.0);
    }
    return g;
}

void add_gradients_layer(LayerGrads& a, const LayerGrads& b) {
    require_same_shape(a.weights, b.weights, "add_gradients");
    if (a.bias.size() != b.bias.size()) {
        throw shape_error("add_gradients: bias length mismatch");
    }
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        a.weights.data[i] += b.weights.data[i];
    }
    for (std::size_t i = 0; i < a.bias.size(); ++i) {
        a.bias[i] += b.bias[i];
    }
}

void add_gradients(Gradients& a, const Gradients& b) {
    if (a.layers.size() != b.layers.size()) {
        throw shape_error("add_gradients: layer count mismatch");
    }
    for (std::size_t li = 0; li < a.layers.size(); ++li) {
        add_gradients_layer(a.layers[li], b.layers[li]);
    }
}

} // namespace hhhfl
