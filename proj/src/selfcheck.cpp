#include "hhhfl/selfcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hhhfl/config.hpp"
#include "hhhfl/data.hpp"
#include "hhhfl/errors.hpp"
#include "hhhfl/experiment.hpp"
#include "hhhfl/federation.hpp"
#include "hhhfl/mmd.hpp"
#include "hhhfl/models.hpp"
#include "hhhfl/nn.hpp"
#include "hhhfl/rng.hpp"
#include "hhhfl/synthetic.hpp"

namespace hhhfl {

namespace {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
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
        z_normalize_inplace(x);
        batch.inputs.push_back(std::move(x));
        batch.labels.push_back(static_cast<int>(rng.index(classes)));
    }
    return batch;
}

// Central differences sit inside the linear pieces of ReLU only when no conv
// pre-activation is within the margin of zero; nets too close to a kink are
// resampled.
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

struct FdCase {
    std::vector<LayerParams> net;
    Batch batch;
};

FdCase random_dense_case(Rng& rng) {
    FdCase c;
    const std::size_t in = 3 + rng.index(6);
    const std::size_t hidden = 2 + rng.index(5);
    const std::size_t classes = 2 + rng.index(3);
    c.net.push_back(make_dense(in, hidden));
    c.net.push_back(make_dense(hidden, classes));
    fill_uniform(c.net, rng, 0.8);
    c.batch = random_batch(rng, in, classes, 4);
    return c;
}

FdCase random_conv_case(Rng& rng) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        FdCase c;
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
    throw config_error("could not sample a conv net clear of ReLU kinks");
}

FdCase random_projector_case(Rng& rng, std::size_t input_dim) {
    ProjectorTopology topo;
    topo.conv_channels = 3 + rng.index(3);
    topo.kernel_width = 8;
    topo.stride = 4;
    const std::size_t emb = 4 + rng.index(5);
    for (int attempt = 0; attempt < 200; ++attempt) {
        ProjectorParams proj =
            make_projector_shape(DeviceKind::MW, input_dim, topo, emb);
        FdCase c;
        c.net = proj.layers;
        c.net.push_back(make_dense(emb, 2));
        fill_uniform(c.net, rng, 0.5);
        c.batch = random_batch(rng, input_dim, 2, 4);
        if (conv_preacts_clear(c.net, c.batch, 5e-4)) return c;
    }
    throw config_error("could not sample a projector clear of ReLU kinks");
}

// The client's local loss: mean CE through projector+classifier plus
// lambda * MMD^2(batch embeddings, pool). Analytic gradients use the same
// two-pass composition the federation client uses; the finite-difference
// side evaluates the scalar directly.
struct CompositeCase {
    std::vector<LayerParams> proj_layers;
    std::vector<LayerParams> cls_layers;
    Batch batch;
    Matrix pool;
    double lambda = 0.7;
    KernelConfig kernel;
};

double composite_loss(const CompositeCase& c) {
    const std::size_t emb_dim = c.proj_layers.back().weights.rows;
    Matrix emb(c.batch.inputs.size(), emb_dim);
    double ce = 0.0;
    for (std::size_t s = 0; s < c.batch.inputs.size(); ++s) {
        std::vector<double> e = network_forward(c.proj_layers, c.batch.inputs[s]);
        std::copy(e.begin(), e.end(), &emb.data[s * emb_dim]);
        std::vector<double> logits = e;
        for (const LayerParams& layer : c.cls_layers) logits = dense_forward(layer, logits);
        ce += softmax_cross_entropy(logits, static_cast<std::size_t>(c.batch.labels[s])).loss;
    }
    ce /= static_cast<double>(c.batch.inputs.size());
    EmbeddingSample own{DeviceKind::MW, emb};
    EmbeddingSample foreign{DeviceKind::MU, c.pool};
    return ce + c.lambda * mmd_squared(own, foreign, c.kernel);
}

Gradients composite_analytic_grads(const CompositeCase& c) {
    std::vector<LayerParams> net = c.proj_layers;
    net.insert(net.end(), c.cls_layers.begin(), c.cls_layers.end());
    BackpropResult bp = backprop(net, c.batch);

    const std::size_t emb_dim = c.proj_layers.back().weights.rows;
    Matrix emb(c.batch.inputs.size(), emb_dim);
    for (std::size_t s = 0; s < c.batch.inputs.size(); ++s) {
        std::vector<double> e = network_forward(c.proj_layers, c.batch.inputs[s]);
        std::copy(e.begin(), e.end(), &emb.data[s * emb_dim]);
    }
    EmbeddingSample own{DeviceKind::MW, emb};
    EmbeddingSample foreign{DeviceKind::MU, c.pool};
    Matrix g = mmd_gradient(own, foreign, c.kernel);
    std::vector<std::vector<double>> extra(c.batch.inputs.size(),
                                           std::vector<double>(emb_dim, 0.0));
    for (std::size_t s = 0; s < c.batch.inputs.size(); ++s) {
        for (std::size_t d = 0; d < emb_dim; ++d) extra[s][d] = c.lambda * g(s, d);
    }
    Batch proj_batch;
    proj_batch.inputs = c.batch.inputs;
    BackpropResult mmd_bp = backprop(c.proj_layers, proj_batch, &extra, 0.0);
    for (std::size_t li = 0; li < c.proj_layers.size(); ++li) {
        add_gradients_layer(bp.grads.layers[li], mmd_bp.grads.layers[li]);
    }
    return std::move(bp.grads);
}

double composite_fd_max_rel(const CompositeCase& base, double eps) {
    Gradients analytic = composite_analytic_grads(base);
    CompositeCase probe = base;
    double max_rel = 0.0;
    auto run = [&](double& slot, double grad) {
        const double saved = slot;
        slot = saved + eps;
        const double plus = composite_loss(probe);
        slot = saved - eps;
        const double minus = composite_loss(probe);
        slot = saved;
        const double fd = (plus - minus) / (2.0 * eps);
        max_rel = std::max(max_rel, std::abs(grad - fd) / std::max(1.0, std::abs(grad)));
    };
    const std::size_t np = probe.proj_layers.size();
    for (std::size_t li = 0; li < np; ++li) {
        for (std::size_t i = 0; i < probe.proj_layers[li].weights.size(); ++i) {
            run(probe.proj_layers[li].weights.data[i], analytic.layers[li].weights.data[i]);
        }
        for (std::size_t i = 0; i < probe.proj_layers[li].bias.size(); ++i) {
            run(probe.proj_layers[li].bias[i], analytic.layers[li].bias[i]);
        }
    }
    for (std::size_t li = 0; li < probe.cls_layers.size(); ++li) {
        for (std::size_t i = 0; i < probe.cls_layers[li].weights.size(); ++i) {
            run(probe.cls_layers[li].weights.data[i],
                analytic.layers[np + li].weights.data[i]);
        }
        for (std::size_t i = 0; i < probe.cls_layers[li].bias.size(); ++i) {
            run(probe.cls_layers[li].bias[i], analytic.layers[np + li].bias[i]);
        }
    }
    return max_rel;
}

} // namespace

CheckResult check_gradient_correctness() {
    CheckResult result;
    result.name = "gradient-correctness";
    const auto t0 = clock_type::now();
    const double eps = 1e-5;
    const double tol = 1e-4;
    double worst = 0.0;
    std::string worst_family = "none";
    try {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(mix_seed({seed, 0x6AADULL}));
            auto track = [&](const char* family, double err) {
                if (err > worst) {
                    worst = err;
                    worst_family = family;
                }
            };
            {
                FdCase c = random_dense_case(rng);
                track("dense", finite_difference_check(c.net, c.batch, eps));
            }
            {
                FdCase c = random_conv_case(rng);
                track("conv1d", finite_difference_check(c.net, c.batch, eps));
            }
            {
                FdCase c = random_projector_case(rng, 24 + rng.index(24));
                track("projector-classifier-ce", finite_difference_check(c.net, c.batch, eps));
            }
            {
                CompositeCase c;
                Rng crng(mix_seed({seed, 0xC09ULL}));
                ProjectorTopology topo{3, 8, 4};
                const std::size_t input_dim = 24 + crng.index(16);
                const std::size_t emb = 5;
                for (int attempt = 0;; ++attempt) {
                    ProjectorParams proj =
                        make_projector_shape(DeviceKind::MW, input_dim, topo, emb);
                    c.proj_layers = proj.layers;
                    c.cls_layers = {make_dense(emb, 2)};
                    fill_uniform(c.proj_layers, crng, 0.5);
                    fill_uniform(c.cls_layers, crng, 0.5);
                    c.batch = random_batch(crng, input_dim, 2, 4);
                    std::vector<LayerParams> whole = c.proj_layers;
                    whole.insert(whole.end(), c.cls_layers.begin(), c.cls_layers.end());
                    if (conv_preacts_clear(whole, c.batch, 5e-4)) break;
                    if (attempt > 200) {
                        throw config_error("composite case stuck near ReLU kinks");
                    }
                }
                c.pool = Matrix(12, 5);
                for (double& v : c.pool.data) v = crng.normal();
                c.lambda = 0.25 + crng.uniform();
                c.kernel = seed % 2 == 0 ? KernelConfig::rbf_fixed(1.0 + crng.uniform())
                                         : KernelConfig::linear();
                track("ce+mmd", composite_fd_max_rel(c, eps));
            }
        }
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    const double elapsed = seconds_since(t0);
    result.pass = worst < tol && elapsed < 30.0;
    std::ostringstream detail;
    detail << "max rel err " << format_double(worst) << " (" << worst_family
           << "), tol 1e-4, " << format_double(elapsed) << "s";
    result.detail = detail.str();
    return result;
}

namespace {

// Independent naive MMD^2: explicit kernel matrices, no shortcuts shared
// with the library path.
double naive_kernel(const KernelConfig& k, const std::vector<double>& x,
                    const std::vector<double>& y) {
    if (k.kind == KernelKind::linear) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
        return acc;
    }
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-d2 / (2.0 * k.bandwidth * k.bandwidth));
}

double naive_mmd_squared(const Matrix& a, const Matrix& b, const KernelConfig& k) {
    auto row = [](const Matrix& m, std::size_t i) {
        return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols),
                                   m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.cols));
    };
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.rows; ++j) kaa += naive_kernel(k, row(a, i), row(a, j));
    }
    for (std::size_t i = 0; i < b.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) kbb += naive_kernel(k, row(b, i), row(b, j));
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) kab += naive_kernel(k, row(a, i), row(b, j));
    }
    const double n = static_cast<double>(a.rows);
    const double m = static_cast<double>(b.rows);
    return kaa / (n * n) + kbb / (m * m) - 2.0 * kab / (n * m);
}

} // namespace

CheckResult check_mmd_oracle() {
    CheckResult result;
    result.name = "mmd-oracle-equivalence";
    double worst = 0.0;
    try {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(mix_seed({seed, 0x33DULL}));
            const std::size_t n = 1 + rng.index(32);
            const std::size_t m = 1 + rng.index(32);
            const std::size_t dim = 1 + rng.index(10);
            Matrix a(n, dim), b(m, dim);
            for (double& v : a.data) v = rng.normal();
            for (double& v : b.data) v = rng.normal();
            Matrix pooled(n + m, dim);
            std::copy(a.data.begin(), a.data.end(), pooled.data.begin());
            std::copy(b.data.begin(), b.data.end(),
                      pooled.data.begin() + static_cast<std::ptrdiff_t>(n * dim));
            const double sigma =
                (n + m) >= 2 ? median_heuristic(pooled) : 1.0;
            const KernelConfig kernels[] = {KernelConfig::linear(),
                                            KernelConfig::rbf_fixed(0.7),
                                            KernelConfig::rbf_fixed(sigma)};
            for (const KernelConfig& k : kernels) {
                EmbeddingSample sa{DeviceKind::MW, a};
                EmbeddingSample sb{DeviceKind::MU, b};
                const double lib = mmd_squared(sa, sb, k);
                const double ref = naive_mmd_squared(a, b, k);
                worst = std::max(worst, std::abs(lib - ref));
            }
        }
        // Hand-derived case: a={0,2}, b={1,3} in 1-D, linear kernel.
        Matrix a(2, 1), b(2, 1);
        a(0, 0) = 0.0;
        a(1, 0) = 2.0;
        b(0, 0) = 1.0;
        b(1, 0) = 3.0;
        const double v = mmd_squared({DeviceKind::MW, a}, {DeviceKind::MU, b},
                                     KernelConfig::linear());
        if (std::abs(v - 1.0) > 1e-12) {
            result.detail = "hand case expected 1.0, got " + format_double(v);
            return result;
        }
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    result.pass = worst < 1e-10;
    result.detail = "max |library - naive| = " + format_double(worst) + ", tol 1e-10";
    return result;
}

namespace {

ModelParams random_congruent_params(const ModelParams& shape, Rng& rng) {
    ModelParams out = shape;
    for (auto& [device, proj] : out.projectors) {
        for (LayerParams& layer : proj.layers) {
            for (double& w : layer.weights.data) w = rng.uniform(-1.0, 1.0);
            for (double& b : layer.bias) b = rng.uniform(-1.0, 1.0);
        }
    }
    for (LayerParams& layer : out.classifier.layers) {
        for (double& w : layer.weights.data) w = rng.uniform(-1.0, 1.0);
        for (double& b : layer.bias) b = rng.uniform(-1.0, 1.0);
    }
    return out;
}

// Independent restatement of the canonical aggregation rule, straight from
// the raw update vectors.
std::vector<double> oracle_weighted_mean(const std::vector<std::vector<double>>& flats,
                                         const std::vector<std::size_t>& counts) {
    double total = 0.0;
    for (std::size_t c : counts) total += static_cast<double>(c);
    std::vector<double> acc(flats.front().size(), 0.0);
    for (std::size_t k = 0; k < flats.size(); ++k) {
        const double w = static_cast<double>(counts[k]) / total;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * flats[k][i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        double lo = flats.front()[i], hi = flats.front()[i];
        for (std::size_t k = 1; k < flats.size(); ++k) {
            lo = std::min(lo, flats[k][i]);
            hi = std::max(hi, flats[k][i]);
        }
        acc[i] = std::min(std::max(acc[i], lo), hi);
    }
    return acc;
}

} // namespace

CheckResult check_aggregation_exactness() {
    CheckResult result;
    result.name = "aggregation-exactness";
    try {
        std::map<DeviceKind, DeviceConfig> configs;
        for (DeviceKind device : {DeviceKind::MW, DeviceKind::MU}) {
            DeviceConfig dc = default_device_config(device);
            dc.input_dim = device == DeviceKind::MW ? 48 : 32;
            configs.emplace(device, dc);
        }
        ServerState server;
        server.global = init_params(configs, 11, ProjectorTopology{2, 8, 4}, 6);
        server.groups[DeviceKind::MW] = {0, 1};
        server.groups[DeviceKind::MU] = {2, 3, 4};

        Rng rng(mix_seed({0xA66ULL}));
        std::vector<ClientUpdate> updates;
        for (int id = 0; id < 5; ++id) {
            ClientUpdate u;
            u.client_id = id;
            u.device = id < 2 ? DeviceKind::MW : DeviceKind::MU;
            ModelParams p = random_congruent_params(server.global, rng);
            u.projector = p.projectors.at(u.device);
            u.classifier = p.classifier;
            u.sample_count = 1 + rng.index(50);
            updates.push_back(std::move(u));
        }

        const ModelParams agg = aggregate(server, updates);

        // Oracle comparison, device groups and classifier.
        for (DeviceKind device : {DeviceKind::MW, DeviceKind::MU}) {
            std::vector<std::vector<double>> flats;
            std::vector<std::size_t> counts;
            for (const ClientUpdate& u : updates) {
                if (u.device != device) continue;
                flats.push_back(flatten_layers(u.projector.layers));
                counts.push_back(u.sample_count);
            }
            const std::vector<double> want = oracle_weighted_mean(flats, counts);
            const std::vector<double> got = flatten_layers(agg.projectors.at(device).layers);
            if (want != got) {
                result.detail = "projector mean differs from oracle for " +
                                device_name(device);
                return result;
            }
        }
        {
            std::vector<std::vector<double>> flats;
            std::vector<std::size_t> counts;
            for (const ClientUpdate& u : updates) {
                flats.push_back(flatten_layers(u.classifier.layers));
                counts.push_back(u.sample_count);
            }
            if (oracle_weighted_mean(flats, counts) !=
                flatten_layers(agg.classifier.layers)) {
                result.detail = "classifier mean differs from oracle";
                return result;
            }
        }

        // Permutation invariance.
        std::vector<ClientUpdate> shuffled = {updates[3], updates[0], updates[4],
                                              updates[2], updates[1]};
        if (!(aggregate(server, shuffled) == agg)) {
            result.detail = "aggregate changed under permutation of updates";
            return result;
        }

        // Idempotence on identical updates (different sample counts).
        ModelParams same = random_congruent_params(server.global, rng);
        std::vector<ClientUpdate> identical;
        for (int id = 0; id < 5; ++id) {
            ClientUpdate u;
            u.client_id = id;
            u.device = id < 2 ? DeviceKind::MW : DeviceKind::MU;
            u.projector = same.projectors.at(u.device);
            u.classifier = same.classifier;
            u.sample_count = 1 + rng.index(9);
            identical.push_back(std::move(u));
        }
        const ModelParams agg_same = aggregate(server, identical);
        if (!(agg_same.projectors == same.projectors &&
              agg_same.classifier == same.classifier)) {
            result.detail = "identical updates did not aggregate to themselves";
            return result;
        }
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    result.pass = true;
    result.detail = "oracle equality, permutation invariance, idempotence";
    return result;
}

CheckResult check_reduction_law() {
    CheckResult result;
    result.name = "reduction-law";
    try {
        SyntheticSpec spec;
        spec.devices.push_back({DeviceKind::MW, 48, 60, 3.0, 1.0});
        const std::uint64_t seed = 21;
        auto data = generate_synthetic(spec, seed);
        SplitResult split = split_dataset(data, 1, 0.2, seed);

        DeviceConfig dc = default_device_config(DeviceKind::MW);
        dc.input_dim = 48;
        std::map<DeviceKind, DeviceConfig> configs{{DeviceKind::MW, dc}};

        Hyperparameters hyper;
        hyper.rounds = 12;
        hyper.batch_size = 16;
        hyper.learning_rate = 0.05;
        hyper.exchange_size = 16;

        MmdConfig zero_mmd; // no pairs -> every weight 0
        Federation fed(configs, split, hyper, zero_mmd, seed, /*exchange_enabled=*/true);
        const std::vector<RoundReport> hhhfl_reports = fed.run_all();
        const std::vector<RoundReport> baseline_reports =
            run_baseline(dc, split, hyper, seed);

        if (hhhfl_reports.size() != baseline_reports.size()) {
            result.detail = "report stream lengths differ";
            return result;
        }
        const std::vector<DeviceKind> devices{DeviceKind::MW};
        for (std::size_t r = 0; r < hhhfl_reports.size(); ++r) {
            const std::string a = csv_data_row(hhhfl_reports[r], devices, false);
            const std::string b = csv_data_row(baseline_reports[r], devices, false);
            if (a != b) {
                result.detail = "round " + std::to_string(r + 1) + " rows differ: '" + a +
                                "' vs '" + b + "'";
                return result;
            }
        }
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    result.pass = true;
    result.detail = "12 rounds bit-identical to the baseline runner";
    return result;
}

CheckResult check_privacy_flow() {
    CheckResult result;
    result.name = "privacy-flow";
    try {
        SyntheticSpec spec;
        spec.devices.push_back({DeviceKind::MW, 1024, 60, 4.0, 1.0});
        spec.devices.push_back({DeviceKind::EP, 440, 60, 4.0, 1.0});
        spec.devices.push_back({DeviceKind::MU, 512, 60, 4.0, 1.0});
        const std::uint64_t seed = 5;
        auto data = generate_synthetic(spec, seed);
        SplitResult split = split_dataset(data, 3, 0.2, seed);

        std::map<DeviceKind, DeviceConfig> configs;
        for (const SyntheticDeviceSpec& dev : spec.devices) {
            DeviceConfig dc = default_device_config(dev.device);
            dc.input_dim = dev.input_dim;
            configs.emplace(dev.device, dc);
        }
        Hyperparameters hyper;
        hyper.rounds = 8;
        hyper.exchange_size = 24;
        MmdConfig mmd;
        mmd.kernel = KernelConfig::rbf_median();
        mmd.weights[device_pair(DeviceKind::MW, DeviceKind::EP)] = 1.0;
        mmd.weights[device_pair(DeviceKind::MW, DeviceKind::MU)] = 1.0;
        mmd.weights[device_pair(DeviceKind::EP, DeviceKind::MU)] = 1.0;

        Federation fed(configs, split, hyper, mmd, seed);
        std::vector<RoundReport> reports = fed.run_all();

        const auto& records = fed.message_log().records();
        if (records.empty()) {
            result.detail = "message log is empty";
            return result;
        }
        std::size_t embedding_msgs = 0;
        for (const MessageRecord& rec : records) {
            if (rec.vector_len == 440 || rec.vector_len == 512 || rec.vector_len == 1024) {
                result.detail = "message '" + rec.kind + "' carries a vector of length " +
                                std::to_string(rec.vector_len);
                return result;
            }
            const bool is_embedding =
                rec.kind == "embeddings" || rec.kind.rfind("pool:", 0) == 0;
            if (is_embedding) {
                ++embedding_msgs;
                if (rec.vector_len != 10) {
                    result.detail = "embedding payload vector length " +
                                    std::to_string(rec.vector_len) + " != 10";
                    return result;
                }
            }
            if (rec.to == "server" && rec.kind != "projector_update" &&
                rec.kind != "classifier_update" && rec.kind != "metrics" &&
                rec.kind != "embeddings") {
                result.detail = "unexpected client->server message kind '" + rec.kind + "'";
                return result;
            }
        }
        if (embedding_msgs == 0) {
            result.detail = "no embedding messages were exchanged";
            return result;
        }
        for (const RoundReport& report : reports) {
            for (const auto& [device, acc] : report.accuracy) {
                if (acc < 0.0 || acc > 1.0) {
                    result.detail = "accuracy out of [0,1]";
                    return result;
                }
            }
            for (const auto& [pair, v] : report.pairwise_mmd) {
                if (v < 0.0) {
                    result.detail = "negative MMD^2 in report";
                    return result;
                }
            }
        }
        result.detail = std::to_string(records.size()) + " messages, " +
                        std::to_string(embedding_msgs) +
                        " embedding payloads, all vector lengths clean";
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    result.pass = true;
    return result;
}

namespace {

ExperimentConfig small_synthetic_config(const fs::path& out_dir) {
    ExperimentConfig cfg;
    cfg.method = Method::hhhfl;
    cfg.devices = {DeviceKind::MW, DeviceKind::MU};
    cfg.seed = 99;
    cfg.out_dir = out_dir.string();
    cfg.source = DataSource::synthetic;
    cfg.synthetic.devices.push_back({DeviceKind::MW, 48, 40, 3.0, 1.0});
    cfg.synthetic.devices.push_back({DeviceKind::MU, 36, 40, 3.0, 1.0});
    cfg.hyper.rounds = 6;
    cfg.hyper.batch_size = 16;
    cfg.hyper.exchange_size = 16;
    cfg.kernel = KernelConfig::rbf_median();
    cfg.pair_weights[device_pair(DeviceKind::MW, DeviceKind::MU)] = 1.0;
    cfg.clients_per_device = 2;
    cfg.test_fraction = 0.2;
    cfg.config_hash = "selfcheck";
    return cfg;
}

} // namespace

CheckResult check_determinism() {
    CheckResult result;
    result.name = "determinism";
    const fs::path base = fs::temp_directory_path() / "hhhfl_selfcheck_det";
    try {
        fs::remove_all(base);
        RunOptions options;
        options.log_messages = true;
        options.quiet = true;
        ExperimentConfig cfg_a = small_synthetic_config(base / "a");
        ExperimentConfig cfg_b = small_synthetic_config(base / "b");
        ExperimentResult ra = run_experiment(cfg_a, options);
        ExperimentResult rb = run_experiment(cfg_b, options);
        const bool csv_same = read_file(ra.csv_path) == read_file(rb.csv_path);
        const bool json_same = read_file(ra.summary_path) == read_file(rb.summary_path);
        const bool log_same =
            read_file(ra.message_log_path) == read_file(rb.message_log_path);
        if (!csv_same || !json_same || !log_same) {
            result.detail = std::string("mismatch:") + (csv_same ? "" : " csv") +
                            (json_same ? "" : " json") + (log_same ? "" : " messages");
            fs::remove_all(base);
            return result;
        }
        fs::remove_all(base);
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        fs::remove_all(base);
        return result;
    }
    result.pass = true;
    result.detail = "metrics.csv, summary.json and messages.jsonl byte-identical";
    return result;
}

CheckResult check_ingestion_robustness() {
    CheckResult result;
    result.name = "ingestion-robustness";
    try {
        const std::vector<std::string> must_fail = {
            "",
            "12\t34\tMW\tFP1\t5\t4",
            "12\t34\tMW\tFP1\t5\t4\t1,2,3",
            "12\t34\tXX\tFP1\t5\t3\t1,2,3",
            "12\t34\tMW\tFP1\t99\t3\t1,2,3",
            "12\t34\tMW\tFP1\t-2\t3\t1,2,3",
            "12\t34\tMW\tFP1\t5\t-3\t1,2,3",
            "12\t34\tMW\tFP1\t5\t3\t1,zz,3",
            "12\t34\tMW\tFP1\t5\t3\t1,,3",
            "12\t34\tMW\tFP1\t5\t3\t1,2,inf",
            "ab\t34\tMW\tFP1\t5\t3\t1,2,3",
            "12\t34\tMW\tFP1\t5\t3\t1,2,3\textra",
            "12\t34\tMW\t\t5\t3\t1,2,3",
            "12\t34.5\tMW\tFP1\t5\t3\t1,2,3",
            "\t\t\t\t\t\t",
        };
        for (const std::string& line : must_fail) {
            bool threw = false;
            try {
                (void)parse_mindbigdata_line(line, 1);
            } catch (const parse_error&) {
                threw = true;
            }
            if (!threw) {
                result.detail = "silently accepted malformed line: '" + line + "'";
                return result;
            }
        }

        // Random mutations of a valid line: typed error or a record that
        // satisfies every invariant, nothing else.
        const std::string valid = "12\t34\tMW\tFP1\t5\t4\t1.5,2.5,-3,0.25";
        Rng rng(mix_seed({0xF22ULL}));
        const std::string alphabet =
            "0123456789.,-+eE\tMWEPUXabz \x01\x7f";
        std::size_t mutants_parsed = 0;
        for (int i = 0; i < 500; ++i) {
            std::string line = valid;
            const std::size_t edits = 1 + rng.index(4);
            for (std::size_t e = 0; e < edits; ++e) {
                const std::size_t pos = rng.index(line.size());
                const char c = alphabet[rng.index(alphabet.size())];
                switch (rng.index(3)) {
                    case 0: line[pos] = c; break;
                    case 1: line.insert(line.begin() + static_cast<std::ptrdiff_t>(pos), c); break;
                    default: line.erase(line.begin() + static_cast<std::ptrdiff_t>(pos)); break;
                }
                if (line.empty()) break;
            }
            try {
                EegRecord rec = parse_mindbigdata_line(line, 1);
                ++mutants_parsed;
                if (rec.samples.size() != rec.size || rec.code < -1 || rec.code > 9) {
                    result.detail = "parsed record violates invariants for: '" + line + "'";
                    return result;
                }
            } catch (const parse_error&) {
                // typed rejection is the expected path
            }
        }

        // The whole corpus through the full pipeline must only count, never
        // throw.
        std::ostringstream corpus;
        for (const std::string& line : must_fail) corpus << line << "\n";
        corpus << valid << "\n";
        std::istringstream in(corpus.str());
        std::map<DeviceKind, DeviceConfig> configs;
        for (DeviceKind device : kAllDevices) {
            configs.emplace(device, default_device_config(device));
        }
        IngestStats stats;
        std::vector<EegRecord> records = parse_stream(in, configs, stats);
        AssemblyResult assembled = assemble_events(records, configs);
        for (const EegEvent& event : assembled.events) {
            (void)preprocess(event, configs.at(event.device));
        }
        result.detail = "15 fixed cases + 500 mutants (" +
                        std::to_string(mutants_parsed) +
                        " parsed clean), pipeline never crashed";
    } catch (const error& e) {
        result.detail = std::string("unexpected typed error escaped: ") + e.what();
        return result;
    }
    result.pass = true;
    return result;
}

namespace {

// Reference trainer: plain mini-batch SGD over the pooled shards, no
// federation and no MMD term. Used to sanity-check the benchmark margin.
double centralized_oracle_accuracy(const std::map<DeviceKind, DeviceConfig>& configs,
                                   const SplitResult& split, const Hyperparameters& hyper,
                                   std::uint64_t seed) {
    ModelParams params = init_params(configs, seed);
    std::map<DeviceKind, std::vector<const LabeledExample*>> train;
    for (const ClientShard& shard : split.shards) {
        for (const LabeledExample& ex : shard.train) train[shard.device].push_back(&ex);
    }
    Rng rng(mix_seed({seed, 0xCE7ULL}));
    // Same step budget as one federated run: rounds x local epochs.
    for (int epoch = 0; epoch < hyper.rounds * hyper.local_epochs; ++epoch) {
        for (auto& [device, examples] : train) {
            rng.shuffle(examples);
            ProjectorParams& proj = params.projectors.at(device);
            for (std::size_t start = 0; start < examples.size();
                 start += static_cast<std::size_t>(hyper.batch_size)) {
                const std::size_t end = std::min(
                    examples.size(), start + static_cast<std::size_t>(hyper.batch_size));
                Batch batch;
                for (std::size_t i = start; i < end; ++i) {
                    batch.inputs.push_back(examples[i]->features);
                    batch.labels.push_back(examples[i]->label);
                }
                std::vector<LayerParams> net = proj.layers;
                net.insert(net.end(), params.classifier.layers.begin(),
                           params.classifier.layers.end());
                BackpropResult bp = backprop(net, batch);
                Gradients pg, cg;
                pg.layers.assign(bp.grads.layers.begin(),
                                 bp.grads.layers.begin() +
                                     static_cast<std::ptrdiff_t>(proj.layers.size()));
                cg.layers.assign(bp.grads.layers.begin() +
                                     static_cast<std::ptrdiff_t>(proj.layers.size()),
                                 bp.grads.layers.end());
                proj.layers = sgd_step(std::move(proj.layers), pg, hyper.learning_rate);
                params.classifier.layers =
                    sgd_step(std::move(params.classifier.layers), cg, hyper.learning_rate);
            }
        }
    }
    return evaluate(params, split.test_sets).pooled;
}

} // namespace

CheckResult check_synthetic_benchmark() {
    CheckResult result;
    result.name = "synthetic-heterogeneous-benchmark";
    const auto t0 = clock_type::now();
    try {
        SyntheticSpec spec;
        spec.devices.push_back({DeviceKind::MW, 1024, 300, 4.0, 1.0});
        spec.devices.push_back({DeviceKind::EP, 440, 300, 4.0, 1.0});
        spec.devices.push_back({DeviceKind::MU, 512, 300, 4.0, 1.0});
        const std::uint64_t seed = 7;
        auto data = generate_synthetic(spec, seed);
        SplitResult split = split_dataset(data, 3, 0.2, seed);

        std::map<DeviceKind, DeviceConfig> configs;
        for (const SyntheticDeviceSpec& dev : spec.devices) {
            DeviceConfig dc = default_device_config(dev.device);
            dc.input_dim = dev.input_dim;
            configs.emplace(dev.device, dc);
        }
        Hyperparameters hyper;
        // Best-converging regime found for every method in this benchmark
        // (the same budget drives the joint run, the baselines and the
        // centralized oracle).
        hyper.learning_rate = 0.03;
        hyper.local_epochs = 3;
        MmdConfig mmd;
        mmd.kernel = KernelConfig::rbf_median();
        for (std::size_t i = 0; i < spec.devices.size(); ++i) {
            for (std::size_t j = i + 1; j < spec.devices.size(); ++j) {
                mmd.weights[device_pair(spec.devices[i].device, spec.devices[j].device)] = 1.0;
            }
        }

        Federation fed(configs, split, hyper, mmd, seed);
        std::vector<RoundReport> hhhfl_reports = fed.run_all();

        std::map<DeviceKind, double> baseline_final;
        for (const SyntheticDeviceSpec& dev : spec.devices) {
            SplitResult single;
            for (const ClientShard& shard : split.shards) {
                if (shard.device == dev.device) single.shards.push_back(shard);
            }
            single.test_sets[dev.device] = split.test_sets.at(dev.device);
            std::vector<RoundReport> reports =
                run_baseline(configs.at(dev.device), std::move(single), hyper, seed);
            baseline_final[dev.device] = reports.back().pooled_accuracy;
        }

        const double oracle = centralized_oracle_accuracy(configs, split, hyper, seed);
        const double elapsed = seconds_since(t0);

        const RoundReport& first = hhhfl_reports.front();
        const RoundReport& last = hhhfl_reports.back();

        std::ostringstream detail;
        detail << "hhhfl pooled " << format_double(last.pooled_accuracy) << "; baselines";
        bool margin_ok = true;
        for (const auto& [device, acc] : baseline_final) {
            detail << " " << device_name(device) << "=" << format_double(acc);
            if (last.pooled_accuracy < acc + 0.02) margin_ok = false;
        }
        detail << "; centralized oracle " << format_double(oracle);
        bool mmd_ok = true;
        for (const auto& [pair, v1] : first.pairwise_mmd) {
            auto it = last.pairwise_mmd.find(pair);
            if (it == last.pairwise_mmd.end() || !(it->second < v1)) {
                mmd_ok = false;
            } else {
                detail << "; mmd " << device_name(pair.first) << "+"
                       << device_name(pair.second) << " " << format_double(v1) << "->"
                       << format_double(it->second);
            }
        }
        if (first.pairwise_mmd.size() != 3) mmd_ok = false;
        detail << "; " << format_double(elapsed) << "s";

        result.pass = margin_ok && mmd_ok && elapsed < 300.0;
        if (!margin_ok) detail << "; FAIL margin < 2 points";
        if (!mmd_ok) detail << "; FAIL pairwise MMD did not shrink";
        if (elapsed >= 300.0) detail << "; FAIL runtime budget";
        result.detail = detail.str();
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    return result;
}

CheckResult check_real_data() {
    CheckResult result;
    result.name = "real-mindbigdata-run";
    const char* dir = std::getenv("HHHFL_MINDBIGDATA_DIR");
    if (dir == nullptr || std::string(dir).empty()) {
        result.skipped = true;
        result.detail = "HHHFL_MINDBIGDATA_DIR not set; skipping the real-data run";
        return result;
    }
    try {
        std::vector<std::string> paths;
        for (DeviceKind device : kAllDevices) {
            const fs::path p = fs::path(dir) / (device_name(device) + ".txt");
            if (!fs::exists(p)) {
                result.skipped = true;
                result.detail = "missing " + p.string() + "; skipping the real-data run";
                return result;
            }
            paths.push_back(p.string());
        }
        std::map<DeviceKind, DeviceConfig> configs;
        for (DeviceKind device : kAllDevices) {
            configs.emplace(device, default_device_config(device));
        }
        IngestResult ingest = ingest_files(paths, configs);
        for (DeviceKind device : kAllDevices) {
            const std::size_t n = ingest.examples.count(device)
                                      ? ingest.examples.at(device).size()
                                      : 0;
            if (n < 1000) {
                result.skipped = true;
                result.detail = "only " + std::to_string(n) + " events for " +
                                device_name(device) + " (< 1000); skipping";
                return result;
            }
        }
        const std::uint64_t seed = 13;
        SplitResult split = split_dataset(ingest.examples, 3, 0.2, seed);
        std::size_t majority = 0, total = 0;
        for (const auto& [device, examples] : split.test_sets) {
            std::size_t ones = 0;
            for (const LabeledExample& ex : examples) ones += ex.label == 1 ? 1 : 0;
            majority += std::max(ones, examples.size() - ones);
            total += examples.size();
        }
        const double majority_rate = static_cast<double>(majority) / static_cast<double>(total);

        Hyperparameters hyper;
        MmdConfig mmd;
        mmd.kernel = KernelConfig::rbf_median();
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = i + 1; j < 3; ++j) {
                mmd.weights[device_pair(kAllDevices[i], kAllDevices[j])] = 1.0;
            }
        }
        Federation fed(configs, std::move(split), hyper, mmd, seed);
        std::vector<RoundReport> reports = fed.run_all();
        const double pooled = reports.back().pooled_accuracy;
        result.pass = pooled >= majority_rate + 0.03;
        result.detail = "pooled " + format_double(pooled) + " vs majority " +
                        format_double(majority_rate) + " + 3 points";
    } catch (const error& e) {
        result.detail = std::string("error: ") + e.what();
        return result;
    }
    return result;
}

std::vector<CheckResult> run_acceptance_checks() {
    return {
        check_gradient_correctness(), check_mmd_oracle(),    check_aggregation_exactness(),
        check_reduction_law(),        check_privacy_flow(),  check_synthetic_benchmark(),
        check_determinism(),          check_ingestion_robustness(), check_real_data(),
    };
}

std::vector<CheckResult> run_selftest_checks() {
    return {
        check_gradient_correctness(), check_mmd_oracle(),   check_aggregation_exactness(),
        check_reduction_law(),        check_privacy_flow(), check_determinism(),
        check_ingestion_robustness(),
    };
}

} // namespace hhhfl
