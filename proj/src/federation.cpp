#include "hhhfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "hhhfl/errors.hpp"
#include "hhhfl/nn.hpp"
#include "hhhfl/rng.hpp"

namespace hhhfl {

namespace {

constexpr std::uint64_t kClientSeedTag = 0xC11E57ULL;
constexpr std::uint64_t kShuffleTag = 0xBA7C4ULL;
constexpr std::uint64_t kExchangeTag = 0xE8C4AULL;

std::string client_addr(int client_id) {
    return "client:" + std::to_string(client_id);
}

std::size_t flat_len(const std::vector<LayerParams>& layers) {
    std::size_t total = 0;
    for (const LayerParams& l : layers) total += l.weights.size() + l.bias.size();
    return total;
}

void check_layers_congruent(const std::vector<LayerParams>& got,
                            const std::vector<LayerParams>& want,
                            const std::string& what) {
    if (got.size() != want.size()) {
        throw protocol_error(what + ": layer count " + std::to_string(got.size()) +
                             " vs " + std::to_string(want.size()));
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].kind != want[i].kind || !got[i].weights.same_shape(want[i].weights) ||
            got[i].bias.size() != want[i].bias.size() || got[i].conv != want[i].conv) {
            throw protocol_error(what + ": layer " + std::to_string(i) + " shape mismatch");
        }
    }
}

// Canonical sample-count-weighted mean of flat parameter vectors, summed in
// the order given (callers pass contributions sorted by client_id). Each
// value is clamped to the contributors' [min, max] so rounding can never
// push the result outside the convex hull, and identical inputs aggregate
// to themselves bit-exactly.
std::vector<double> weighted_mean_flat(const std::vector<const std::vector<double>*>& flats,
                                       const std::vector<std::size_t>& counts) {
    double total = 0.0;
    for (std::size_t c : counts) total += static_cast<double>(c);
    const std::size_t dim = flats.front()->size();
    std::vector<double> acc(dim, 0.0);
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
    std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < flats.size(); ++k) {
        const double w = static_cast<double>(counts[k]) / total;
        const std::vector<double>& f = *flats[k];
        for (std::size_t i = 0; i < dim; ++i) {
            acc[i] += w * f[i];
            lo[i] = std::min(lo[i], f[i]);
            hi[i] = std::max(hi[i], f[i]);
        }
    }
    for (std::size_t i = 0; i < dim; ++i) {
        acc[i] = std::min(std::max(acc[i], lo[i]), hi[i]);
    }
    return acc;
}

std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

} // namespace

void validate_hyperparameters(const Hyperparameters& hyper) {
    if (hyper.rounds < 1) throw config_error("hyper: rounds must be >= 1");
    if (hyper.local_epochs < 1) throw config_error("hyper: local_epochs must be >= 1");
    if (hyper.batch_size < 1) throw config_error("hyper: batch_size must be >= 1");
    if (!(hyper.learning_rate > 0.0)) {
        throw config_error("hyper: learning_rate must be > 0");
    }
    if (hyper.exchange_size < 1) throw config_error("hyper: exchange_size must be >= 1");
}

void MessageLog::record(int round, std::string from, std::string to, std::string kind,
                        std::size_t vector_len, std::size_t vector_count) {
    MessageRecord rec;
    rec.round = round;
    rec.from = std::move(from);
    rec.to = std::move(to);
    rec.kind = std::move(kind);
    rec.vector_len = vector_len;
    rec.vector_count = vector_count;
    rec.payload_len = vector_len * vector_count;
    records_.push_back(std::move(rec));
}

void MessageLog::write_jsonl(const std::string& path, const std::string& provenance) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw serialization_error("cannot open message log for writing: " + path);
    }
    if (!provenance.empty()) out << provenance << '\n';
    for (const MessageRecord& rec : records_) {
        nlohmann::json j;
        j["round"] = rec.round;
        j["from"] = rec.from;
        j["to"] = rec.to;
        j["kind"] = rec.kind;
        j["payload_len"] = rec.payload_len;
        j["vector_len"] = rec.vector_len;
        j["vector_count"] = rec.vector_count;
        out << j.dump() << '\n';
    }
}

std::map<int, BroadcastPayload> broadcast(const ServerState& server, MessageLog* log) {
    if (server.groups.empty()) {
        throw protocol_error("broadcast: no registered clients");
    }
    for (const auto& entry : server.global.projectors) {
        if (!server.groups.count(entry.first)) {
            throw protocol_error("broadcast: global params carry projector for "
                                 "unregistered device " + device_name(entry.first));
        }
    }
    for (const auto& [device, ids] : server.groups) {
        if (!server.global.projectors.count(device)) {
            throw protocol_error("broadcast: no projector for registered device " +
                                 device_name(device));
        }
        if (ids.empty()) {
            throw protocol_error("broadcast: empty client group for " + device_name(device));
        }
    }

    MmdConfig resolved = server.mmd;
    resolved.kernel = server.mmd.kernel.resolved(
        server.mmd.kernel.kind == KernelKind::rbf && server.mmd.kernel.median_heuristic_policy
            ? server.bandwidth
            : server.mmd.kernel.bandwidth);

    std::map<int, BroadcastPayload> payloads;
    const int round = server.round + 1;
    for (const auto& [device, ids] : server.groups) {
        const ProjectorParams& proj = server.global.projectors.at(device);
        for (int id : ids) {
            BroadcastPayload p;
            p.round = round;
            p.projector = proj;
            p.classifier = server.global.classifier;
            p.mmd = resolved;
            p.exchange_enabled = server.exchange_enabled;
            for (const auto& [other, pool] : server.embedding_pools) {
                if (other == device || pool.rows == 0) continue;
                p.foreign_pools.emplace(other, pool);
            }
            if (log) {
                log->record(round, "server", client_addr(id), "projector",
                            flat_len(proj.layers), 1);
                log->record(round, "server", client_addr(id), "classifier",
                            flat_len(server.global.classifier.layers), 1);
                for (const auto& [other, pool] : p.foreign_pools) {
                    log->record(round, "server", client_addr(id),
                                "pool:" + device_name(other), pool.cols, pool.rows);
                }
                log->record(round, "server", client_addr(id), "bandwidth", 1, 1);
            }
            payloads.emplace(id, std::move(p));
        }
    }
    return payloads;
}

ClientUpdate client_local_update(ClientState& client, const BroadcastPayload& payload,
                                 const Hyperparameters& hyper) {
    if (payload.projector.device != client.device) {
        throw protocol_error("client " + std::to_string(client.client_id) +
                             ": received projector for " +
                             device_name(payload.projector.device) + ", device is " +
                             device_name(client.device));
    }
    if (client.shard.train.empty()) {
        throw protocol_error("client " + std::to_string(client.client_id) +
                             ": empty shard");
    }
    client.projector = payload.projector;
    client.classifier = payload.classifier;

    const std::size_t n_proj_layers = client.projector.layers.size();
    const std::size_t embedding_dim =
        client.projector.layers.back().weights.rows;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;

    for (int epoch = 0; epoch < hyper.local_epochs; ++epoch) {
        std::vector<std::size_t> order(client.shard.train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(mix_seed({client.rng_seed, static_cast<std::uint64_t>(payload.round),
                                  kShuffleTag, static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            const std::size_t bn = end - start;

            Batch batch;
            batch.inputs.reserve(bn);
            batch.labels.reserve(bn);
            for (std::size_t i = start; i < end; ++i) {
                const LabeledExample& ex = client.shard.train[order[i]];
                batch.inputs.push_back(ex.features);
                batch.labels.push_back(ex.label);
            }

            // Embeddings at the current parameters, for metrics and the MMD
            // term of this step.
            Matrix emb(bn, embedding_dim);
            for (std::size_t s = 0; s < bn; ++s) {
                std::vector<double> e =
                    project_features(client.projector, batch.inputs[s]);
                std::copy(e.begin(), e.end(), &emb.data[s * embedding_dim]);
                const std::vector<double> logits = classify(client.classifier, e);
                if (static_cast<int>(argmax_lowest(logits)) == batch.labels[s]) ++correct;
            }

            std::vector<LayerParams> net = client.projector.layers;
            net.insert(net.end(), client.classifier.layers.begin(),
                       client.classifier.layers.end());
            BackpropResult bp = backprop(net, batch);
            double batch_loss = bp.loss;

            // Domain alignment against each nonempty foreign pool.
            bool mmd_active = false;
            std::vector<std::vector<double>> extra(bn, std::vector<double>(embedding_dim, 0.0));
            for (const auto& [other, pool] : payload.foreign_pools) {
                const double weight = pair_weight(payload.mmd, client.device, other);
                if (weight <= 0.0 || pool.rows == 0) continue;
                EmbeddingSample own{client.device, emb};
                EmbeddingSample foreign{other, pool};
                batch_loss += weight * mmd_squared(own, foreign, payload.mmd.kernel);
                Matrix g = mmd_gradient(own, foreign, payload.mmd.kernel);
                for (std::size_t s = 0; s < bn; ++s) {
                    for (std::size_t d = 0; d < embedding_dim; ++d) {
                        extra[s][d] += weight * g(s, d);
                    }
                }
                mmd_active = true;
            }
            if (mmd_active) {
                // The MMD gradient flows only into the projector.
                Batch proj_batch;
                proj_batch.inputs = batch.inputs;
                BackpropResult mmd_bp =
                    backprop(client.projector.layers, proj_batch, &extra, 0.0);
                for (std::size_t li = 0; li < n_proj_layers; ++li) {
                    add_gradients_layer(bp.grads.layers[li], mmd_bp.grads.layers[li]);
                }
            }

            if (hyper.learning_rate > 0.0) {
                Gradients proj_grads, cls_grads;
                proj_grads.layers.assign(bp.grads.layers.begin(),
                                         bp.grads.layers.begin() + n_proj_layers);
                cls_grads.layers.assign(bp.grads.layers.begin() + n_proj_layers,
                                        bp.grads.layers.end());
                client.projector.layers =
                    sgd_step(std::move(client.projector.layers), proj_grads,
                             hyper.learning_rate);
                client.classifier.layers =
                    sgd_step(std::move(client.classifier.layers), cls_grads,
                             hyper.learning_rate);
            }

            loss_sum += batch_loss * static_cast<double>(bn);
            seen += bn;
        }
    }

    ClientUpdate update;
    update.client_id = client.client_id;
    update.device = client.device;
    update.projector = client.projector;
    update.classifier = client.classifier;
    update.sample_count = client.shard.train.size();
    update.metrics.train_loss = loss_sum / static_cast<double>(seen);
    update.metrics.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(seen);

    if (payload.exchange_enabled) {
        const std::size_t k = std::min<std::size_t>(
            static_cast<std::size_t>(hyper.exchange_size), client.shard.train.size());
        std::vector<std::size_t> order(client.shard.train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng pick_rng(mix_seed({client.rng_seed, static_cast<std::uint64_t>(payload.round),
                               kExchangeTag}));
        pick_rng.shuffle(order);
        update.embeddings.domain = client.device;
        update.embeddings.points = Matrix(k, embedding_dim);
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> e = project_features(
                client.projector, client.shard.train[order[i]].features);
            std::copy(e.begin(), e.end(), &update.embeddings.points.data[i * embedding_dim]);
        }
    }
    return update;
}

ModelParams aggregate(const ServerState& server, const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) {
        throw protocol_error("aggregate: no updates");
    }
    std::vector<const ClientUpdate*> sorted;
    sorted.reserve(updates.size());
    for (const ClientUpdate& u : updates) sorted.push_back(&u);
    std::sort(sorted.begin(), sorted.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) {
                  return a->client_id < b->client_id;
              });

    for (const ClientUpdate* u : sorted) {
        auto it = server.global.projectors.find(u->device);
        if (it == server.global.projectors.end()) {
            throw protocol_error("aggregate: client " + std::to_string(u->client_id) +
                                 " reports unregistered device " + device_name(u->device));
        }
        check_layers_congruent(u->projector.layers, it->second.layers,
                               "aggregate: client " + std::to_string(u->client_id) +
                                   " projector");
        check_layers_congruent(u->classifier.layers, server.global.classifier.layers,
                               "aggregate: client " + std::to_string(u->client_id) +
                                   " classifier");
        if (u->sample_count == 0) {
            throw protocol_error("aggregate: client " + std::to_string(u->client_id) +
                                 " reports zero samples");
        }
    }

    ModelParams result = server.global;
    for (const auto& [device, ids] : server.groups) {
        std::vector<std::vector<double>> flats;
        std::vector<const std::vector<double>*> flat_ptrs;
        std::vector<std::size_t> counts;
        for (const ClientUpdate* u : sorted) {
            if (u->device != device) continue;
            flats.push_back(flatten_layers(u->projector.layers));
            counts.push_back(u->sample_count);
        }
        if (flats.empty()) {
            throw protocol_error("aggregate: no update for device group " +
                                 device_name(device));
        }
        flat_ptrs.reserve(flats.size());
        for (const auto& f : flats) flat_ptrs.push_back(&f);
        const std::vector<double> mean = weighted_mean_flat(flat_ptrs, counts);
        unflatten_layers(mean, result.projectors.at(device).layers);
    }
    {
        std::vector<std::vector<double>> flats;
        std::vector<const std::vector<double>*> flat_ptrs;
        std::vector<std::size_t> counts;
        for (const ClientUpdate* u : sorted) {
            flats.push_back(flatten_layers(u->classifier.layers));
            counts.push_back(u->sample_count);
        }
        flat_ptrs.reserve(flats.size());
        for (const auto& f : flats) flat_ptrs.push_back(&f);
        const std::vector<double> mean = weighted_mean_flat(flat_ptrs, counts);
        unflatten_layers(mean, result.classifier.layers);
    }
    return result;
}

std::map<DeviceKind, Matrix> exchange_embeddings(const std::vector<ClientUpdate>& updates) {
    std::vector<const ClientUpdate*> sorted;
    sorted.reserve(updates.size());
    for (const ClientUpdate& u : updates) sorted.push_back(&u);
    std::sort(sorted.begin(), sorted.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) {
                  return a->client_id < b->client_id;
              });
    std::map<DeviceKind, Matrix> pools;
    for (const ClientUpdate* u : sorted) {
        if (u->embeddings.points.rows == 0) continue;
        Matrix& pool = pools[u->device];
        if (pool.cols == 0) {
            pool.cols = u->embeddings.points.cols;
        } else if (pool.cols != u->embeddings.points.cols) {
            throw protocol_error("exchange: embedding dimension mismatch from client " +
                                 std::to_string(u->client_id));
        }
        pool.rows += u->embeddings.points.rows;
        pool.data.insert(pool.data.end(), u->embeddings.points.data.begin(),
                         u->embeddings.points.data.end());
    }
    return pools;
}

EvalResult evaluate(const ModelParams& params,
                    const std::map<DeviceKind, std::vector<LabeledExample>>& test_sets) {
    if (test_sets.empty()) {
        throw config_error("evaluate: no test sets");
    }
    EvalResult result;
    std::size_t total_correct = 0;
    std::size_t total = 0;
    for (const auto& [device, examples] : test_sets) {
        if (examples.empty()) {
            throw config_error("evaluate: empty test set for " + device_name(device));
        }
        auto it = params.projectors.find(device);
        if (it == params.projectors.end()) {
            throw protocol_error("evaluate: no projector for test device " +
                                 device_name(device));
        }
        std::size_t correct = 0;
        for (const LabeledExample& ex : examples) {
            const std::vector<double> logits =
                classify(params.classifier, project(it->second, ex));
            if (static_cast<int>(argmax_lowest(logits)) == ex.label) ++correct;
        }
        result.per_device[device] =
            static_cast<double>(correct) / static_cast<double>(examples.size());
        total_correct += correct;
        total += examples.size();
    }
    result.pooled = static_cast<double>(total_correct) / static_cast<double>(total);
    return result;
}

Federation::Federation(const std::map<DeviceKind, DeviceConfig>& configs, SplitResult data,
                       const Hyperparameters& hyper, const MmdConfig& mmd,
                       std::uint64_t seed, bool exchange_enabled,
                       const ProjectorTopology& topo, std::size_t embedding_dim) {
    validate_hyperparameters(hyper);
    if (data.shards.empty()) {
        throw protocol_error("federation: no client shards");
    }
    server_.hyper = hyper;
    server_.mmd = mmd;
    server_.exchange_enabled = exchange_enabled;
    server_.global = init_params(configs, seed, topo, embedding_dim);
    test_sets_ = std::move(data.test_sets);

    for (ClientShard& shard : data.shards) {
        if (shard.train.empty()) {
            throw protocol_error("federation: client " + std::to_string(shard.client_id) +
                                 " registered with an empty shard");
        }
        if (!configs.count(shard.device)) {
            throw protocol_error("federation: shard for unconfigured device " +
                                 device_name(shard.device));
        }
        ClientState client;
        client.client_id = shard.client_id;
        client.device = shard.device;
        client.rng_seed = mix_seed({seed, kClientSeedTag,
                                    static_cast<std::uint64_t>(shard.client_id)});
        client.projector = server_.global.projectors.at(shard.device);
        client.classifier = server_.global.classifier;
        client.shard = std::move(shard);
        server_.groups[client.device].push_back(client.client_id);
        clients_.push_back(std::move(client));
    }
    std::sort(clients_.begin(), clients_.end(),
              [](const ClientState& a, const ClientState& b) {
                  return a.client_id < b.client_id;
              });
    for (auto& [device, ids] : server_.groups) std::sort(ids.begin(), ids.end());
}

RoundReport Federation::run_round() {
    const auto t0 = std::chrono::steady_clock::now();
    if (server_.round >= server_.hyper.rounds) {
        throw protocol_error("run_round: all " + std::to_string(server_.hyper.rounds) +
                             " rounds already executed");
    }

    std::map<int, BroadcastPayload> payloads = broadcast(server_, &log_);

    std::vector<ClientUpdate> updates;
    updates.reserve(clients_.size());
    for (ClientState& client : clients_) {
        auto it = payloads.find(client.client_id);
        if (it == payloads.end()) {
            throw protocol_error("run_round: no payload for client " +
                                 std::to_string(client.client_id));
        }
        ClientUpdate update = client_local_update(client, it->second, server_.hyper);
        log_.record(it->second.round, client_addr(update.client_id), "server",
                    "projector_update", flat_len(update.projector.layers), 1);
        log_.record(it->second.round, client_addr(update.client_id), "server",
                    "classifier_update", flat_len(update.classifier.layers), 1);
        log_.record(it->second.round, client_addr(update.client_id), "server", "metrics",
                    3, 1);
        if (update.embeddings.points.rows > 0) {
            log_.record(it->second.round, client_addr(update.client_id), "server",
                        "embeddings", update.embeddings.points.cols,
                        update.embeddings.points.rows);
        }
        updates.push_back(std::move(update));
    }

    server_.global = aggregate(server_, updates);
    if (server_.exchange_enabled) {
        server_.embedding_pools = exchange_embeddings(updates);
    }

    // Resolve the kernel bandwidth for the coming round from the pooled
    // fresh embeddings; the same value prices this round's report.
    if (server_.mmd.kernel.kind == KernelKind::rbf &&
        server_.mmd.kernel.median_heuristic_policy) {
        Matrix pooled;
        for (const auto& [device, pool] : server_.embedding_pools) {
            if (pool.rows == 0) continue;
            if (pooled.cols == 0) pooled.cols = pool.cols;
            pooled.rows += pool.rows;
            pooled.data.insert(pooled.data.end(), pool.data.begin(), pool.data.end());
        }
        server_.bandwidth = pooled.rows >= 2 ? median_heuristic(pooled) : 1.0;
    } else {
        server_.bandwidth = server_.mmd.kernel.bandwidth;
    }

    server_.round += 1;

    RoundReport report;
    report.round = server_.round;
    const KernelConfig report_kernel = server_.mmd.kernel.resolved(
        server_.mmd.kernel.kind == KernelKind::rbf &&
                server_.mmd.kernel.median_heuristic_policy
            ? server_.bandwidth
            : server_.mmd.kernel.bandwidth);
    for (auto a = server_.embedding_pools.begin(); a != server_.embedding_pools.end(); ++a) {
        for (auto b = std::next(a); b != server_.embedding_pools.end(); ++b) {
            if (a->second.rows == 0 || b->second.rows == 0) continue;
            EmbeddingSample sa{a->first, a->second};
            EmbeddingSample sb{b->first, b->second};
            report.pairwise_mmd[device_pair(a->first, b->first)] =
                mmd_squared(sa, sb, report_kernel);
        }
    }

    EvalResult eval = evaluate(server_.global, test_sets_);
    report.accuracy = eval.per_device;
    report.pooled_accuracy = eval.pooled;

    double loss_weighted = 0.0;
    double weight_total = 0.0;
    for (const ClientUpdate& u : updates) {
        loss_weighted += u.metrics.train_loss * static_cast<double>(u.sample_count);
        weight_total += static_cast<double>(u.sample_count);
    }
    report.mean_train_loss = loss_weighted / weight_total;

    report.duration_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    return report;
}

std::vector<RoundReport> Federation::run_all(
    const std::function<void(const RoundReport&)>& on_round) {
    std::vector<RoundReport> reports;
    reports.reserve(static_cast<std::size_t>(server_.hyper.rounds));
    for (int r = 0; r < server_.hyper.rounds; ++r) {
        reports.push_back(run_round());
        if (on_round) on_round(reports.back());
    }
    return reports;
}

void Federation::save_state(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.params = server_.global;
    ckpt.round = server_.round;
    for (const auto& [device, pool] : server_.embedding_pools) {
        ckpt.extras.emplace("pool:" + device_name(device), pool);
    }
    Matrix bw(1, 1);
    bw(0, 0) = server_.bandwidth;
    ckpt.extras.emplace("bandwidth", std::move(bw));
    save_checkpoint(path, ckpt);
}

void Federation::restore_state(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    FlatParams current = flatten_params(server_.global);
    FlatParams loaded = flatten_params(ckpt.params);
    if (current.manifest != loaded.manifest) {
        throw serialization_error("restore_state: checkpoint model shapes do not match "
                                  "the configured federation");
    }
    server_.global = std::move(ckpt.params);
    server_.round = ckpt.round;
    server_.embedding_pools.clear();
    for (auto& [name, m] : ckpt.extras) {
        if (name == "bandwidth") {
            server_.bandwidth = m(0, 0);
        } else if (name.rfind("pool:", 0) == 0) {
            server_.embedding_pools.emplace(parse_device(name.substr(5)), std::move(m));
        }
    }
}

std::vector<RoundReport> run_baseline(const DeviceConfig& config, SplitResult data,
                                      const Hyperparameters& hyper, std::uint64_t seed,
                                      const std::function<void(const RoundReport&)>& on_round,
                                      const ProjectorTopology& topo,
                                      std::size_t embedding_dim) {
    for (const ClientShard& shard : data.shards) {
        if (shard.device != config.kind) {
            throw config_error("run_baseline: shard for " + device_name(shard.device) +
                               " in a " + device_name(config.kind) + " baseline");
        }
    }
    std::map<DeviceKind, DeviceConfig> configs;
    configs.emplace(config.kind, config);
    MmdConfig mmd; // no pairs: every weight is zero
    Federation fed(configs, std::move(data), hyper, mmd, seed,
                   /*exchange_enabled=*/false, topo, embedding_dim);
    return fed.run_all(on_round);
}

} // namespace hhhfl
