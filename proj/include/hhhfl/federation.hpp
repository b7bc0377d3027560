#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hhhfl/data.hpp"
#include "hhhfl/mmd.hpp"
#include "hhhfl/models.hpp"

namespace hhhfl {

struct Hyperparameters {
    int rounds = 100;
    int local_epochs = 1;
    int batch_size = 32;
    double learning_rate = 0.01;
    int exchange_size = 64;
};

void validate_hyperparameters(const Hyperparameters& hyper);

// One simulated transport message. Only sizes are recorded: payload_len is
// the total double count, carried as vector_count vectors of vector_len
// each. The privacy-flow check reads these lengths.
struct MessageRecord {
    int round = 0;
    std::string from;
    std::string to;
    std::string kind;
    std::size_t payload_len = 0;
    std::size_t vector_len = 0;
    std::size_t vector_count = 0;
};

class MessageLog {
public:
    void record(int round, std::string from, std::string to, std::string kind,
                std::size_t vector_len, std::size_t vector_count);
    const std::vector<MessageRecord>& records() const { return records_; }
    void clear() { records_.clear(); }
    // One JSON object per line; provenance, when given, becomes a leading
    // meta record.
    void write_jsonl(const std::string& path, const std::string& provenance = "") const;

private:
    std::vector<MessageRecord> records_;
};

// What the server sends one client at the start of a round. Foreign pools
// hold only 10-dim embeddings from other device groups, never raw features.
struct BroadcastPayload {
    int round = 0;
    ProjectorParams projector; // the client's device group projector
    ClassifierParams classifier;
    std::map<DeviceKind, Matrix> foreign_pools;
    MmdConfig mmd; // kernel bandwidth already resolved for this round
    bool exchange_enabled = true;
};

struct ClientMetrics {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
};

// What a client uploads after local training.
struct ClientUpdate {
    int client_id = 0;
    DeviceKind device = DeviceKind::MW;
    ProjectorParams projector;
    ClassifierParams classifier;
    std::size_t sample_count = 0; // examples used this round (shard size)
    ClientMetrics metrics;
    EmbeddingSample embeddings; // detached sample for exchange; may be empty
};

// A client owns its shard, its own device's projector and the shared
// classifier; it never sees another device's projector or another client's
// raw examples.
struct ClientState {
    int client_id = 0;
    DeviceKind device = DeviceKind::MW;
    ClientShard shard;
    ProjectorParams projector;
    ClassifierParams classifier;
    std::uint64_t rng_seed = 0;
};

struct ServerState {
    int round = 0; // rounds completed so far
    ModelParams global;
    std::map<DeviceKind, std::vector<int>> groups; // device -> client ids
    MmdConfig mmd;
    Hyperparameters hyper;
    std::map<DeviceKind, Matrix> embedding_pools; // last round's exchange
    double bandwidth = 1.0; // resolved kernel bandwidth for the coming round
    bool exchange_enabled = true;
};

struct EvalResult {
    std::map<DeviceKind, double> per_device;
    double pooled = 0.0;
};

struct RoundReport {
    int round = 0;
    std::map<DeviceKind, double> accuracy;
    double pooled_accuracy = 0.0;
    double mean_train_loss = 0.0;
    std::map<std::pair<DeviceKind, DeviceKind>, double> pairwise_mmd;
    double duration_ms = 0.0;
};

// Per-client payloads for one round, keyed by client_id. Each client gets
// exactly its device group's projector plus the global classifier.
std::map<int, BroadcastPayload> broadcast(const ServerState& server,
                                          MessageLog* log = nullptr);

// local_epochs of mini-batch SGD on CE + sum over foreign pools of
// lambda * MMD^2(batch embeddings, pool). The MMD gradient reaches only the
// projector, through the extra-output-gradient channel of backprop. Returns
// the updated parameters, the shard size and a fresh detached embedding
// sample. Mutates the client's local params.
ClientUpdate client_local_update(ClientState& client, const BroadcastPayload& payload,
                                 const Hyperparameters& hyper);

// Two-level weighted FedAvg: projectors averaged within each device group,
// the classifier over all clients, weights n_k / sum n. Updates are summed
// in ascending client_id order regardless of list order, and every
// aggregated value is clamped to the contributors' elementwise [min, max]
// envelope so the result is a convex combination even under rounding.
ModelParams aggregate(const ServerState& server, const std::vector<ClientUpdate>& updates);

// Concatenates the detached embedding samples per device group (ascending
// client_id); these pools are what foreign clients receive next round.
std::map<DeviceKind, Matrix> exchange_embeddings(const std::vector<ClientUpdate>& updates);

// Argmax accuracy per device and pooled over all test examples. Ties break
// to the lowest class index.
EvalResult evaluate(const ModelParams& params,
                    const std::map<DeviceKind, std::vector<LabeledExample>>& test_sets);

// The protocol engine: owns server and client state, runs rounds, records
// the message log. Single-threaded and deterministic; clients are always
// processed in client_id order.
class Federation {
public:
    Federation(const std::map<DeviceKind, DeviceConfig>& configs, SplitResult data,
               const Hyperparameters& hyper, const MmdConfig& mmd, std::uint64_t seed,
               bool exchange_enabled = true, const ProjectorTopology& topo = {},
               std::size_t embedding_dim = 10);

    RoundReport run_round();
    std::vector<RoundReport> run_all(
        const std::function<void(const RoundReport&)>& on_round = {});

    const ServerState& server() const { return server_; }
    const std::vector<ClientState>& clients() const { return clients_; }
    const MessageLog& message_log() const { return log_; }
    const std::map<DeviceKind, std::vector<LabeledExample>>& test_sets() const {
        return test_sets_;
    }

    // Server-state checkpoint (model + round + pools + bandwidth) in the
    // model checkpoint format.
    void save_state(const std::string& path) const;
    void restore_state(const std::string& path);

private:
    ServerState server_;
    std::vector<ClientState> clients_;
    std::map<DeviceKind, std::vector<LabeledExample>> test_sets_;
    MessageLog log_;
};

// Per-device baseline: the same engine restricted to one device group with
// all pair weights zero and no embedding exchange.
std::vector<RoundReport> run_baseline(const DeviceConfig& config, SplitResult data,
                                      const Hyperparameters& hyper, std::uint64_t seed,
                                      const std::function<void(const RoundReport&)>& on_round = {},
                                      const ProjectorTopology& topo = {},
                                      std::size_t embedding_dim = 10);

} // namespace hhhfl
