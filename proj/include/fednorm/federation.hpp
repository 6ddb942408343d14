#pragma once

#include <vector>

#include "fednorm/data.hpp"
#include "fednorm/model.hpp"
#include "fednorm/partition.hpp"

namespace fednorm {

enum class Weighting { Plain, SampleWeighted };

struct FedConfig {
    std::size_t num_clients = 10;
    std::size_t rounds = 30;
    std::size_t epochs_per_round = 1;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    Weighting weighting = Weighting::Plain;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;  // client threads per round

    void validate() const;
};

struct ClientMeta {
    std::size_t num_classes = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t channels = 0, height = 0, width = 0;
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<double> client_losses;  // per-client mean training loss
    double test_accuracy = 0.0;         // aggregated model, global test set
    double wall_seconds = 0.0;
};

struct FederationResult {
    ModelParams best_params;
    double best_accuracy = 0.0;
    std::size_t best_round = 0;
    std::vector<RoundReport> reports;
};

/// Step 1 of the protocol: clients report metadata, the server derives the
/// model input shape and class count. Throws on inconsistent shapes.
std::pair<std::vector<ClientMeta>, ModelConfig> metadata_handshake(
    const Dataset& train, const std::vector<ClientShard>& shards, const Dataset& test,
    const ModelConfig& base_config);

struct LocalTrainResult {
    ModelParams params;
    double mean_loss = 0.0;
    std::size_t n_samples = 0;
    std::size_t steps = 0;
};

/// E full passes over the shard in B-sized minibatches with a fresh Adam
/// state; the incoming parameters are copied, never modified.
LocalTrainResult client_local_train(const ModelConfig& config, const ModelParams& params,
                                    const Dataset& train, const ClientShard& shard, std::size_t epochs,
                                    std::size_t batch_size, double lr, RngStream rng,
                                    bool augment = false);

/// R rounds of broadcast -> local train -> average -> evaluate. Results are
/// bitwise-independent of the parallel schedule.
FederationResult run_federation(const FedConfig& fed, const ModelConfig& model_config,
                                const Dataset& train, const std::vector<ClientShard>& shards,
                                const Dataset& test, bool augment = false);

}  // namespace fednorm
