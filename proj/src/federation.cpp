#include "fednorm/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <numeric>
#include <thread>

namespace fednorm {

void FedConfig::validate() const {
    if (num_clients < 1) throw ValueError("fed config: num_clients must be >= 1");
    if (rounds < 1) throw ValueError("fed config: rounds must be >= 1");
    if (epochs_per_round < 1) throw ValueError("fed config: epochs_per_round must be >= 1");
    if (batch_size < 1) throw ValueError("fed config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ValueError("fed config: learning_rate must be > 0");
}

std::pair<std::vector<ClientMeta>, ModelConfig> metadata_handshake(
    const Dataset& train, const std::vector<ClientShard>& shards, const Dataset& test,
    const ModelConfig& base_config) {
    if (shards.empty()) throw ValueError("metadata_handshake: zero clients");
    const std::size_t C = train.images.dim(1), H = train.images.dim(2), W = train.images.dim(3);
    const std::size_t classes = train.num_classes();
    const std::size_t test_per_client = test.size() / shards.size();

    std::vector<ClientMeta> metas;
    metas.reserve(shards.size());
    for (const auto& shard : shards) {
        if (shard.indices.empty()) throw ValueError("metadata_handshake: empty shard");
        ClientMeta m;
        m.num_classes = classes;
        m.train_size = shard.indices.size();
        m.test_size = test_per_client;
        m.channels = C;
        m.height = H;
        m.width = W;
        metas.push_back(m);
    }
    for (const auto& m : metas)
        if (m.channels != metas[0].channels || m.height != metas[0].height || m.width != metas[0].width)
            throw ValueError("metadata_handshake: clients disagree on input shape");

    ModelConfig config = base_config;
    config.in_channels = C;
    config.height = H;
    config.width = W;
    config.num_classes = classes;
    config.validate();
    return {std::move(metas), std::move(config)};
}

LocalTrainResult client_local_train(const ModelConfig& config, const ModelParams& params,
                                    const Dataset& train, const ClientShard& shard, std::size_t epochs,
                                    std::size_t batch_size, double lr, RngStream rng, bool augment) {
    if (epochs < 1) throw ValueError("client_local_train: epochs must be >= 1");
    if (shard.indices.empty()) throw ValueError("client_local_train: empty shard");

    Model model = Model::build(config);
    model.from_params(params);
    model.set_mode(Mode::Train);
    AdamState opt = model.make_adam_state();

    const std::size_t C = train.images.dim(1), H = train.images.dim(2), W = train.images.dim(3);
    const std::size_t sample = C * H * W;

    double loss_sum = 0.0;
    std::size_t steps = 0;
    std::vector<std::size_t> order = shard.indices;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t n = std::min(batch_size, order.size() - start);
            Tensor xb({n, C, H, W});
            std::vector<int> yb(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t src = order[start + i];
                std::copy(train.images.data.begin() + static_cast<long>(src * sample),
                          train.images.data.begin() + static_cast<long>((src + 1) * sample),
                          xb.data.begin() + static_cast<long>(i * sample));
                yb[i] = train.labels[src];
            }
            if (augment) xb = augment_batch(xb, rng);
            loss_sum += model.train_batch(xb, yb, opt, lr);
            ++steps;
        }
    }

    LocalTrainResult out;
    out.params = model.to_params();
    out.mean_loss = loss_sum / static_cast<double>(steps);
    out.n_samples = shard.indices.size();
    out.steps = steps;
    return out;
}

FederationResult run_federation(const FedConfig& fed, const ModelConfig& model_config,
                                const Dataset& train, const std::vector<ClientShard>& shards,
                                const Dataset& test, bool augment) {
    fed.validate();
    if (shards.size() != fed.num_clients) throw ValueError("run_federation: shard/client count mismatch");
    if (test.size() == 0) throw ValueError("run_federation: empty test set");

    auto [metas, config] = metadata_handshake(train, shards, test, model_config);
    config.seed = fed.seed;
    Model server = Model::build(config);
    ModelParams global = server.to_params();

    FederationResult result;
    result.best_accuracy = -1.0;

    for (std::size_t round = 0; round < fed.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<LocalTrainResult> locals(fed.num_clients);
        const std::size_t threads = std::max<std::size_t>(1, std::min(fed.parallelism, fed.num_clients));
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t k = next.fetch_add(1); k < fed.num_clients; k = next.fetch_add(1)) {
                // Per-(round, client) stream keeps results schedule-invariant.
                RngStream rng(fed.seed, (round + 1) * 0x10000ULL + k);
                locals[k] = client_local_train(config, global, train, shards[k], fed.epochs_per_round,
                                               fed.batch_size, fed.learning_rate, rng, augment);
            }
        };
        if (threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }

        std::vector<ModelParams> models;
        std::vector<double> weights;
        models.reserve(fed.num_clients);
        for (auto& lr : locals) {
            models.push_back(std::move(lr.params));
            weights.push_back(fed.weighting == Weighting::SampleWeighted
                                  ? static_cast<double>(lr.n_samples)
                                  : 1.0);
        }
        global = average_params(models, weights);

        server.from_params(global);
        const double acc = server.evaluate(test.images, test.labels);

        RoundReport report;
        report.round = round;
        for (const auto& lr : locals) report.client_losses.push_back(lr.mean_loss);
        report.test_accuracy = acc;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.reports.push_back(std::move(report));

        if (acc > result.best_accuracy) {
            result.best_accuracy = acc;
            result.best_round = round;
            result.best_params = global;
        }
    }
    return result;
}

}  // namespace fednorm
