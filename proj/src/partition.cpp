#include "fednorm/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace fednorm {

std::vector<std::size_t> label_histogram(const std::vector<int>& labels,
                                         const std::vector<std::size_t>& indices,
                                         std::size_t num_classes) {
    std::vector<std::size_t> hist(num_classes, 0);
    for (std::size_t i : indices) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw ValueError("label out of range in histogram");
        ++hist[static_cast<std::size_t>(y)];
    }
    return hist;
}

namespace {

std::size_t num_classes_of(const std::vector<int>& labels) {
    int mx = -1;
    for (int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
}

std::vector<ClientShard> make_shards(std::size_t num_clients,
                                     std::vector<std::vector<std::size_t>> index_lists,
                                     const std::vector<int>& labels) {
    const std::size_t K = num_classes_of(labels);
    std::vector<ClientShard> shards(num_clients);
    for (std::size_t k = 0; k < num_clients; ++k) {
        shards[k].client_id = k;
        shards[k].indices = std::move(index_lists[k]);
        shards[k].label_histogram = label_histogram(labels, shards[k].indices, K);
    }
    return shards;
}

}  // namespace

std::vector<ClientShard> partition_uniform(const std::vector<int>& labels, std::size_t num_clients,
                                           RngStream& rng) {
    if (num_clients == 0) throw ValueError("partition_uniform: zero clients");
    if (num_clients > labels.size()) throw ValueError("partition_uniform: more clients than samples");

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<std::vector<std::size_t>> lists(num_clients);
    for (std::size_t i = 0; i < order.size(); ++i) lists[i % num_clients].push_back(order[i]);
    return make_shards(num_clients, std::move(lists), labels);
}

std::vector<ClientShard> partition_labels_skew(const std::vector<int>& labels, std::size_t num_clients,
                                               std::size_t classes_per_client, RngStream& rng) {
    if (num_clients == 0) throw ValueError("partition_labels_skew: zero clients");
    if (classes_per_client == 0) throw ValueError("partition_labels_skew: zero classes per client");
    const std::size_t C = num_classes_of(labels);
    if (classes_per_client > C)
        throw ValueError("partition_labels_skew: classes_per_client exceeds class count");
    if (num_clients * classes_per_client < C)
        throw ValueError("partition_labels_skew: not enough client slots to cover every class");

    // Greedy round-robin over a shuffled class list until every client slot
    // is filled; a client never receives the same class twice.
    std::vector<std::size_t> class_order(C);
    std::iota(class_order.begin(), class_order.end(), 0);
    rng.shuffle(class_order);

    std::vector<std::set<std::size_t>> assigned(num_clients);
    std::vector<std::vector<std::size_t>> clients_of_class(C);
    std::size_t free_slots = num_clients * classes_per_client;
    std::size_t cursor = 0;
    while (free_slots > 0) {
        bool progressed = false;
        for (std::size_t cls : class_order) {
            if (free_slots == 0) break;
            for (std::size_t probe = 0; probe < num_clients; ++probe) {
                const std::size_t k = (cursor + probe) % num_clients;
                if (assigned[k].size() < classes_per_client && !assigned[k].count(cls)) {
                    assigned[k].insert(cls);
                    clients_of_class[cls].push_back(k);
                    cursor = (k + 1) % num_clients;
                    --free_slots;
                    progressed = true;
                    break;
                }
            }
        }
        if (!progressed) throw ValueError("partition_labels_skew: infeasible class assignment");
    }

    // Split each class's samples evenly (+-1) among its assigned clients.
    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    std::vector<std::vector<std::size_t>> lists(num_clients);
    for (std::size_t cls = 0; cls < C; ++cls) {
        auto samples = by_class[cls];
        rng.shuffle(samples);
        const auto& owners = clients_of_class[cls];
        for (std::size_t i = 0; i < samples.size(); ++i)
            lists[owners[i % owners.size()]].push_back(samples[i]);
    }
    return make_shards(num_clients, std::move(lists), labels);
}

std::vector<double> pca_first_component(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2) throw ValueError("pca_first_component: need at least 2 samples");
    const std::size_t N = samples.size(), D = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != D) throw ShapeError("pca_first_component: ragged sample matrix");

    std::vector<double> mean(D, 0.0);
    for (const auto& s : samples)
        for (std::size_t d = 0; d < D; ++d) mean[d] += s[d];
    for (double& v : mean) v /= static_cast<double>(N);

    // Power iteration on the covariance, applied as X^T (X v) without
    // materializing the D*D matrix.
    RngStream rng(0x9e3779b9u, 0);
    std::vector<double> v(D);
    for (double& x : v) x = rng.next_normal();
    double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    for (double& x : v) x /= norm;

    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<double> w(D, 0.0);
        for (const auto& s : samples) {
            double proj = 0.0;
            for (std::size_t d = 0; d < D; ++d) proj += (s[d] - mean[d]) * v[d];
            for (std::size_t d = 0; d < D; ++d) w[d] += proj * (s[d] - mean[d]);
        }
        for (double& x : w) x /= static_cast<double>(N);
        const double eig = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        if (eig < 1e-12) throw ValueError("pca_first_component: zero-variance data");
        // Convergence on the eigenvector itself (up to sign).
        double delta = 0.0;
        for (std::size_t d = 0; d < D; ++d) delta = std::max(delta, std::abs(w[d] / eig - v[d]));
        for (std::size_t d = 0; d < D; ++d) v[d] = w[d] / eig;
        if (delta < 1e-13) break;
    }

    std::size_t imax = 0;
    for (std::size_t d = 1; d < D; ++d)
        if (std::abs(v[d]) > std::abs(v[imax])) imax = d;
    if (v[imax] < 0.0)
        for (double& x : v) x = -x;
    return v;
}

std::vector<ClientShard> partition_covariate_shift(const Tensor& images, const std::vector<int>& labels,
                                                   std::size_t num_clients, RngStream& rng) {
    if (num_clients == 0) throw ValueError("partition_covariate_shift: zero clients");
    if (images.rank() != 4 || images.shape[0] != labels.size())
        throw ShapeError("partition_covariate_shift: images/labels mismatch");
    if (num_clients > labels.size()) throw ValueError("partition_covariate_shift: more clients than samples");

    const std::size_t C = num_classes_of(labels);
    const std::size_t sample = images.size() / images.shape[0];

    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    std::vector<std::vector<std::size_t>> lists(num_clients);
    for (std::size_t cls = 0; cls < C; ++cls) {
        const auto& idx = by_class[cls];
        if (idx.empty()) continue;

        std::vector<double> projection(idx.size(), 0.0);
        if (idx.size() >= 2) {
            std::vector<std::vector<double>> flat(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                flat[i].assign(images.data.begin() + static_cast<long>(idx[i] * sample),
                               images.data.begin() + static_cast<long>((idx[i] + 1) * sample));
            const auto dir = pca_first_component(flat);
            for (std::size_t i = 0; i < idx.size(); ++i)
                projection[i] = std::inner_product(flat[i].begin(), flat[i].end(), dir.begin(), 0.0);
        }

        std::vector<std::size_t> order(idx.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return projection[a] < projection[b]; });

        // Contiguous chunks of the sorted class, chunk k to client k.
        const std::size_t n = idx.size();
        std::size_t pos = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            const std::size_t len = n / num_clients + (k < n % num_clients ? 1 : 0);
            std::vector<std::size_t> chunk;
            chunk.reserve(len);
            for (std::size_t j = 0; j < len; ++j) chunk.push_back(idx[order[pos + j]]);
            pos += len;
            rng.shuffle(chunk);  // order within a shard carries no meaning
            lists[k].insert(lists[k].end(), chunk.begin(), chunk.end());
        }
    }
    return make_shards(num_clients, std::move(lists), labels);
}

void write_shard_manifest(const std::vector<ClientShard>& shards, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open shard manifest for writing: " + path);
    for (const auto& shard : shards) {
        auto sorted = shard.indices;
        std::sort(sorted.begin(), sorted.end());
        out << shard.client_id << ":";
        for (std::size_t i : sorted) out << " " << i;
        out << "\n";
    }
}

}  // namespace fednorm
