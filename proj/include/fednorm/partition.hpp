#pragma once

#include <string>
#include <vector>

#include "fednorm/tensor.hpp"

namespace fednorm {

/// Index list into a dataset plus the label histogram of those indices.
struct ClientShard {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;
    std::vector<std::size_t> label_histogram;
};

std::vector<std::size_t> label_histogram(const std::vector<int>& labels,
                                         const std::vector<std::size_t>& indices,
                                         std::size_t num_classes);

/// IID split: shuffled round-robin, shard sizes differ by at most 1.
std::vector<ClientShard> partition_uniform(const std::vector<int>& labels, std::size_t num_clients,
                                           RngStream& rng);

/// Labels quantity skew: each client receives samples from exactly
/// `classes_per_client` classes; every class lands on at least one client and
/// its samples are split evenly (±1) among its assigned clients.
std::vector<ClientShard> partition_labels_skew(const std::vector<int>& labels, std::size_t num_clients,
                                               std::size_t classes_per_client, RngStream& rng);

/// Unit-norm leading eigenvector of the sample covariance via power
/// iteration; sign fixed so the largest-magnitude entry is positive.
/// `samples` is N×D (each row one flattened sample).
std::vector<double> pca_first_component(const std::vector<std::vector<double>>& samples);

/// Covariate shift: per class, sort by projection onto that class's first
/// principal component and cut into contiguous chunks; client k gets chunk k
/// of every class, so labels stay balanced while P(x|client) shifts.
std::vector<ClientShard> partition_covariate_shift(const Tensor& images, const std::vector<int>& labels,
                                                   std::size_t num_clients, RngStream& rng);

/// Plain-text audit manifest: one line per client, "id: sorted indices".
void write_shard_manifest(const std::vector<ClientShard>& shards, const std::string& path);

}  // namespace fednorm
