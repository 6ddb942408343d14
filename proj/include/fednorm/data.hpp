#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fednorm/tensor.hpp"

namespace fednorm {

enum class Split { Train, Test };

struct Dataset {
    Tensor images;            // N×C×H×W
    std::vector<int> labels;  // length N
    Split split = Split::Train;
    std::vector<double> channel_mean;  // statistics applied by normalize_dataset
    std::vector<double> channel_std;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return images.dim(1); }
    std::size_t num_classes() const;

    /// Gather a subset by dataset indices.
    Dataset subset(const std::vector<std::size_t>& indices) const;
    /// First n samples.
    Dataset take(std::size_t n) const;
};

/// MNIST-style IDX pair (train-images/train-labels, t10k-images/t10k-labels).
/// Pixel bytes are scaled to [0,1].
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

/// Single IDX image/label file pair.
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path, Split split);

/// CIFAR-10 binary batches (data_batch_1..5.bin + test_batch.bin, 3073-byte
/// records, R/G/B planes).
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

Dataset load_cifar10_file(const std::string& path, Split split);

/// x <- (x - mean_c) / std_c per channel. Empty mean/std: compute them from
/// this dataset (callers reuse the train statistics for the test split).
Dataset normalize_dataset(const Dataset& ds, std::vector<double> mean = {},
                          std::vector<double> std_dev = {});

/// Per-sample train-time augmentation: p=0.5 horizontal flip, p=0.5
/// pad-4-and-random-crop back to the original size. Flip and crop draw
/// independently.
Tensor augment_batch(const Tensor& batch, RngStream& rng, std::size_t pad = 4);

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t samples_per_class = 100;
    std::size_t channels = 1;
    std::size_t height = 8;
    std::size_t width = 8;
    double separation = 4.0;  // scale of the class mean templates vs unit noise
    double noise = 1.0;
    std::uint64_t seed = 0;
};

/// Gaussian class blobs rendered as small images: per class a fixed random
/// mean template, per sample i.i.d. noise on top, squashed into [0,1].
Dataset synthetic_dataset(const SyntheticSpec& spec);

std::pair<Dataset, Dataset> synthetic_train_test(const SyntheticSpec& spec, std::size_t test_per_class);

}  // namespace fednorm
