#include "fednorm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace fednorm {

std::size_t Dataset::num_classes() const {
    int mx = -1;
    for (int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx + 1);
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    const std::size_t sample = images.size() / std::max<std::size_t>(images.shape[0], 1);
    Dataset out;
    out.split = split;
    out.channel_mean = channel_mean;
    out.channel_std = channel_std;
    out.images = Tensor({indices.size(), images.shape[1], images.shape[2], images.shape[3]});
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= size()) throw ValueError("subset: index out of range");
        std::copy(images.data.begin() + static_cast<long>(src * sample),
                  images.data.begin() + static_cast<long>((src + 1) * sample),
                  out.images.data.begin() + static_cast<long>(i * sample));
        out.labels.push_back(labels[src]);
    }
    return out;
}

Dataset Dataset::take(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return subset(idx);
}

// ---------------------------------------------------------------------------
// IDX (MNIST) loading
// ---------------------------------------------------------------------------

namespace {

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("truncated IDX header: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path, Split split) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open IDX image file: " + images_path);
    if (read_be32(img, images_path) != kIdxImagesMagic)
        throw FormatError("bad IDX image magic in " + images_path);
    const std::uint32_t n = read_be32(img, images_path);
    const std::uint32_t rows = read_be32(img, images_path);
    const std::uint32_t cols = read_be32(img, images_path);

    std::vector<unsigned char> pixels(static_cast<std::size_t>(n) * rows * cols);
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (img.gcount() != static_cast<std::streamsize>(pixels.size()))
        throw FormatError("truncated IDX image payload: " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open IDX label file: " + labels_path);
    if (read_be32(lab, labels_path) != kIdxLabelsMagic)
        throw FormatError("bad IDX label magic in " + labels_path);
    const std::uint32_t nl = read_be32(lab, labels_path);
    if (nl != n)
        throw FormatError("IDX image/label count mismatch: " + images_path + " vs " + labels_path);
    std::vector<unsigned char> raw_labels(nl);
    lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(nl));
    if (lab.gcount() != static_cast<std::streamsize>(nl))
        throw FormatError("truncated IDX label payload: " + labels_path);

    Dataset ds;
    ds.split = split;
    ds.images = Tensor({n, 1, rows, cols});
    for (std::size_t i = 0; i < pixels.size(); ++i) ds.images[i] = pixels[i] / 255.0;
    ds.labels.assign(raw_labels.begin(), raw_labels.end());
    return ds;
}

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
    Dataset train = load_idx_pair(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                                  Split::Train);
    Dataset test =
        load_idx_pair(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", Split::Test);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches
// ---------------------------------------------------------------------------

namespace {
constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 3*32*32 pixels
}

Dataset load_cifar10_file(const std::string& path, Split split) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open CIFAR batch: " + path);
    const std::streamsize len = in.tellg();
    if (len <= 0 || len % static_cast<std::streamsize>(kCifarRecord) != 0)
        throw FormatError("CIFAR batch length is not a multiple of 3073: " + path);
    const std::size_t n = static_cast<std::size_t>(len) / kCifarRecord;
    in.seekg(0);

    Dataset ds;
    ds.split = split;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(n);
    std::vector<unsigned char> record(kCifarRecord);
    for (std::size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(record.data()), static_cast<std::streamsize>(kCifarRecord));
        if (in.gcount() != static_cast<std::streamsize>(kCifarRecord))
            throw FormatError("truncated CIFAR record in " + path);
        if (record[0] > 9) throw FormatError("CIFAR label byte > 9 in " + path);
        ds.labels[i] = record[0];
        for (std::size_t j = 0; j < 3072; ++j)
            ds.images[i * 3072 + j] = record[1 + j] / 255.0;  // planes already R,G,B
    }
    return ds;
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
    Dataset train;
    train.split = Split::Train;
    bool first = true;
    for (int b = 1; b <= 5; ++b) {
        Dataset part = load_cifar10_file(dir + "/data_batch_" + std::to_string(b) + ".bin", Split::Train);
        if (first) {
            train = std::move(part);
            first = false;
        } else {
            train.images.data.insert(train.images.data.end(), part.images.data.begin(),
                                     part.images.data.end());
            train.images.shape[0] += part.images.shape[0];
            train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
        }
    }
    Dataset test = load_cifar10_file(dir + "/test_batch.bin", Split::Test);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

Dataset normalize_dataset(const Dataset& ds, std::vector<double> mean, std::vector<double> std_dev) {
    const std::size_t N = ds.images.dim(0), C = ds.images.dim(1);
    const std::size_t HW = ds.images.dim(2) * ds.images.dim(3);
    if (mean.empty()) {
        mean.assign(C, 0.0);
        std_dev.assign(C, 0.0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) mean[c] += ds.images[base + i];
            }
        const double count = static_cast<double>(N * HW);
        for (double& v : mean) v /= count;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const double d = ds.images[base + i] - mean[c];
                    std_dev[c] += d * d;
                }
            }
        for (double& v : std_dev) v = std::sqrt(v / count);
    }
    if (mean.size() != C || std_dev.size() != C)
        throw ShapeError("normalize_dataset: channel statistics length mismatch");
    for (double s : std_dev)
        if (s <= 1e-12) throw ValueError("normalize_dataset: zero channel std");

    Dataset out = ds;
    out.channel_mean = mean;
    out.channel_std = std_dev;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i)
                out.images[base + i] = (ds.images[base + i] - mean[c]) / std_dev[c];
        }
    return out;
}

Tensor augment_batch(const Tensor& batch, RngStream& rng, std::size_t pad) {
    if (batch.rank() != 4) throw ShapeError("augment_batch: input must be N*C*H*W");
    const std::size_t N = batch.shape[0], C = batch.shape[1], H = batch.shape[2], W = batch.shape[3];
    Tensor out = batch;
    for (std::size_t n = 0; n < N; ++n) {
        const bool flip = rng.next_uniform() < 0.5;
        const bool crop = rng.next_uniform() < 0.5;
        std::size_t dy = 0, dx = 0;
        if (crop) {
            dy = rng.next_below(2 * pad + 1);
            dx = rng.next_below(2 * pad + 1);
        }
        if (!flip && !crop) continue;
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    std::size_t sw = flip ? W - 1 - w : w;
                    double v;
                    if (crop) {
                        // Sample from the zero-padded image at offset (dy,dx).
                        const long sh = static_cast<long>(h + dy) - static_cast<long>(pad);
                        const long sw2 = static_cast<long>(sw + dx) - static_cast<long>(pad);
                        v = (sh >= 0 && sh < static_cast<long>(H) && sw2 >= 0 && sw2 < static_cast<long>(W))
                                ? batch.at4(n, c, sh, sw2)
                                : 0.0;
                    } else {
                        v = batch.at4(n, c, h, sw);
                    }
                    out.at4(n, c, h, w) = v;
                }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

Dataset synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw ValueError("synthetic_dataset: need at least 2 classes");
    if (spec.separation < 0.0) throw ValueError("synthetic_dataset: negative separation");
    const std::size_t D = spec.channels * spec.height * spec.width;
    const std::size_t N = spec.classes * spec.samples_per_class;

    // Fixed per-class mean templates, unit-normalized then scaled so the
    // total class signal equals `separation`.
    std::vector<std::vector<double>> templates(spec.classes, std::vector<double>(D));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        RngStream trng(spec.seed, 1000 + c);
        double norm = 0.0;
        for (double& v : templates[c]) {
            v = trng.next_normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : templates[c]) v *= spec.separation / norm;
    }

    Dataset ds;
    ds.images = Tensor({N, spec.channels, spec.height, spec.width});
    ds.labels.resize(N);
    RngStream nrng(spec.seed, 1);
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t cls = i % spec.classes;
        ds.labels[i] = static_cast<int>(cls);
        for (std::size_t d = 0; d < D; ++d) {
            const double raw = templates[cls][d] + spec.noise * nrng.next_normal();
            ds.images[i * D + d] = 1.0 / (1.0 + std::exp(-raw));  // squash into (0,1)
        }
    }
    return ds;
}

std::pair<Dataset, Dataset> synthetic_train_test(const SyntheticSpec& spec, std::size_t test_per_class) {
    SyntheticSpec all = spec;
    all.samples_per_class = spec.samples_per_class + test_per_class;
    Dataset full = synthetic_dataset(all);

    const std::size_t n_train = spec.classes * spec.samples_per_class;
    std::vector<std::size_t> train_idx(n_train), test_idx(spec.classes * test_per_class);
    for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;
    for (std::size_t i = 0; i < test_idx.size(); ++i) test_idx[i] = n_train + i;

    Dataset train = full.subset(train_idx);
    Dataset test = full.subset(test_idx);
    train.split = Split::Train;
    test.split = Split::Test;
    return {std::move(train), std::move(test)};
}

}  // namespace fednorm
