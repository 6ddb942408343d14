#pragma once

#include <string>
#include <vector>

#include "fednorm/norm.hpp"
#include "fednorm/ops.hpp"
#include "fednorm/tensor.hpp"

namespace fednorm {

struct ConvBlockConfig {
    std::size_t filters = 16;
    std::size_t kernel = 3;
    std::size_t stride = 1;
};

/// Small CNN: [conv -> norm -> relu (-> maxpool)] blocks, global average
/// pool, optional hidden dense, linear classifier.
struct ModelConfig {
    std::size_t in_channels = 1;
    std::size_t height = 28;
    std::size_t width = 28;
    std::vector<ConvBlockConfig> blocks = {{16}, {32}, {64}};
    std::size_t max_pools = 2;  // maxpool after the first `max_pools` blocks
    NormKind norm = NormKind::batch_norm();
    std::size_t classifier_width = 0;  // 0: single linear layer
    std::size_t num_classes = 10;
    double momentum = 0.9;  // BN/BRN running-stat momentum
    double epsilon = 1e-5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Ordered, named parameter collection; the unit FedAvg averages. Running
/// stats are included as non-trainable entries so aggregation averages them
/// along with the weights.
struct ModelParams {
    std::vector<std::pair<std::string, Tensor>> entries;

    std::size_t size() const { return entries.size(); }
    const Tensor* find(const std::string& name) const;
    bool same_manifest(const ModelParams& other) const;
    std::size_t element_count() const;
};

/// Elementwise weighted mean; weights are normalized to sum 1.
ModelParams average_params(const std::vector<ModelParams>& models, const std::vector<double>& weights);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

class Model {
public:
    explicit Model(const ModelConfig& config);

    /// Kaiming-uniform init of conv/dense weights from the config seed;
    /// γ=1, β=0, running stats at (0, 1).
    static Model build(const ModelConfig& config);
    static Model build(const ModelConfig& config, RngStream& rng);

    const ModelConfig& config() const { return config_; }

    void set_mode(Mode mode);
    Mode mode() const { return mode_; }

    /// Canonical-order named snapshot (includes γ/β and running stats).
    ModelParams to_params() const;
    void from_params(const ModelParams& params);

    /// Fresh optimizer state aligned with the trainable tensors.
    AdamState make_adam_state() const;

    /// One forward+backward+Adam step; returns the batch loss. Train mode only.
    double train_batch(const Tensor& x, const std::vector<int>& labels, AdamState& opt, double lr);

    /// N×K logits for a batch (uses the current mode's normalization semantics).
    Tensor forward(const Tensor& x);

    /// Top-1 accuracy; argmax ties broken by lowest class index. Eval mode.
    double evaluate(const Tensor& images, const std::vector<int>& labels, std::size_t batch = 256);

private:
    struct Block {
        Tensor kernels, bias;
        NormState norm;
    };

    std::vector<Tensor*> trainable_tensors();
    std::vector<const Tensor*> trainable_tensors() const;

    ModelConfig config_;
    Mode mode_ = Mode::Train;
    std::vector<Block> blocks_;
    Tensor hidden_w_, hidden_b_;  // empty when classifier_width == 0
    Tensor fc_w_, fc_b_;
};

}  // namespace fednorm
