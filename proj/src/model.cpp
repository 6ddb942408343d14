#include "fednorm/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fednorm {

void ModelConfig::validate() const {
    if (num_classes < 2) throw ValueError("model config: num_classes must be >= 2");
    if (blocks.empty()) throw ValueError("model config: at least one conv block required");
    if (in_channels == 0 || height == 0 || width == 0) throw ValueError("model config: empty input shape");
    for (const auto& b : blocks)
        if (b.filters == 0 || b.kernel == 0 || b.stride == 0)
            throw ValueError("model config: invalid conv block");
}

const Tensor* ModelParams::find(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return &t;
    return nullptr;
}

bool ModelParams::same_manifest(const ModelParams& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].first != other.entries[i].first ||
            entries[i].second.shape != other.entries[i].second.shape)
            return false;
    return true;
}

std::size_t ModelParams::element_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries) n += t.size();
    return n;
}

ModelParams average_params(const std::vector<ModelParams>& models, const std::vector<double>& weights) {
    if (models.empty()) throw ValueError("average_params: no models");
    if (weights.size() != models.size()) throw ShapeError("average_params: weight count mismatch");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ValueError("average_params: negative weight");
        total += w;
    }
    if (total <= 0.0) throw ValueError("average_params: weights sum to zero");
    for (const auto& m : models)
        if (!m.same_manifest(models[0])) throw ShapeError("average_params: manifest mismatch");

    ModelParams out = models[0];
    for (auto& [name, t] : out.entries) std::fill(t.data.begin(), t.data.end(), 0.0);
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double w = weights[i] / total;
        for (std::size_t e = 0; e < out.entries.size(); ++e) {
            const Tensor& src = models[i].entries[e].second;
            Tensor& dst = out.entries[e].second;
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint: text manifest (name + shape per entry) followed by the
// little-endian float64 payloads in canonical order.
// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");

constexpr const char* kCheckpointMagic = "fednorm-checkpoint 1";

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
    out << kCheckpointMagic << "\n" << params.entries.size() << "\n";
    for (const auto& [name, t] : params.entries) {
        out << name << " " << t.shape.size();
        for (std::size_t d : t.shape) out << " " << d;
        out << "\n";
    }
    for (const auto& [name, t] : params.entries)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw FormatError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic in " + path);
    std::size_t count = 0;
    in >> count;
    ModelParams params;
    params.entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rank = 0;
        in >> name >> rank;
        std::vector<std::size_t> shape(rank);
        for (std::size_t d = 0; d < rank; ++d) in >> shape[d];
        if (!in) throw FormatError("truncated checkpoint manifest: " + path);
        params.entries.emplace_back(name, Tensor(std::move(shape)));
    }
    in.ignore(1);  // newline after the manifest
    for (auto& [name, t] : params.entries) {
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(double)))
            throw FormatError("truncated checkpoint payload: " + path);
    }
    return params;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

Tensor kaiming_uniform(std::vector<std::size_t> shape, std::size_t fan_in, RngStream& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = (2.0 * rng.next_uniform() - 1.0) * bound;
    return t;
}

bool kind_uses_running_stats(const NormKind& k) {
    return k.algo == NormAlgo::BatchNorm || k.algo == NormAlgo::BatchRenorm;
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) { config_.validate(); }

Model Model::build(const ModelConfig& config) {
    RngStream rng(config.seed, 0);
    return build(config, rng);
}

Model Model::build(const ModelConfig& config, RngStream& rng) {
    Model model(config);
    std::size_t in_c = config.in_channels;
    for (const auto& bc : config.blocks) {
        Block b;
        b.kernels = kaiming_uniform({bc.filters, in_c, bc.kernel, bc.kernel}, in_c * bc.kernel * bc.kernel, rng);
        b.bias = Tensor::zeros({bc.filters});
        b.norm = NormState::init(bc.filters, config.momentum, config.epsilon);
        model.blocks_.push_back(std::move(b));
        in_c = bc.filters;
    }
    const std::size_t feat = in_c;
    if (config.classifier_width > 0) {
        model.hidden_w_ = kaiming_uniform({feat, config.classifier_width}, feat, rng);
        model.hidden_b_ = Tensor::zeros({config.classifier_width});
        model.fc_w_ = kaiming_uniform({config.classifier_width, config.num_classes}, config.classifier_width, rng);
    } else {
        model.fc_w_ = kaiming_uniform({feat, config.num_classes}, feat, rng);
    }
    model.fc_b_ = Tensor::zeros({config.num_classes});
    return model;
}

void Model::set_mode(Mode mode) {
    mode_ = mode;
    for (auto& b : blocks_) b.norm.mode = mode;
}

ModelParams Model::to_params() const {
    ModelParams p;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i);
        const Block& b = blocks_[i];
        p.entries.emplace_back(prefix + ".conv.weight", b.kernels);
        p.entries.emplace_back(prefix + ".conv.bias", b.bias);
        p.entries.emplace_back(prefix + ".norm.gamma", b.norm.gamma);
        p.entries.emplace_back(prefix + ".norm.beta", b.norm.beta);
        if (kind_uses_running_stats(config_.norm)) {
            p.entries.emplace_back(prefix + ".norm.running_mean", b.norm.running_mean);
            p.entries.emplace_back(prefix + ".norm.running_var", b.norm.running_var);
        }
    }
    if (config_.classifier_width > 0) {
        p.entries.emplace_back("hidden.weight", hidden_w_);
        p.entries.emplace_back("hidden.bias", hidden_b_);
    }
    p.entries.emplace_back("fc.weight", fc_w_);
    p.entries.emplace_back("fc.bias", fc_b_);
    return p;
}

void Model::from_params(const ModelParams& params) {
    const ModelParams expected = to_params();
    if (!params.same_manifest(expected)) throw ShapeError("from_params: manifest mismatch");
    std::size_t e = 0;
    auto take = [&]() -> const Tensor& { return params.entries[e++].second; };
    for (auto& b : blocks_) {
        b.kernels = take();
        b.bias = take();
        b.norm.gamma = take();
        b.norm.beta = take();
        if (kind_uses_running_stats(config_.norm)) {
            b.norm.running_mean = take();
            b.norm.running_var = take();
            b.norm.stats_initialized = true;
        }
    }
    if (config_.classifier_width > 0) {
        hidden_w_ = take();
        hidden_b_ = take();
    }
    fc_w_ = take();
    fc_b_ = take();
}

std::vector<Tensor*> Model::trainable_tensors() {
    std::vector<Tensor*> out;
    for (auto& b : blocks_) {
        out.push_back(&b.kernels);
        out.push_back(&b.bias);
        out.push_back(&b.norm.gamma);
        out.push_back(&b.norm.beta);
    }
    if (config_.classifier_width > 0) {
        out.push_back(&hidden_w_);
        out.push_back(&hidden_b_);
    }
    out.push_back(&fc_w_);
    out.push_back(&fc_b_);
    return out;
}

std::vector<const Tensor*> Model::trainable_tensors() const {
    auto mut = const_cast<Model*>(this)->trainable_tensors();
    return {mut.begin(), mut.end()};
}

AdamState Model::make_adam_state() const { return AdamState::init(trainable_tensors()); }

namespace {

/// Per-layer NormKind: GroupNorm falls back to the largest divisor of the
/// channel count not exceeding the requested group count.
NormKind layer_kind(const NormKind& requested, std::size_t channels) {
    NormKind k = requested;
    if (k.algo == NormAlgo::GroupNorm) k.groups = default_group_count(channels, k.groups);
    return k;
}

struct BlockCaches {
    Conv2dCache conv;
    NormCache norm;
    ReluCache relu;
    MaxPool2Cache pool;
    bool pooled = false;
};

}  // namespace

Tensor Model::forward(const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        auto& b = blocks_[i];
        const std::size_t pad = config_.blocks[i].kernel / 2;
        h = conv2d(h, b.kernels, b.bias, config_.blocks[i].stride, pad);
        h = norm_forward(layer_kind(config_.norm, config_.blocks[i].filters), h, b.norm);
        h = relu(h);
        if (i < config_.max_pools) h = maxpool2(h);
    }
    h = global_avg_pool(h);
    if (config_.classifier_width > 0) h = relu(dense(h, hidden_w_, hidden_b_));
    return dense(h, fc_w_, fc_b_);
}

double Model::train_batch(const Tensor& x, const std::vector<int>& labels, AdamState& opt, double lr) {
    if (mode_ != Mode::Train) throw ValueError("train_batch: model is in Eval mode");
    if (x.rank() != 4 || x.shape[0] == 0) throw ValueError("train_batch: empty batch");

    std::vector<BlockCaches> caches(blocks_.size());
    Tensor h = x;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        auto& b = blocks_[i];
        auto& c = caches[i];
        const std::size_t pad = config_.blocks[i].kernel / 2;
        h = conv2d(h, b.kernels, b.bias, config_.blocks[i].stride, pad, &c.conv);
        h = norm_forward(layer_kind(config_.norm, config_.blocks[i].filters), h, b.norm, &c.norm);
        h = relu(h, &c.relu);
        if (i < config_.max_pools) {
            h = maxpool2(h, &c.pool);
            c.pooled = true;
        }
    }
    GapCache gap_cache;
    h = global_avg_pool(h, &gap_cache);
    DenseCache hidden_cache, fc_cache;
    ReluCache hidden_relu_cache;
    if (config_.classifier_width > 0)
        h = relu(dense(h, hidden_w_, hidden_b_, &hidden_cache), &hidden_relu_cache);
    Tensor logits = dense(h, fc_w_, fc_b_, &fc_cache);

    SoftmaxXentCache loss_cache;
    const double loss = softmax_cross_entropy(logits, labels, &loss_cache);

    // Backward, mirroring the forward order.
    Tensor d = softmax_cross_entropy_backward(loss_cache);
    DenseGrads fc_g = dense_backward(fc_cache, d);
    d = std::move(fc_g.dx);
    DenseGrads hidden_g;
    if (config_.classifier_width > 0) {
        d = relu_backward(hidden_relu_cache, d);
        hidden_g = dense_backward(hidden_cache, d);
        d = std::move(hidden_g.dx);
    }
    d = global_avg_pool_backward(gap_cache, d);

    std::vector<Conv2dGrads> conv_grads(blocks_.size());
    std::vector<NormGrads> norm_grads(blocks_.size());
    for (std::size_t i = blocks_.size(); i-- > 0;) {
        auto& c = caches[i];
        if (c.pooled) d = maxpool2_backward(c.pool, d);
        d = relu_backward(c.relu, d);
        norm_grads[i] = norm_backward(c.norm, d);
        conv_grads[i] = conv2d_backward(c.conv, norm_grads[i].dx);
        d = std::move(conv_grads[i].dx);
    }

    std::vector<const Tensor*> grads;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        grads.push_back(&conv_grads[i].dkernels);
        grads.push_back(&conv_grads[i].dbias);
        grads.push_back(&norm_grads[i].dgamma);
        grads.push_back(&norm_grads[i].dbeta);
    }
    if (config_.classifier_width > 0) {
        grads.push_back(&hidden_g.dw);
        grads.push_back(&hidden_g.dbias);
    }
    grads.push_back(&fc_g.dw);
    grads.push_back(&fc_g.dbias);

    adam_step(trainable_tensors(), grads, opt, lr);
    return loss;
}

double Model::evaluate(const Tensor& images, const std::vector<int>& labels, std::size_t batch) {
    if (images.rank() != 4 || images.shape[0] == 0) throw ValueError("evaluate: empty dataset");
    if (labels.size() != images.shape[0]) throw ShapeError("evaluate: label count mismatch");
    const Mode saved = mode_;
    set_mode(Mode::Eval);

    const std::size_t N = images.shape[0];
    const std::size_t C = images.shape[1], H = images.shape[2], W = images.shape[3];
    const std::size_t sample = C * H * W;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < N; start += batch) {
        const std::size_t n = std::min(batch, N - start);
        Tensor xb({n, C, H, W});
        std::copy(images.data.begin() + static_cast<long>(start * sample),
                  images.data.begin() + static_cast<long>((start + n) * sample), xb.data.begin());
        Tensor logits = forward(xb);
        const std::size_t K = logits.shape[1];
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (logits[i * K + k] > logits[i * K + best]) best = k;  // ties: lowest index
            if (static_cast<int>(best) == labels[start + i]) ++correct;
        }
    }

    set_mode(saved);
    return static_cast<double>(correct) / static_cast<double>(N);
}

}  // namespace fednorm
