#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgda/corpus.hpp"

namespace lgda {

/// Shape of the micro masked language model: a pre-norm transformer encoder with learned
/// positions, GELU feed-forward blocks and a final layer norm. The output projection is a
/// bias-free vocab x d_model matrix, optionally tied to the token embeddings.
struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_ff = 64;
    std::size_t max_len = 24;
    bool tie_output_to_embeddings = true;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Row-major matrix (vectors are rows x 1).
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::size_t size() const { return data.size(); }
    bool operator==(const Tensor&) const = default;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // weights are d_model x d_model, [in][out]
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1;  // d_model x d_ff
    Tensor w2, b2;  // d_ff x d_model

    bool operator==(const LayerParams&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct NamedConstTensor {
    std::string name;
    const Tensor* tensor;
};

/// All trainable weights. Gradients use the same structure.
class ModelParams {
public:
    ModelParams() = default;
    /// All tensors zero, including layer-norm gains.
    static ModelParams zeros(const ModelConfig& config);
    /// Gaussian weights (std `init_std`), unit layer-norm gains, zero biases.
    static ModelParams init(const ModelConfig& config, std::uint64_t seed, double init_std = 0.1);

    const ModelConfig& config() const noexcept { return config_; }

    Tensor token_embedding;     // vocab_size x d_model
    Tensor position_embedding;  // max_len x d_model
    std::vector<LayerParams> layers;
    Tensor final_ln_gain, final_ln_bias;
    /// Present only when the output projection is untied.
    Tensor output_projection;

    /// w_v rows: the token embedding when tied.
    const Tensor& output_weights() const {
        return config_.tie_output_to_embeddings ? token_embedding : output_projection;
    }
    Tensor& output_weights() {
        return config_.tie_output_to_embeddings ? token_embedding : output_projection;
    }

    /// Every tensor in canonical order (the checkpoint payload order).
    std::vector<NamedTensor> tensors();
    std::vector<NamedConstTensor> tensors() const;

    std::size_t parameter_count() const;
    void set_zero();
    bool all_finite() const;
    /// Same names and shapes, values ignored.
    bool same_shape(const ModelParams& other) const;
    bool operator==(const ModelParams& other) const;

private:
    explicit ModelParams(const ModelConfig& config);
    ModelConfig config_;
};

/// One input sequence with one or more masked positions to predict.
struct MaskedSequence {
    TokenSeq tokens;
    std::vector<std::pair<std::size_t, TokenId>> targets;  // (position, target token)
};

/// Single-mask training item: the shape used by prompt-based tuning.
struct MaskedItem {
    TokenSeq tokens;
    std::size_t mask_pos = 0;
    TokenId target = 0;
};

/// Probability of every vocabulary token at `mask_pos`. Requires tokens[mask_pos] == MASK.
std::vector<double> forward_mask_distribution(const ModelParams& params, const TokenSeq& input,
                                              std::size_t mask_pos);

struct LossValue {
    double sum = 0.0;        // sum of -log Pr(target | input)
    std::size_t count = 0;   // number of predicted positions
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

LossValue mlm_loss(const ModelParams& params, std::span<const MaskedItem> batch);

/// Exact gradient of `scale * loss.sum`, accumulated into `grads` (which must have the
/// same shape as params). Returns the unscaled loss.
LossValue accumulate_gradients(const ModelParams& params, std::span<const MaskedSequence> batch,
                               ModelParams& grads, double scale = 1.0);

/// Gradient of the summed NLL of the batch.
ModelParams gradients(const ModelParams& params, std::span<const MaskedItem> batch);

/// Adam moments and hyperparameters.
struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamConfig hyper;
    ModelParams first_moment;
    ModelParams second_moment;
    std::uint64_t step = 0;

    static OptimizerState for_params(const ModelParams& params, const AdamConfig& hyper);
};

/// Bias-corrected Adam update in place. Throws ShapeMismatchError on mismatched shapes.
void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state);

struct PretrainConfig {
    double mask_fraction = 0.15;
    std::size_t epochs = 5;
    std::size_t batch_size = 16;
    AdamConfig adam{};
    std::uint64_t seed = 1;
};

struct PretrainResult {
    ModelParams params;
    /// Mean loss per masked position, one entry per epoch.
    std::vector<double> epoch_loss;
};

/// MLM pretraining: each epoch shuffles the lines, replaces a `mask_fraction` share of the
/// positions of each line with MASK (at least one position per line while the fraction is
/// positive) and minimizes the batch-mean NLL. Lines longer than max_len are cut to max_len.
PretrainResult pretrain(ModelParams params, const std::vector<TokenSeq>& corpus, const PretrainConfig& config,
                        const std::function<void(std::size_t, double)>& on_epoch = {});

/// Checkpoint format, version 1, little endian:
///   8 bytes magic "LGDACKPT", u32 version, u32 reserved (0),
///   u64 vocab_size, d_model, n_layers, n_heads, d_ff, max_len, u64 tied flag,
///   u64 parameter count, then every tensor of ModelParams::tensors() in order as f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace lgda
