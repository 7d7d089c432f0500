#include "lgda/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "lgda/errors.hpp"
#include "lgda/rng.hpp"

namespace lgda {

void ModelConfig::validate() const {
    if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_len == 0) {
        throw ConfigError("model dimensions must all be at least 1");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
    config.validate();
    const auto d = config.d_model;
    token_embedding = Tensor(config.vocab_size, d);
    position_embedding = Tensor(config.max_len, d);
    layers.resize(config.n_layers);
    for (auto& l : layers) {
        l.ln1_gain = Tensor(d, 1);
        l.ln1_bias = Tensor(d, 1);
        l.wq = Tensor(d, d);
        l.bq = Tensor(d, 1);
        l.wk = Tensor(d, d);
        l.bk = Tensor(d, 1);
        l.wv = Tensor(d, d);
        l.bv = Tensor(d, 1);
        l.wo = Tensor(d, d);
        l.bo = Tensor(d, 1);
        l.ln2_gain = Tensor(d, 1);
        l.ln2_bias = Tensor(d, 1);
        l.w1 = Tensor(d, config.d_ff);
        l.b1 = Tensor(config.d_ff, 1);
        l.w2 = Tensor(config.d_ff, d);
        l.b2 = Tensor(d, 1);
    }
    final_ln_gain = Tensor(d, 1);
    final_ln_bias = Tensor(d, 1);
    if (!config.tie_output_to_embeddings) output_projection = Tensor(config.vocab_size, d);
}

ModelParams ModelParams::zeros(const ModelConfig& config) { return ModelParams(config); }

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed, double init_std) {
    ModelParams p(config);
    Rng rng(seed);
    for (auto& [name, t] : p.tensors()) {
        const bool is_gain = name.ends_with("_gain");
        const bool is_bias = t->cols == 1 && !is_gain;
        for (auto& v : t->data) {
            if (is_gain) {
                v = 1.0;
            } else if (is_bias) {
                v = 0.0;
            } else {
                v = init_std * rng.normal();
            }
        }
    }
    return p;
}

std::vector<NamedTensor> ModelParams::tensors() {
    std::vector<NamedTensor> out;
    out.push_back({"token_embedding", &token_embedding});
    out.push_back({"position_embedding", &position_embedding});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const auto p = "layer" + std::to_string(i) + ".";
        out.push_back({p + "ln1_gain", &l.ln1_gain});
        out.push_back({p + "ln1_bias", &l.ln1_bias});
        out.push_back({p + "wq", &l.wq});
        out.push_back({p + "bq", &l.bq});
        out.push_back({p + "wk", &l.wk});
        out.push_back({p + "bk", &l.bk});
        out.push_back({p + "wv", &l.wv});
        out.push_back({p + "bv", &l.bv});
        out.push_back({p + "wo", &l.wo});
        out.push_back({p + "bo", &l.bo});
        out.push_back({p + "ln2_gain", &l.ln2_gain});
        out.push_back({p + "ln2_bias", &l.ln2_bias});
        out.push_back({p + "w1", &l.w1});
        out.push_back({p + "b1", &l.b1});
        out.push_back({p + "w2", &l.w2});
        out.push_back({p + "b2", &l.b2});
    }
    out.push_back({"final_ln_gain", &final_ln_gain});
    out.push_back({"final_ln_bias", &final_ln_bias});
    if (!config_.tie_output_to_embeddings) out.push_back({"output_projection", &output_projection});
    return out;
}

std::vector<NamedConstTensor> ModelParams::tensors() const {
    std::vector<NamedConstTensor> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->tensors()) out.push_back({name, t});
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors()) n += t->size();
    return n;
}

void ModelParams::set_zero() {
    for (auto& [name, t] : tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
}

bool ModelParams::all_finite() const {
    for (const auto& [name, t] : tensors()) {
        for (double v : t->data) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    const auto a = tensors();
    const auto b = other.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || a[i].tensor->rows != b[i].tensor->rows ||
            a[i].tensor->cols != b[i].tensor->cols) {
            return false;
        }
    }
    return true;
}

bool ModelParams::operator==(const ModelParams& other) const {
    if (!(config_ == other.config_) || !same_shape(other)) return false;
    const auto a = tensors();
    const auto b = other.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
        // Bitwise, so that -0.0 != 0.0 and NaN payloads compare by representation.
        if (std::memcmp(a[i].tensor->data.data(), b[i].tensor->data.data(),
                        a[i].tensor->size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

/// Dense row-major activations, T x width.
struct Activations {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Activations() = default;
    Activations(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double* row(std::size_t r) { return v.data() + r * cols; }
    const double* row(std::size_t r) const { return v.data() + r * cols; }
};

struct LayerNormCache {
    Activations xhat;
    std::vector<double> rstd;
};

void layer_norm_forward(const Activations& x, const Tensor& gain, const Tensor& bias, Activations& y,
                        LayerNormCache& cache) {
    const auto T = x.rows, d = x.cols;
    y = Activations(T, d);
    cache.xhat = Activations(T, d);
    cache.rstd.assign(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = x.row(t);
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.rstd[t] = rstd;
        double* xh = cache.xhat.row(t);
        double* yr = y.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mean) * rstd;
            yr[j] = gain.data[j] * xh[j] + bias.data[j];
        }
    }
}

/// dx += LN backward of dy; accumulates gain/bias gradients.
void layer_norm_backward(const Activations& dy, const LayerNormCache& cache, const Tensor& gain,
                         Tensor& dgain, Tensor& dbias, Activations& dx) {
    const auto T = dy.rows, d = dy.cols;
    std::vector<double> dxhat(d);
    for (std::size_t t = 0; t < T; ++t) {
        const double* dyr = dy.row(t);
        const double* xh = cache.xhat.row(t);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dgain.data[j] += dyr[j] * xh[j];
            dbias.data[j] += dyr[j];
            dxhat[j] = dyr[j] * gain.data[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        double* dxr = dx.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            dxr[j] += cache.rstd[t] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

/// y = x W + b with W stored [in][out].
void linear_forward(const Activations& x, const Tensor& w, const Tensor& b, Activations& y) {
    const auto T = x.rows, in = w.rows, out = w.cols;
    y = Activations(T, out);
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = x.row(t);
        double* yr = y.row(t);
        for (std::size_t o = 0; o < out; ++o) yr[o] = b.data[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const double* wr = w.data.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
        }
    }
}

/// Accumulates dW, db and dx (+=) for y = x W + b.
void linear_backward(const Activations& x, const Tensor& w, const Activations& dy, Tensor& dw, Tensor& db,
                     Activations& dx) {
    const auto T = x.rows, in = w.rows, out = w.cols;
    for (std::size_t t = 0; t < T; ++t) {
        const double* xr = x.row(t);
        const double* dyr = dy.row(t);
        double* dxr = dx.row(t);
        for (std::size_t o = 0; o < out; ++o) db.data[o] += dyr[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = w.data.data() + i * out;
            double* dwr = dw.data.data() + i * out;
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
                dwr[o] += xr[i] * dyr[o];
                acc += dyr[o] * wr[o];
            }
            dxr[i] += acc;
        }
    }
}

struct LayerCache {
    Activations input;  // residual stream entering the layer
    LayerNormCache ln1;
    Activations normed1, q, k, v;
    std::vector<double> attn;  // heads x T x T probabilities
    Activations context;
    Activations mid;  // residual stream after attention
    LayerNormCache ln2;
    Activations normed2, hidden_pre, hidden_act;
};

struct ForwardCache {
    TokenSeq tokens;
    std::vector<LayerCache> layers;
    Activations last;  // residual stream after the final layer
    LayerNormCache final_ln;
    Activations output;  // final hidden states h
};

void check_input(const ModelConfig& cfg, const TokenSeq& tokens) {
    if (tokens.empty()) throw LengthError("model input is empty");
    if (tokens.size() > cfg.max_len) {
        throw LengthError("input length " + std::to_string(tokens.size()) + " exceeds max_len " +
                          std::to_string(cfg.max_len));
    }
    for (TokenId t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
            throw Error("token id " + std::to_string(t) + " outside the model vocabulary");
        }
    }
}

void run_forward(const ModelParams& params, const TokenSeq& tokens, ForwardCache& cache) {
    const auto& cfg = params.config();
    check_input(cfg, tokens);
    const auto T = tokens.size(), d = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    cache.tokens = tokens;
    Activations x(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        auto e = params.token_embedding.row(static_cast<std::size_t>(tokens[t]));
        auto p = params.position_embedding.row(t);
        for (std::size_t j = 0; j < d; ++j) x.row(t)[j] = e[j] + p[j];
    }

    cache.layers.resize(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& L = params.layers[li];
        auto& c = cache.layers[li];
        c.input = x;
        layer_norm_forward(x, L.ln1_gain, L.ln1_bias, c.normed1, c.ln1);
        linear_forward(c.normed1, L.wq, L.bq, c.q);
        linear_forward(c.normed1, L.wk, L.bk, c.k);
        linear_forward(c.normed1, L.wv, L.bv, c.v);
        c.attn.assign(H * T * T, 0.0);
        c.context = Activations(T, d);
        for (std::size_t h = 0; h < H; ++h) {
            const auto off = h * dh;
            for (std::size_t i = 0; i < T; ++i) {
                double* a = c.attn.data() + (h * T + i) * T;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < T; ++j) {
                    double s = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) s += c.q.row(i)[off + e] * c.k.row(j)[off + e];
                    a[j] = s * attn_scale;
                    mx = std::max(mx, a[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < T; ++j) {
                    a[j] = std::exp(a[j] - mx);
                    z += a[j];
                }
                for (std::size_t j = 0; j < T; ++j) a[j] /= z;
                double* ctx = c.context.row(i) + off;
                for (std::size_t j = 0; j < T; ++j) {
                    const double* vr = c.v.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) ctx[e] += a[j] * vr[e];
                }
            }
        }
        Activations attn_out;
        linear_forward(c.context, L.wo, L.bo, attn_out);
        c.mid = x;
        for (std::size_t i = 0; i < c.mid.v.size(); ++i) c.mid.v[i] += attn_out.v[i];

        layer_norm_forward(c.mid, L.ln2_gain, L.ln2_bias, c.normed2, c.ln2);
        linear_forward(c.normed2, L.w1, L.b1, c.hidden_pre);
        c.hidden_act = c.hidden_pre;
        for (auto& u : c.hidden_act.v) u = gelu(u);
        Activations ff_out;
        linear_forward(c.hidden_act, L.w2, L.b2, ff_out);
        x = c.mid;
        for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += ff_out.v[i];
    }
    cache.last = x;
    layer_norm_forward(x, params.final_ln_gain, params.final_ln_bias, cache.output, cache.final_ln);
}

/// logits = W_out h for one position.
void output_logits(const ModelParams& params, const double* hidden, std::vector<double>& logits) {
    const auto& w = params.output_weights();
    logits.assign(w.rows, 0.0);
    for (std::size_t v = 0; v < w.rows; ++v) {
        const double* wr = w.data.data() + v * w.cols;
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) s += wr[j] * hidden[j];
        logits[v] = s;
    }
}

/// Softmax in place; returns log of the normalizer.
double softmax_in_place(std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (double& l : logits) l /= z;
    return mx + std::log(z);
}

void run_backward(const ModelParams& params, const ForwardCache& cache, const Activations& d_output,
                  ModelParams& g) {
    const auto& cfg = params.config();
    const auto T = cache.tokens.size(), d = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Activations dx(T, d);
    layer_norm_backward(d_output, cache.final_ln, params.final_ln_gain, g.final_ln_gain, g.final_ln_bias, dx);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& L = params.layers[li];
        auto& G = g.layers[li];
        const auto& c = cache.layers[li];

        // Feed-forward block: x_out = mid + W2 gelu(W1 ln2(mid)).
        Activations d_act(T, cfg.d_ff);
        Activations d_normed2(T, d);
        linear_backward(c.hidden_act, L.w2, dx, G.w2, G.b2, d_act);
        for (std::size_t i = 0; i < d_act.v.size(); ++i) d_act.v[i] *= gelu_grad(c.hidden_pre.v[i]);
        linear_backward(c.normed2, L.w1, d_act, G.w1, G.b1, d_normed2);
        Activations d_mid = dx;
        layer_norm_backward(d_normed2, c.ln2, L.ln2_gain, G.ln2_gain, G.ln2_bias, d_mid);

        // Attention block: mid = input + Wo attn(ln1(input)).
        Activations d_context(T, d);
        linear_backward(c.context, L.wo, d_mid, G.wo, G.bo, d_context);
        Activations dq(T, d), dk(T, d), dv(T, d);
        std::vector<double> da(T);
        for (std::size_t h = 0; h < H; ++h) {
            const auto off = h * dh;
            for (std::size_t i = 0; i < T; ++i) {
                const double* a = c.attn.data() + (h * T + i) * T;
                const double* dctx = d_context.row(i) + off;
                double dot = 0.0;
                for (std::size_t j = 0; j < T; ++j) {
                    const double* vr = c.v.row(j) + off;
                    double s = 0.0;
                    for (std::size_t e = 0; e < dh; ++e) s += dctx[e] * vr[e];
                    da[j] = s;
                    dot += a[j] * s;
                    double* dvr = dv.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) dvr[e] += a[j] * dctx[e];
                }
                for (std::size_t j = 0; j < T; ++j) {
                    const double ds = a[j] * (da[j] - dot) * attn_scale;
                    double* dqr = dq.row(i) + off;
                    double* dkr = dk.row(j) + off;
                    const double* qr = c.q.row(i) + off;
                    const double* kr = c.k.row(j) + off;
                    for (std::size_t e = 0; e < dh; ++e) {
                        dqr[e] += ds * kr[e];
                        dkr[e] += ds * qr[e];
                    }
                }
            }
        }
        Activations d_normed1(T, d);
        linear_backward(c.normed1, L.wq, dq, G.wq, G.bq, d_normed1);
        linear_backward(c.normed1, L.wk, dk, G.wk, G.bk, d_normed1);
        linear_backward(c.normed1, L.wv, dv, G.wv, G.bv, d_normed1);
        dx = d_mid;
        layer_norm_backward(d_normed1, c.ln1, L.ln1_gain, G.ln1_gain, G.ln1_bias, dx);
    }

    for (std::size_t t = 0; t < T; ++t) {
        auto de = g.token_embedding.row(static_cast<std::size_t>(cache.tokens[t]));
        auto dp = g.position_embedding.row(t);
        for (std::size_t j = 0; j < d; ++j) {
            de[j] += dx.row(t)[j];
            dp[j] += dx.row(t)[j];
        }
    }
}

void check_mask(const TokenSeq& input, std::size_t mask_pos) {
    if (mask_pos >= input.size() || input[mask_pos] != kMaskId) {
        throw MaskPositionError("position " + std::to_string(mask_pos) + " does not hold the mask token");
    }
}

void check_target(const ModelConfig& cfg, TokenId target) {
    if (target < 0 || static_cast<std::size_t>(target) >= cfg.vocab_size) {
        throw Error("target id " + std::to_string(target) + " outside the model vocabulary");
    }
}

}  // namespace

std::vector<double> forward_mask_distribution(const ModelParams& params, const TokenSeq& input,
                                              std::size_t mask_pos) {
    check_input(params.config(), input);
    check_mask(input, mask_pos);
    ForwardCache cache;
    run_forward(params, input, cache);
    std::vector<double> probs;
    output_logits(params, cache.output.row(mask_pos), probs);
    softmax_in_place(probs);
    return probs;
}

LossValue mlm_loss(const ModelParams& params, std::span<const MaskedItem> batch) {
    if (batch.empty()) throw EmptyInputError("loss batch is empty");
    LossValue loss;
    std::vector<double> logits;
    for (const auto& item : batch) {
        check_input(params.config(), item.tokens);
        check_mask(item.tokens, item.mask_pos);
        check_target(params.config(), item.target);
        ForwardCache cache;
        run_forward(params, item.tokens, cache);
        output_logits(params, cache.output.row(item.mask_pos), logits);
        const double target_logit = logits[static_cast<std::size_t>(item.target)];
        const double log_z = softmax_in_place(logits);
        loss.sum += log_z - target_logit;
        ++loss.count;
    }
    return loss;
}

LossValue accumulate_gradients(const ModelParams& params, std::span<const MaskedSequence> batch,
                               ModelParams& grads, double scale) {
    if (!params.same_shape(grads)) throw ShapeMismatchError("gradient buffer does not match parameters");
    const auto& cfg = params.config();
    LossValue loss;
    std::vector<double> probs;
    auto& d_wout = grads.output_weights();
    const auto& wout = params.output_weights();
    for (const auto& seq : batch) {
        check_input(cfg, seq.tokens);
        for (const auto& [pos, target] : seq.targets) {
            check_mask(seq.tokens, pos);
            check_target(cfg, target);
        }
        if (seq.targets.empty()) continue;
        ForwardCache cache;
        run_forward(params, seq.tokens, cache);
        Activations d_output(seq.tokens.size(), cfg.d_model);
        for (const auto& [pos, target] : seq.targets) {
            const double* h = cache.output.row(pos);
            output_logits(params, h, probs);
            const double target_logit = probs[static_cast<std::size_t>(target)];
            loss.sum += softmax_in_place(probs) - target_logit;
            ++loss.count;
            probs[static_cast<std::size_t>(target)] -= 1.0;
            double* dh = d_output.row(pos);
            for (std::size_t v = 0; v < wout.rows; ++v) {
                const double dl = scale * probs[v];
                if (dl == 0.0) continue;
                const double* wr = wout.data.data() + v * wout.cols;
                double* dwr = d_wout.data.data() + v * wout.cols;
                for (std::size_t j = 0; j < wout.cols; ++j) {
                    dwr[j] += dl * h[j];
                    dh[j] += dl * wr[j];
                }
            }
        }
        run_backward(params, cache, d_output, grads);
    }
    return loss;
}

ModelParams gradients(const ModelParams& params, std::span<const MaskedItem> batch) {
    if (batch.empty()) throw EmptyInputError("gradient batch is empty");
    std::vector<MaskedSequence> seqs;
    seqs.reserve(batch.size());
    for (const auto& item : batch) seqs.push_back({item.tokens, {{item.mask_pos, item.target}}});
    ModelParams grads = ModelParams::zeros(params.config());
    accumulate_gradients(params, seqs, grads, 1.0);
    return grads;
}

OptimizerState OptimizerState::for_params(const ModelParams& params, const AdamConfig& hyper) {
    OptimizerState s;
    s.hyper = hyper;
    s.first_moment = ModelParams::zeros(params.config());
    s.second_moment = ModelParams::zeros(params.config());
    return s;
}

void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment)) {
        throw ShapeMismatchError("optimizer step with mismatched parameter shapes");
    }
    ++state.step;
    const auto& h = state.hyper;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, t);
    const double correction2 = 1.0 - std::pow(h.beta2, t);
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = state.first_moment.tensors();
    auto v = state.second_moment.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto& pd = p[i].tensor->data;
        const auto& gd = g[i].tensor->data;
        auto& md = m[i].tensor->data;
        auto& vd = v[i].tensor->data;
        for (std::size_t j = 0; j < pd.size(); ++j) {
            md[j] = h.beta1 * md[j] + (1.0 - h.beta1) * gd[j];
            vd[j] = h.beta2 * vd[j] + (1.0 - h.beta2) * gd[j] * gd[j];
            const double update = (md[j] / correction1) / (std::sqrt(vd[j] / correction2) + h.epsilon);
            const double delta = h.learning_rate * update;
            if (delta != 0.0) pd[j] -= delta;
        }
    }
}

PretrainResult pretrain(ModelParams params, const std::vector<TokenSeq>& corpus, const PretrainConfig& config,
                        const std::function<void(std::size_t, double)>& on_epoch) {
    if (corpus.empty()) throw EmptyCorpusError("pretraining corpus is empty");
    if (config.batch_size == 0) throw ConfigError("pretraining batch_size must be at least 1");
    if (!(config.mask_fraction >= 0.0 && config.mask_fraction <= 1.0)) {
        throw ConfigError("mask_fraction must lie in [0,1]");
    }
    const auto max_len = params.config().max_len;
    Rng rng(config.seed);
    OptimizerState opt = OptimizerState::for_params(params, config.adam);
    ModelParams grads = ModelParams::zeros(params.config());
    PretrainResult result;

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        LossValue epoch_loss;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const auto stop = std::min(order.size(), start + config.batch_size);
            std::vector<MaskedSequence> batch;
            std::size_t masked = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const auto& line = corpus[order[b]];
                if (line.empty()) continue;
                MaskedSequence seq;
                seq.tokens.assign(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(std::min(line.size(), max_len)));
                if (config.mask_fraction <= 0.0) continue;
                const auto n = seq.tokens.size();
                auto count = static_cast<std::size_t>(std::llround(config.mask_fraction * static_cast<double>(n)));
                count = std::clamp<std::size_t>(count, 1, n);
                std::vector<std::size_t> positions(n);
                for (std::size_t i = 0; i < n; ++i) positions[i] = i;
                // Partial Fisher-Yates: the first `count` slots form the masked set.
                for (std::size_t i = 0; i < count; ++i) {
                    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
                    std::swap(positions[i], positions[j]);
                }
                std::sort(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(count));
                for (std::size_t i = 0; i < count; ++i) {
                    const auto pos = positions[i];
                    seq.targets.emplace_back(pos, seq.tokens[pos]);
                    seq.tokens[pos] = kMaskId;
                }
                masked += count;
                batch.push_back(std::move(seq));
            }
            if (masked == 0) continue;
            grads.set_zero();
            const auto loss = accumulate_gradients(params, batch, grads, 1.0 / static_cast<double>(masked));
            optimizer_step(params, grads, opt);
            epoch_loss.sum += loss.sum;
            epoch_loss.count += loss.count;
        }
        result.epoch_loss.push_back(epoch_loss.mean());
        if (on_epoch) on_epoch(epoch, epoch_loss.mean());
    }
    result.params = std::move(params);
    return result;
}

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'G', 'D', 'A', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CorruptCheckpointError("checkpoint truncated: " + path_);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    const auto& c = params.config();
    std::string out(kMagic.begin(), kMagic.end());
    put_u32(out, kCheckpointVersion);
    put_u32(out, 0);
    for (auto v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_len}) put_u64(out, v);
    put_u64(out, c.tie_output_to_embeddings ? 1 : 0);
    put_u64(out, params.parameter_count());
    for (const auto& [name, t] : params.tensors()) {
        for (double v : t->data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write checkpoint: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed writing checkpoint: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(bytes, path.string());
    if (r.raw(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) {
        throw CorruptCheckpointError("not a checkpoint (bad magic): " + path.string());
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                     " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    r.u32();
    ModelConfig c;
    c.vocab_size = r.u64();
    c.d_model = r.u64();
    c.n_layers = r.u64();
    c.n_heads = r.u64();
    c.d_ff = r.u64();
    c.max_len = r.u64();
    const auto tied = r.u64();
    if (tied > 1) throw CorruptCheckpointError("invalid tie flag in checkpoint");
    c.tie_output_to_embeddings = tied == 1;
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CorruptCheckpointError(std::string("invalid config block: ") + e.what());
    }
    // Guard against absurd sizes before allocating.
    if (c.vocab_size > (1u << 24) || c.d_model > 4096 || c.n_layers > 64 || c.d_ff > 65536 || c.max_len > 65536) {
        throw CorruptCheckpointError("implausible config block in checkpoint");
    }
    ModelParams params = ModelParams::zeros(c);
    const auto count = r.u64();
    if (count != params.parameter_count()) throw CorruptCheckpointError("parameter count does not match config");
    r.need(count * 8);
    for (auto& [name, t] : params.tensors()) {
        for (double& v : t->data) v = r.f64();
    }
    if (!r.at_end()) throw CorruptCheckpointError("trailing bytes after checkpoint payload");
    return params;
}

}  // namespace lgda
