// Transformer encoder with a language-model classification head.
//
// Post-norm blocks: x = LN(x + Attn(x)); x = LN(x + FFN(x)), GELU in the
// feed-forward, learned position embeddings, dropout on attention
// probabilities and on the feed-forward output while training.

#pragma once

#include "bidigen/tensor.hpp"
#include "bidigen/vocab.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidigen {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t max_seq_len = 0;
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::size_t hidden_dim = 0;
    std::size_t ffn_dim = 0;
    double dropout_rate = 0.1;

    void validate() const {
        if (vocab_size < 5) throw std::invalid_argument("config: vocab_size must be >= 5");
        if (max_seq_len < 2) throw std::invalid_argument("config: max_seq_len must be >= 2");
        if (num_layers < 1 || num_heads < 1 || hidden_dim < 1 || ffn_dim < 1)
            throw std::invalid_argument("config: layer/head/width counts must be positive");
        if (hidden_dim % num_heads != 0)
            throw std::invalid_argument("config: hidden_dim must be divisible by num_heads");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw std::invalid_argument("config: dropout_rate must be in [0, 1)");
    }

    std::size_t head_dim() const { return hidden_dim / num_heads; }
};

// per-layer, per-head attention probabilities; row q of map(l, h) is the
// distribution of query q over key positions
struct AttentionRecord {
    std::size_t seq_len = 0;
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::vector<std::vector<double>> maps;  // indexed [layer * num_heads + head], each seq_len^2

    const std::vector<double>& map(std::size_t layer, std::size_t head) const {
        return maps.at(layer * num_heads + head);
    }
    double at(std::size_t layer, std::size_t head, std::size_t q, std::size_t k) const {
        return map(layer, head)[q * seq_len + k];
    }
};

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b;
    Tensor w1, b1, w2, b2;
    Tensor ln2_g, ln2_b;
};

struct ParamRef {
    std::string name;
    Tensor tensor;
    bool decay = true;  // decoupled weight decay applies; false for biases and layer norms
};

class EncoderModel {
public:
    EncoderModel() = default;

    EncoderModel(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
        config.validate();
        std::mt19937_64 rng(seed);
        const std::size_t d = config.hidden_dim;
        tok_emb_ = Tensor::randn({config.vocab_size, d}, kInitStd, rng);
        pos_emb_ = Tensor::randn({config.max_seq_len, d}, kInitStd, rng);
        layers_.resize(config.num_layers);
        for (auto& l : layers_) {
            l.wq = Tensor::randn({d, d}, kInitStd, rng);
            l.bq = Tensor::zeros({d}, true);
            l.wk = Tensor::randn({d, d}, kInitStd, rng);
            l.bk = Tensor::zeros({d}, true);
            l.wv = Tensor::randn({d, d}, kInitStd, rng);
            l.bv = Tensor::zeros({d}, true);
            l.wo = Tensor::randn({d, d}, kInitStd, rng);
            l.bo = Tensor::zeros({d}, true);
            l.ln1_g = Tensor::from_data({d}, std::vector<double>(d, 1.0), true);
            l.ln1_b = Tensor::zeros({d}, true);
            l.w1 = Tensor::randn({d, config.ffn_dim}, kInitStd, rng);
            l.b1 = Tensor::zeros({config.ffn_dim}, true);
            l.w2 = Tensor::randn({config.ffn_dim, d}, kInitStd, rng);
            l.b2 = Tensor::zeros({d}, true);
            l.ln2_g = Tensor::from_data({d}, std::vector<double>(d, 1.0), true);
            l.ln2_b = Tensor::zeros({d}, true);
        }
        lm_w_ = Tensor::randn({d, config.vocab_size}, kInitStd, rng);
        lm_b_ = Tensor::zeros({config.vocab_size}, true);
        build_registry();
    }

    EncoderModel(const EncoderModel&) = delete;
    EncoderModel& operator=(const EncoderModel&) = delete;
    EncoderModel(EncoderModel&&) = default;
    EncoderModel& operator=(EncoderModel&&) = default;

    const EncoderConfig& config() const { return config_; }
    const Tensor& token_embeddings() const { return tok_emb_; }
    const Tensor& position_embeddings() const { return pos_emb_; }
    const std::vector<LayerParams>& layers() const { return layers_; }
    const Tensor& lm_head_weight() const { return lm_w_; }
    const Tensor& lm_head_bias() const { return lm_b_; }

    std::vector<ParamRef>& params() { return params_; }
    const std::vector<ParamRef>& params() const { return params_; }

    Tensor param(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.tensor;
        throw std::out_of_range("no parameter named " + name);
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    static constexpr double kInitStd = 0.02;

private:
    void build_registry() {
        params_.clear();
        auto reg = [&](const std::string& name, const Tensor& t, bool decay) {
            params_.push_back({name, t, decay});
        };
        reg("embed.token", tok_emb_, true);
        reg("embed.position", pos_emb_, true);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const std::string p = "layer" + std::to_string(i) + ".";
            auto& l = layers_[i];
            reg(p + "attn.wq", l.wq, true);
            reg(p + "attn.bq", l.bq, false);
            reg(p + "attn.wk", l.wk, true);
            reg(p + "attn.bk", l.bk, false);
            reg(p + "attn.wv", l.wv, true);
            reg(p + "attn.bv", l.bv, false);
            reg(p + "attn.wo", l.wo, true);
            reg(p + "attn.bo", l.bo, false);
            reg(p + "ln1.gamma", l.ln1_g, false);
            reg(p + "ln1.beta", l.ln1_b, false);
            reg(p + "ffn.w1", l.w1, true);
            reg(p + "ffn.b1", l.b1, false);
            reg(p + "ffn.w2", l.w2, true);
            reg(p + "ffn.b2", l.b2, false);
            reg(p + "ln2.gamma", l.ln2_g, false);
            reg(p + "ln2.beta", l.ln2_b, false);
        }
        reg("lm_head.weight", lm_w_, true);
        reg("lm_head.bias", lm_b_, false);
    }

    EncoderConfig config_;
    Tensor tok_emb_, pos_emb_;
    std::vector<LayerParams> layers_;
    Tensor lm_w_, lm_b_;
    std::vector<ParamRef> params_;
};

struct ForwardOptions {
    // when set, dropout is active (training mode); inference passes nullptr
    std::mt19937_64* dropout_rng = nullptr;
};

struct ForwardResult {
    Tensor logits;  // seq_len x vocab_size
    std::shared_ptr<AttentionRecord> attention;
};

inline ForwardResult forward(const EncoderModel& model, std::span<const TokenId> token_ids,
                             const std::vector<std::uint8_t>& key_mask, const ForwardOptions& opts = {}) {
    const EncoderConfig& cfg = model.config();
    const std::size_t seq_len = token_ids.size();
    if (seq_len == 0) throw std::length_error("forward: empty sequence");
    if (seq_len > cfg.max_seq_len) throw std::length_error("forward: sequence exceeds max_seq_len");
    if (key_mask.size() != seq_len) throw std::invalid_argument("forward: key_mask length mismatch");
    for (TokenId id : token_ids)
        if (id >= cfg.vocab_size) throw std::out_of_range("forward: token id out of range");

    auto record = std::make_shared<AttentionRecord>();
    record->seq_len = seq_len;
    record->num_layers = cfg.num_layers;
    record->num_heads = cfg.num_heads;
    record->maps.resize(cfg.num_layers * cfg.num_heads);

    std::vector<TokenId> positions(seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) positions[i] = static_cast<TokenId>(i);

    Tensor x = add(gather_rows(model.token_embeddings(), token_ids),
                   gather_rows(model.position_embeddings(), positions));

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
    for (std::size_t li = 0; li < cfg.num_layers; ++li) {
        const LayerParams& l = model.layers()[li];
        Tensor q = add_bias_rows(matmul(x, l.wq), l.bq);
        Tensor k = add_bias_rows(matmul(x, l.wk), l.bk);
        Tensor v = add_bias_rows(matmul(x, l.wv), l.bv);

        std::vector<Tensor> head_outs;
        head_outs.reserve(cfg.num_heads);
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            const std::size_t c0 = h * cfg.head_dim(), c1 = c0 + cfg.head_dim();
            Tensor qh = slice_cols(q, c0, c1);
            Tensor kh = slice_cols(k, c0, c1);
            Tensor vh = slice_cols(v, c0, c1);
            Tensor scores = mul_scalar(matmul_nt(qh, kh), scale);
            Tensor attn = softmax_rows_masked(scores, key_mask);
            record->maps[li * cfg.num_heads + h] = attn.data();
            if (opts.dropout_rng && cfg.dropout_rate > 0.0)
                attn = dropout(attn, cfg.dropout_rate, *opts.dropout_rng);
            head_outs.push_back(matmul(attn, vh));
        }
        Tensor attn_out = add_bias_rows(matmul(concat_cols(head_outs), l.wo), l.bo);
        x = layer_norm_rows(add(x, attn_out), l.ln1_g, l.ln1_b);

        Tensor ffn = add_bias_rows(matmul(gelu(add_bias_rows(matmul(x, l.w1), l.b1)), l.w2), l.b2);
        if (opts.dropout_rng && cfg.dropout_rate > 0.0) ffn = dropout(ffn, cfg.dropout_rate, *opts.dropout_rng);
        x = layer_norm_rows(add(x, ffn), l.ln2_g, l.ln2_b);
    }

    Tensor logits = add_bias_rows(matmul(x, model.lm_head_weight()), model.lm_head_bias());
    return {logits, std::move(record)};
}

// plain softmax of one logits row into an owned probability vector
inline std::vector<double> softmax_row(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    const double m = *std::max_element(p.begin(), p.end());
    double s = 0.0;
    for (double& x : p) {
        x = std::exp(x - m);
        s += x;
    }
    for (double& x : p) x /= s;
    return p;
}

inline double entropy(std::span<const double> dist) {
    double h = 0.0;
    for (double p : dist)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

}  // namespace bidigen
