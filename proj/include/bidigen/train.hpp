// Minibatch construction, the training loss over output positions, Adam
// with linear warmup and decoupled weight decay, the training loop, and
// per-epoch checkpointing with best-by-dev-BLEU-4 selection.

#pragma once

#include "bidigen/checkpoint.hpp"
#include "bidigen/data.hpp"
#include "bidigen/encoder.hpp"
#include "bidigen/eval.hpp"
#include "bidigen/placeholder.hpp"
#include "bidigen/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidigen {

enum class LossScope { AllOutput, PlaceholderOnly };

inline const char* to_string(LossScope s) {
    return s == LossScope::AllOutput ? "all_output" : "placeholder_only";
}

inline LossScope parse_loss_scope(const std::string& s) {
    if (s == "all_output") return LossScope::AllOutput;
    if (s == "placeholder_only") return LossScope::PlaceholderOnly;
    throw std::invalid_argument("unknown loss scope '" + s + "'");
}

struct TrainConfig {
    std::size_t batch_size = 15;
    std::size_t epochs = 20;
    double peak_lr = 1e-3;
    double warmup_fraction = 0.1;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    LossScope loss_scope = LossScope::AllOutput;
    std::size_t max_gen_len = 50;
    std::uint64_t seed = 1;

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0)
            throw std::invalid_argument("train config: warmup_fraction must be in (0, 1)");
        if (max_gen_len < 1) throw std::invalid_argument("train config: max_gen_len must be >= 1");
    }
};

struct BatchRow {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> key_mask;
    std::size_t input_len = 0;
    std::size_t output_len = 0;
    std::vector<TokenId> gold;  // target tokens followed by SEP
    ReplacementMask replaced;
};

struct Batch {
    std::vector<BatchRow> rows;
};

// builds one training row: gold output is the tokenized target plus a
// closing SEP, with a freshly sampled replacement mask applied
inline BatchRow make_train_row(const Vocabulary& vocab, const Example& example,
                               PlaceholderSampler& sampler, std::size_t max_seq_len,
                               std::size_t max_gen_len) {
    std::vector<TokenId> target = vocab.encode(example.target);
    if (target.size() + 1 > max_gen_len) target.resize(max_gen_len - 1);
    std::vector<TokenId> gold = target;
    gold.push_back(Vocabulary::kSep);

    BatchRow row;
    row.replaced = sampler.sample_mask(gold.size());
    ModelInput mi = encode_pair(vocab, example.source, gold.size(), max_seq_len);
    row.ids = mi.ids;
    row.key_mask = mi.key_mask;
    row.input_len = mi.input_len;
    row.output_len = mi.output_len;
    row.gold = gold;
    std::vector<TokenId> masked = apply_mask(gold, row.replaced);
    std::copy(masked.begin(), masked.end(), row.ids.begin() + static_cast<std::ptrdiff_t>(mi.input_len));
    return row;
}

// PAD-align rows to the widest example; key_mask is false exactly on PAD
inline Batch pad_batch(std::vector<BatchRow> rows) {
    if (rows.empty()) throw std::invalid_argument("pad_batch: empty batch");
    std::size_t width = 0;
    for (const auto& r : rows) width = std::max(width, r.ids.size());
    for (auto& r : rows) {
        r.ids.resize(width, Vocabulary::kPad);
        r.key_mask.resize(width, 0);
    }
    return Batch{std::move(rows)};
}

// mean over examples of the summed per-position cross entropy; PAD never
// contributes, and PlaceholderOnly restricts to replaced positions
inline Tensor batch_loss(const EncoderModel& model, const Batch& batch, LossScope scope,
                         std::mt19937_64* dropout_rng = nullptr) {
    if (batch.rows.empty()) throw std::invalid_argument("batch_loss: empty batch");
    Tensor total;
    for (const BatchRow& row : batch.rows) {
        ForwardOptions opts;
        opts.dropout_rng = dropout_rng;
        ForwardResult fr = forward(model, row.ids, row.key_mask, opts);
        const std::size_t seq = row.ids.size();
        std::vector<TokenId> targets(seq, 0);
        std::vector<double> weights(seq, 0.0);
        for (std::size_t j = 0; j < row.output_len; ++j) {
            targets[row.input_len + j] = row.gold[j];
            const bool counted = scope == LossScope::AllOutput || row.replaced[j];
            weights[row.input_len + j] = counted ? 1.0 : 0.0;
        }
        Tensor loss = cross_entropy_rows(fr.logits, targets, weights);
        total = total.defined() ? add(total, loss) : loss;
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch.rows.size()));
}

// Adam with bias correction, a linear warmup to peak_lr followed by a
// constant rate, and decoupled weight decay that skips biases and layer
// norm parameters
class AdamOptimizer {
public:
    explicit AdamOptimizer(const TrainConfig& cfg) : cfg_(cfg) { cfg.validate(); }

    std::size_t warmup_steps(std::size_t total_steps) const {
        const auto w = static_cast<std::size_t>(std::llround(cfg_.warmup_fraction * static_cast<double>(total_steps)));
        return std::max<std::size_t>(1, w);
    }

    double learning_rate(std::size_t step_index, std::size_t total_steps) const {
        const std::size_t warmup = warmup_steps(total_steps);
        if (step_index <= warmup)
            return cfg_.peak_lr * static_cast<double>(step_index) / static_cast<double>(warmup);
        return cfg_.peak_lr;
    }

    void step(std::vector<ParamRef>& params, std::size_t step_index, std::size_t total_steps) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i].tensor.size(), 0.0);
                v_[i].assign(params[i].tensor.size(), 0.0);
            }
        }
        const double lr = learning_rate(step_index, total_steps);
        if (step_index > 0 && lr > 0.0) {
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_index));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_index));
            for (std::size_t i = 0; i < params.size(); ++i) {
                ParamRef& p = params[i];
                if (p.tensor.grad().empty()) continue;
                auto& data = p.tensor.data();
                const auto& grad = p.tensor.grad();
                for (std::size_t k = 0; k < data.size(); ++k) {
                    m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * grad[k];
                    v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
                    const double mhat = m_[i][k] / bc1;
                    const double vhat = v_[i][k] / bc2;
                    double delta = mhat / (std::sqrt(vhat) + cfg_.eps_adam);
                    if (p.decay) delta += cfg_.weight_decay * data[k];
                    data[k] -= lr * delta;
                }
            }
        }
        for (auto& p : params) p.tensor.zero_grad();
    }

private:
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double train_loss = 0.0;
    std::optional<double> dev_bleu4;
    std::optional<double> dev_micro_acc;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    std::filesystem::path best_checkpoint;
    std::size_t best_epoch = 0;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string epoch_file_name(std::size_t epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04zu.ckpt", epoch);
    return buf;
}

}  // namespace detail

// full training loop; per-epoch metrics rows go to <out_dir>/metrics.csv and
// a checkpoint is written per epoch, with the best (by dev BLEU-4) copied to
// <out_dir>/best.ckpt
inline TrainResult train(EncoderModel& model, const std::vector<Example>& train_set,
                         const std::vector<Example>& dev_set, const Vocabulary& vocab,
                         const PlaceholderPolicy& policy, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics_out(out_dir / "metrics.csv");
    if (!metrics_out) throw std::runtime_error("cannot write metrics under " + out_dir.string());
    metrics_out << "epoch,step,train_loss,dev_bleu4,dev_micro_acc\n";

    PlaceholderSampler sampler(policy);
    AdamOptimizer optimizer(cfg);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    const std::size_t steps_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    TrainResult result;
    double best_metric = -1.0;
    std::size_t global_step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            std::vector<BatchRow> rows;
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, train_set.size());
            for (std::size_t i = lo; i < hi; ++i)
                rows.push_back(make_train_row(vocab, train_set[order[i]], sampler,
                                              model.config().max_seq_len, cfg.max_gen_len));
            Batch batch = pad_batch(std::move(rows));
            Tensor loss = batch_loss(model, batch, cfg.loss_scope, &dropout_rng);
            loss_sum += loss.value();
            ++loss_count;
            model.zero_grad();
            backward(loss);
            optimizer.step(model.params(), ++global_step, total_steps);
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.step = global_step;
        em.train_loss = loss_sum / static_cast<double>(loss_count);
        if (!dev_set.empty()) {
            EvalReport rep = evaluate(model, vocab, dev_set, Strategy::LeftToRight, cfg.max_gen_len);
            em.dev_bleu4 = rep.bleu_n[3] ? *rep.bleu_n[3] : 0.0;
            em.dev_micro_acc = rep.micro_acc;
        }
        metrics_out << em.epoch << ',' << em.step << ',' << detail::format_double(em.train_loss) << ',';
        if (em.dev_bleu4) metrics_out << detail::format_double(*em.dev_bleu4);
        metrics_out << ',';
        if (em.dev_micro_acc) metrics_out << detail::format_double(*em.dev_micro_acc);
        metrics_out << '\n';
        metrics_out.flush();
        result.metrics.push_back(em);

        const std::filesystem::path ckpt = out_dir / detail::epoch_file_name(epoch);
        save_checkpoint(ckpt, model);
        const double metric = em.dev_bleu4 ? *em.dev_bleu4 : static_cast<double>(epoch);
        if (metric > best_metric) {
            best_metric = metric;
            result.best_epoch = epoch;
        }
    }

    if (result.best_epoch > 0) {
        const std::filesystem::path best = out_dir / "best.ckpt";
        std::filesystem::copy_file(out_dir / detail::epoch_file_name(result.best_epoch), best,
                                   std::filesystem::copy_options::overwrite_existing);
        result.best_checkpoint = best;
    }
    return result;
}

// leave-one-out token accuracy: every other output position holds its gold
// token while the probed position holds a placeholder
inline double teacher_forced_accuracy(const EncoderModel& model, const Vocabulary& vocab,
                                      const std::vector<Example>& examples, std::size_t max_gen_len) {
    if (examples.empty()) throw std::invalid_argument("teacher_forced_accuracy: empty dataset");
    std::size_t hits = 0, total = 0;
    for (const Example& ex : examples) {
        std::vector<TokenId> target = vocab.encode(ex.target);
        if (target.size() + 1 > max_gen_len) target.resize(max_gen_len - 1);
        std::vector<TokenId> gold = target;
        gold.push_back(Vocabulary::kSep);
        ModelInput mi = encode_pair(vocab, ex.source, gold.size(), model.config().max_seq_len);
        std::vector<TokenId> ids = mi.ids;
        std::copy(gold.begin(), gold.end(), ids.begin() + static_cast<std::ptrdiff_t>(mi.input_len));
        for (std::size_t j = 0; j < gold.size(); ++j) {
            const std::size_t pos = mi.input_len + j;
            const TokenId keep = ids[pos];
            ids[pos] = Vocabulary::kPlaceholder;
            ForwardResult fr = forward(model, ids, mi.key_mask);
            const std::size_t vsz = model.config().vocab_size;
            std::span<const double> row(fr.logits.data().data() + pos * vsz, vsz);
            TokenId pred = 0;
            for (std::size_t c = 1; c < vsz; ++c)
                if (row[c] > row[pred]) pred = static_cast<TokenId>(c);
            if (pred == gold[j]) ++hits;
            ++total;
            ids[pos] = keep;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace bidigen
