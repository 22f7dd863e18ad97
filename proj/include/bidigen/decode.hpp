// Iterative uncovering of an all-placeholder output segment.
//
// Every iterative strategy re-runs the encoder after each uncovering and
// always commits the argmax token at the selected position. Position ties go
// to the leftmost candidate; argmax ties go to the smallest token id.

#pragma once

#include "bidigen/encoder.hpp"
#include "bidigen/vocab.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidigen {

enum class Strategy { OneStepGreedy, HighestProbability, LowestEntropy, LeftToRight, NoLookAhead };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::OneStepGreedy: return "one_step_greedy";
        case Strategy::HighestProbability: return "highest_probability";
        case Strategy::LowestEntropy: return "lowest_entropy";
        case Strategy::LeftToRight: return "left_to_right";
        case Strategy::NoLookAhead: return "no_look_ahead";
    }
    return "left_to_right";
}

inline Strategy parse_strategy(const std::string& s) {
    if (s == "one_step_greedy") return Strategy::OneStepGreedy;
    if (s == "highest_probability") return Strategy::HighestProbability;
    if (s == "lowest_entropy") return Strategy::LowestEntropy;
    if (s == "left_to_right") return Strategy::LeftToRight;
    if (s == "no_look_ahead") return Strategy::NoLookAhead;
    throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct GenerationStep {
    std::size_t position = 0;  // absolute index into the model input
    TokenId token = 0;
    std::vector<double> dist;  // distribution over the vocabulary at this position
    std::shared_ptr<const AttentionRecord> attention;  // snapshot of the forward pass used
};

struct GenerationTrace {
    Strategy strategy = Strategy::LeftToRight;
    std::size_t input_len = 0;
    std::size_t output_len = 0;
    std::size_t num_layers = 0;
    std::size_t num_heads = 0;
    std::vector<GenerationStep> steps;
    std::vector<TokenId> final_output_ids;  // output segment after generation
};

struct GenerationResult {
    std::string text;
    GenerationTrace trace;
};

inline bool termination(Strategy strategy, const GenerationTrace& trace) {
    if (trace.steps.empty()) return false;
    if (trace.steps.size() >= trace.output_len) return true;
    if (strategy == Strategy::LeftToRight || strategy == Strategy::NoLookAhead)
        return trace.steps.back().token == Vocabulary::kSep;
    return false;
}

namespace detail {

inline TokenId argmax_token(std::span<const double> dist) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.size(); ++i)
        if (dist[i] > dist[best]) best = i;  // strict: ties keep the smallest id
    return static_cast<TokenId>(best);
}

}  // namespace detail

inline GenerationResult generate(const EncoderModel& model, const Vocabulary& vocab,
                                 const std::string& source, Strategy strategy, std::size_t max_gen_len) {
    ModelInput mi = encode_pair(vocab, source, max_gen_len, model.config().max_seq_len);
    std::vector<TokenId> ids = mi.ids;
    const std::size_t out0 = mi.input_len;
    const std::size_t slots = mi.output_len;

    GenerationTrace trace;
    trace.strategy = strategy;
    trace.input_len = out0;
    trace.output_len = slots;
    trace.num_layers = model.config().num_layers;
    trace.num_heads = model.config().num_heads;

    std::vector<std::uint8_t> uncovered(slots, 0);

    if (strategy == Strategy::OneStepGreedy) {
        ForwardResult fr = forward(model, ids, mi.key_mask);
        std::shared_ptr<const AttentionRecord> att = fr.attention;
        const std::size_t vsz = model.config().vocab_size;
        for (std::size_t j = 0; j < slots; ++j) {
            std::span<const double> row(fr.logits.data().data() + (out0 + j) * vsz, vsz);
            GenerationStep step;
            step.position = out0 + j;
            step.dist = softmax_row(row);
            step.token = detail::argmax_token(step.dist);
            step.attention = att;
            ids[step.position] = step.token;
            trace.steps.push_back(std::move(step));
        }
    } else {
        while (!termination(strategy, trace)) {
            std::size_t leftmost = slots;
            for (std::size_t j = 0; j < slots; ++j)
                if (!uncovered[j]) { leftmost = j; break; }

            std::vector<std::uint8_t> key_mask = mi.key_mask;
            if (strategy == Strategy::NoLookAhead)
                for (std::size_t j = leftmost + 1; j < slots; ++j) key_mask[out0 + j] = 0;

            ForwardResult fr = forward(model, ids, key_mask);
            const std::size_t vsz = model.config().vocab_size;

            std::size_t chosen = leftmost;
            if (strategy == Strategy::HighestProbability || strategy == Strategy::LowestEntropy) {
                double best_score = std::numeric_limits<double>::lowest();
                for (std::size_t j = 0; j < slots; ++j) {
                    if (uncovered[j]) continue;
                    std::vector<double> d = softmax_row(
                        std::span<const double>(fr.logits.data().data() + (out0 + j) * vsz, vsz));
                    double score;
                    if (strategy == Strategy::HighestProbability)
                        score = *std::max_element(d.begin(), d.end());
                    else
                        score = -entropy(d);
                    if (score > best_score) {  // strict: ties keep the leftmost position
                        best_score = score;
                        chosen = j;
                    }
                }
            }

            GenerationStep step;
            step.position = out0 + chosen;
            step.dist = softmax_row(std::span<const double>(fr.logits.data().data() + step.position * vsz, vsz));
            step.token = detail::argmax_token(step.dist);
            step.attention = fr.attention;
            ids[step.position] = step.token;
            uncovered[chosen] = 1;
            trace.steps.push_back(std::move(step));
        }
    }

    trace.final_output_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(out0), ids.end());
    GenerationResult res;
    res.text = decode(vocab, trace.final_output_ids);
    res.trace = std::move(trace);
    return res;
}

// one record per step: step index, position, token, entropy, max-prob
inline void export_trace(const GenerationTrace& trace, const Vocabulary& vocab,
                         const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace file " + path.string());
    out << "step\tposition\ttoken\tentropy\tmax_prob\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const GenerationStep& s = trace.steps[i];
        out << i << '\t' << s.position << '\t' << vocab.token_of(s.token) << '\t';
        std::snprintf(buf, sizeof buf, "%.9g", entropy(s.dist));
        out << buf << '\t';
        std::snprintf(buf, sizeof buf, "%.9g", *std::max_element(s.dist.begin(), s.dist.end()));
        out << buf << '\n';
    }
}

}  // namespace bidigen
