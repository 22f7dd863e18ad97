// Corpus-level BLEU, the four-way response classification, and end-to-end
// evaluation of a model over a dataset.

#pragma once

#include "bidigen/data.hpp"
#include "bidigen/decode.hpp"
#include "bidigen/vocab.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bidigen {

using TokenSeq = std::vector<std::string>;

// corpus-level BLEU-n as a percentage: geometric mean of the modified k-gram
// precisions for k = 1..n, times the brevity penalty; no smoothing, so a
// zero precision at any order gives a zero score
inline double bleu(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references, int n) {
    if (candidates.empty() || candidates.size() != references.size())
        throw std::invalid_argument("bleu: need equal-length, nonempty candidate/reference lists");
    if (n < 1 || n > 4) throw std::invalid_argument("bleu: order must be in 1..4");

    double log_prec_sum = 0.0;
    for (int k = 1; k <= n; ++k) {
        std::size_t matched = 0, total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const TokenSeq& c = candidates[i];
            const TokenSeq& r = references[i];
            if (c.size() < static_cast<std::size_t>(k)) continue;
            std::map<std::vector<std::string>, std::size_t> cand_counts, ref_counts;
            for (std::size_t p = 0; p + k <= c.size(); ++p)
                ++cand_counts[std::vector<std::string>(c.begin() + p, c.begin() + p + k)];
            for (std::size_t p = 0; p + k <= r.size(); ++p)
                ++ref_counts[std::vector<std::string>(r.begin() + p, r.begin() + p + k)];
            for (const auto& [gram, cnt] : cand_counts) {
                auto it = ref_counts.find(gram);
                matched += std::min(cnt, it == ref_counts.end() ? std::size_t{0} : it->second);
                total += cnt;
            }
        }
        if (matched == 0 || total == 0) return 0.0;
        log_prec_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
    }

    std::size_t cand_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += candidates[i].size();
        ref_len += references[i].size();
    }
    if (cand_len == 0) return 0.0;
    const double bp = cand_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return 100.0 * bp * std::exp(log_prec_sum / n);
}

// lowercase and strip punctuation, then match against the closed answers;
// everything else is a clarification question ("more")
inline ResponseClass classify_response(const std::string& text) {
    std::string norm;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::ispunct(u)) continue;
        if (std::isspace(u)) {
            if (!norm.empty() && norm.back() != ' ') norm.push_back(' ');
        } else {
            norm.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    while (!norm.empty() && norm.back() == ' ') norm.pop_back();
    if (norm == "yes") return ResponseClass::Yes;
    if (norm == "no") return ResponseClass::No;
    if (norm == "irrelevant") return ResponseClass::Irrelevant;
    return ResponseClass::More;
}

// micro: overall fraction correct; macro: unweighted mean of per-class
// recall over the classes present in gold; both as percentages
inline std::pair<double, double> accuracies(const std::vector<ResponseClass>& pred,
                                            const std::vector<ResponseClass>& gold) {
    if (pred.size() != gold.size() || gold.empty())
        throw std::invalid_argument("accuracies: need equal-length, nonempty class lists");
    std::size_t correct = 0;
    std::array<std::size_t, 4> gold_count{}, hit_count{};
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto g = static_cast<std::size_t>(gold[i]);
        ++gold_count[g];
        if (pred[i] == gold[i]) {
            ++correct;
            ++hit_count[g];
        }
    }
    const double micro = 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < 4; ++c) {
        if (gold_count[c] == 0) continue;
        ++present;
        recall_sum += static_cast<double>(hit_count[c]) / static_cast<double>(gold_count[c]);
    }
    const double macro = 100.0 * recall_sum / static_cast<double>(present);
    return {micro, macro};
}

struct EvalReport {
    std::array<std::optional<double>, 4> bleu_n;  // BLEU-1..4, absent when no pair qualified
    double micro_acc = 0.0;
    double macro_acc = 0.0;
    std::array<std::size_t, 4> pred_class_counts{};  // yes / no / irrelevant / more
    std::size_t num_examples = 0;
    std::size_t bleu_pairs = 0;
};

// generates a response per example; classification over all examples, BLEU
// over the pairs where both gold and prediction are clarification questions
inline EvalReport evaluate(const EncoderModel& model, const Vocabulary& vocab,
                           const std::vector<Example>& dev_set, Strategy strategy,
                           std::size_t max_gen_len) {
    if (dev_set.empty()) throw std::invalid_argument("evaluate: empty dataset");
    EvalReport rep;
    rep.num_examples = dev_set.size();
    std::vector<ResponseClass> pred_classes, gold_classes;
    std::vector<TokenSeq> bleu_cand, bleu_ref;
    for (const Example& ex : dev_set) {
        GenerationResult gen = generate(model, vocab, ex.source, strategy, max_gen_len);
        const ResponseClass pred = classify_response(gen.text);
        const ResponseClass gold = ex.gold_class ? *ex.gold_class : classify_response(ex.target);
        pred_classes.push_back(pred);
        gold_classes.push_back(gold);
        ++rep.pred_class_counts[static_cast<std::size_t>(pred)];
        if (gold == ResponseClass::More && pred == ResponseClass::More) {
            bleu_cand.push_back(Vocabulary::tokenize(gen.text));
            bleu_ref.push_back(Vocabulary::tokenize(ex.target));
        }
    }
    auto [micro, macro] = accuracies(pred_classes, gold_classes);
    rep.micro_acc = micro;
    rep.macro_acc = macro;
    rep.bleu_pairs = bleu_cand.size();
    if (!bleu_cand.empty())
        for (int n = 1; n <= 4; ++n) rep.bleu_n[n - 1] = bleu(bleu_cand, bleu_ref, n);
    return rep;
}

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "absent";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
}

inline std::string format_report(const EvalReport& r) {
    char buf[128];
    std::string out;
    out += "examples: " + std::to_string(r.num_examples) + "\n";
    std::snprintf(buf, sizeof buf, "micro_acc: %.2f\nmacro_acc: %.2f\n", r.micro_acc, r.macro_acc);
    out += buf;
    for (int n = 1; n <= 4; ++n) out += "bleu_" + std::to_string(n) + ": " + format_metric(r.bleu_n[n - 1]) + "\n";
    out += "bleu_pairs: " + std::to_string(r.bleu_pairs) + "\n";
    std::snprintf(buf, sizeof buf, "pred_counts: yes=%zu no=%zu irrelevant=%zu more=%zu\n",
                  r.pred_class_counts[0], r.pred_class_counts[1], r.pred_class_counts[2],
                  r.pred_class_counts[3]);
    out += buf;
    return out;
}

// single CSV row mirroring format_report, for the metrics log
inline void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report " + path.string());
    out << "num_examples,micro_acc,macro_acc,bleu_1,bleu_2,bleu_3,bleu_4,bleu_pairs,"
           "pred_yes,pred_no,pred_irrelevant,pred_more\n";
    char buf[64];
    out << r.num_examples << ',';
    std::snprintf(buf, sizeof buf, "%.6g,%.6g", r.micro_acc, r.macro_acc);
    out << buf;
    for (int n = 0; n < 4; ++n) {
        out << ',';
        if (r.bleu_n[n]) {
            std::snprintf(buf, sizeof buf, "%.6g", *r.bleu_n[n]);
            out << buf;
        }
    }
    out << ',' << r.bleu_pairs << ',' << r.pred_class_counts[0] << ',' << r.pred_class_counts[1]
        << ',' << r.pred_class_counts[2] << ',' << r.pred_class_counts[3] << '\n';
}

// fraction of examples whose generated text equals the gold target exactly
inline double exact_match_rate(const EncoderModel& model, const Vocabulary& vocab,
                               const std::vector<Example>& examples, Strategy strategy,
                               std::size_t max_gen_len) {
    if (examples.empty()) throw std::invalid_argument("exact_match_rate: empty dataset");
    std::size_t hits = 0;
    for (const Example& ex : examples) {
        GenerationResult gen = generate(model, vocab, ex.source, strategy, max_gen_len);
        std::string gold;
        for (const auto& tok : Vocabulary::tokenize(ex.target)) {
            if (!gold.empty()) gold.push_back(' ');
            gold += tok;
        }
        if (gen.text == gold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace bidigen
