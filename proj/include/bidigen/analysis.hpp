// Attention-flow decomposition over (input, produced prefix, remaining
// placeholders) for left-to-right generation traces, aggregation across
// heads and datapoints, and heatmap export.

#pragma once

#include "bidigen/decode.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidigen {

struct AttentionSplitRow {
    std::size_t step = 0;
    std::size_t head = 0;
    double a1 = 0.0;  // mass on the conditioning input (CLS through first SEP)
    double a2 = 0.0;  // mass on the produced prefix including the current position
    double a3 = 0.0;  // mass on the remaining placeholder positions
};

// splits each uncovering step's attention row at the part boundaries; only
// traces with left-to-right uncovering order decompose meaningfully
inline std::vector<AttentionSplitRow> decompose(const GenerationTrace& trace, std::size_t input_len,
                                                std::optional<std::size_t> layer = std::nullopt) {
    if (trace.strategy != Strategy::LeftToRight && trace.strategy != Strategy::NoLookAhead)
        throw std::invalid_argument("decompose: trace must come from a left-to-right order strategy");
    const std::size_t li = layer.value_or(trace.num_layers - 1);
    if (li >= trace.num_layers) throw std::out_of_range("decompose: layer index out of range");
    std::vector<AttentionSplitRow> rows;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const GenerationStep& step = trace.steps[t];
        const AttentionRecord& att = *step.attention;
        for (std::size_t h = 0; h < trace.num_heads; ++h) {
            AttentionSplitRow row;
            row.step = t;
            row.head = h;
            const std::vector<double>& m = att.map(li, h);
            const double* arow = m.data() + step.position * att.seq_len;
            for (std::size_t k = 0; k < att.seq_len; ++k) {
                if (k < input_len)
                    row.a1 += arow[k];
                else if (k <= step.position)
                    row.a2 += arow[k];
                else
                    row.a3 += arow[k];
            }
            rows.push_back(row);
        }
    }
    return rows;
}

struct AnalysisReport {
    std::size_t num_heads = 0;
    std::size_t num_traces = 0;
    std::size_t total_steps = 0;
    std::vector<std::array<double, 3>> per_head_alpha;                  // alpha_h^k
    std::vector<std::optional<std::array<double, 2>>> per_head_renorm;  // renormalized over parts 2 and 3
    std::array<double, 3> alpha{};                                      // mean across heads
    std::array<double, 3> alpha_std{};                                  // std across heads
    std::optional<std::array<double, 2>> renorm;
    std::optional<std::array<double, 2>> renorm_std;
};

// per-head score: mean over datapoints of the per-trace step average; the
// head mean and the renormalization over parts 2 and 3 follow from it
inline AnalysisReport aggregate(const std::vector<std::vector<AttentionSplitRow>>& per_trace_rows) {
    AnalysisReport rep;
    std::size_t num_heads = 0;
    for (const auto& rows : per_trace_rows)
        for (const auto& r : rows) num_heads = std::max(num_heads, r.head + 1);
    if (num_heads == 0) throw std::invalid_argument("aggregate: no rows");
    rep.num_heads = num_heads;

    std::vector<std::array<double, 3>> sums(num_heads, {0.0, 0.0, 0.0});
    std::vector<std::size_t> trace_counts(num_heads, 0);
    for (const auto& rows : per_trace_rows) {
        if (rows.empty()) continue;
        ++rep.num_traces;
        std::vector<std::array<double, 3>> acc(num_heads, {0.0, 0.0, 0.0});
        std::vector<std::size_t> cnt(num_heads, 0);
        for (const auto& r : rows) {
            acc[r.head][0] += r.a1;
            acc[r.head][1] += r.a2;
            acc[r.head][2] += r.a3;
            ++cnt[r.head];
        }
        rep.total_steps += cnt[0];
        for (std::size_t h = 0; h < num_heads; ++h) {
            if (cnt[h] == 0) continue;
            for (int k = 0; k < 3; ++k) sums[h][k] += acc[h][k] / static_cast<double>(cnt[h]);
            ++trace_counts[h];
        }
    }
    if (rep.num_traces == 0) throw std::invalid_argument("aggregate: all traces empty");

    rep.per_head_alpha.resize(num_heads);
    rep.per_head_renorm.resize(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        for (int k = 0; k < 3; ++k)
            rep.per_head_alpha[h][k] = sums[h][k] / static_cast<double>(trace_counts[h]);
        const double tail = rep.per_head_alpha[h][1] + rep.per_head_alpha[h][2];
        if (tail > 0.0)
            rep.per_head_renorm[h] = std::array<double, 2>{rep.per_head_alpha[h][1] / tail,
                                                           rep.per_head_alpha[h][2] / tail};
    }

    for (int k = 0; k < 3; ++k) {
        double mean = 0.0;
        for (std::size_t h = 0; h < num_heads; ++h) mean += rep.per_head_alpha[h][k];
        mean /= static_cast<double>(num_heads);
        double var = 0.0;
        for (std::size_t h = 0; h < num_heads; ++h) {
            const double d = rep.per_head_alpha[h][k] - mean;
            var += d * d;
        }
        rep.alpha[k] = mean;
        rep.alpha_std[k] = std::sqrt(var / static_cast<double>(num_heads));
    }
    const double tail = rep.alpha[1] + rep.alpha[2];
    if (tail > 0.0) rep.renorm = std::array<double, 2>{rep.alpha[1] / tail, rep.alpha[2] / tail};

    bool all_heads_defined = true;
    for (const auto& r : rep.per_head_renorm)
        if (!r) all_heads_defined = false;
    if (all_heads_defined) {
        std::array<double, 2> mean{0.0, 0.0};
        for (const auto& r : rep.per_head_renorm)
            for (int k = 0; k < 2; ++k) mean[k] += (*r)[k];
        for (int k = 0; k < 2; ++k) mean[k] /= static_cast<double>(num_heads);
        std::array<double, 2> var{0.0, 0.0};
        for (const auto& r : rep.per_head_renorm)
            for (int k = 0; k < 2; ++k) {
                const double d = (*r)[k] - mean[k];
                var[k] += d * d;
            }
        rep.renorm_std = std::array<double, 2>{std::sqrt(var[0] / static_cast<double>(num_heads)),
                                               std::sqrt(var[1] / static_cast<double>(num_heads))};
    }
    return rep;
}

inline std::string format_report(const AnalysisReport& r) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof buf, "datapoints: %zu, steps: %zu, heads: %zu\n", r.num_traces,
                  r.total_steps, r.num_heads);
    out += buf;
    out += "average attention mass by part (percent, mean +/- std across heads)\n";
    const char* names[3] = {"input (a1)", "produced prefix (a2)", "remaining placeholders (a3)"};
    for (int k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, "  %-28s %5.1f +/- %.1f\n", names[k], 100.0 * r.alpha[k],
                      100.0 * r.alpha_std[k]);
        out += buf;
    }
    out += "renormalized over the output segment\n";
    const char* rnames[2] = {"produced prefix (a2~)", "remaining placeholders (a3~)"};
    for (int k = 0; k < 2; ++k) {
        if (r.renorm) {
            std::snprintf(buf, sizeof buf, "  %-28s %5.1f", rnames[k], 100.0 * (*r.renorm)[k]);
            out += buf;
            if (r.renorm_std) {
                std::snprintf(buf, sizeof buf, " +/- %.1f", 100.0 * (*r.renorm_std)[k]);
                out += buf;
            }
            out += '\n';
        } else {
            out += std::string("  ") + rnames[k] + " undefined\n";
        }
    }
    return out;
}

// one data row per head: raw part scores and the renormalized pair
inline void write_per_head_csv(const AnalysisReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write per-head report " + path.string());
    out << "head,alpha1,alpha2,alpha3,renorm2,renorm3\n";
    char buf[48];
    for (std::size_t h = 0; h < r.num_heads; ++h) {
        out << h;
        for (int k = 0; k < 3; ++k) {
            std::snprintf(buf, sizeof buf, ",%.9g", r.per_head_alpha[h][k]);
            out << buf;
        }
        if (r.per_head_renorm[h]) {
            for (int k = 0; k < 2; ++k) {
                std::snprintf(buf, sizeof buf, ",%.9g", (*r.per_head_renorm[h])[k]);
                out << buf;
            }
        } else {
            out << ",,";
        }
        out << '\n';
    }
}

// M[t][j]: attention of the step-t uncovering position onto output position
// j (raw row slice, no renormalization); written as <base>.csv and <base>.svg
inline void export_heatmap(const GenerationTrace& trace, const Vocabulary& vocab,
                           std::size_t head_index, const std::filesystem::path& base_path,
                           std::optional<std::size_t> layer = std::nullopt) {
    if (head_index >= trace.num_heads) throw std::out_of_range("export_heatmap: head index out of range");
    const std::size_t li = layer.value_or(trace.num_layers - 1);
    if (li >= trace.num_layers) throw std::out_of_range("export_heatmap: layer index out of range");

    const std::size_t cols = trace.output_len;
    std::vector<std::vector<double>> m;
    for (const GenerationStep& step : trace.steps) {
        const AttentionRecord& att = *step.attention;
        const double* arow = att.map(li, head_index).data() + step.position * att.seq_len;
        m.emplace_back(arow + trace.input_len, arow + trace.input_len + cols);
    }

    std::vector<std::string> col_labels;
    for (TokenId id : trace.final_output_ids) col_labels.push_back(vocab.token_of(id));
    std::vector<std::string> row_labels;
    for (const GenerationStep& step : trace.steps) row_labels.push_back(vocab.token_of(step.token));

    {
        std::filesystem::path csv = base_path;
        csv += ".csv";
        std::ofstream out(csv);
        if (!out) throw std::runtime_error("cannot write heatmap " + csv.string());
        out << "token";
        for (std::size_t j = 0; j < cols; ++j) out << ",y" << j;
        out << '\n';
        char buf[48];
        for (std::size_t t = 0; t < m.size(); ++t) {
            out << row_labels[t];
            for (std::size_t j = 0; j < cols; ++j) {
                std::snprintf(buf, sizeof buf, ",%.9g", m[t][j]);
                out << buf;
            }
            out << '\n';
        }
    }

    {
        double vmax = 0.0;
        for (const auto& row : m)
            for (double v : row) vmax = std::max(vmax, v);
        if (vmax <= 0.0) vmax = 1.0;
        const int cell = 28, margin = 70;
        const int width = margin + cell * static_cast<int>(cols) + 10;
        const int height = margin + cell * static_cast<int>(m.size()) + 10;
        std::filesystem::path svg = base_path;
        svg += ".svg";
        std::ofstream out(svg);
        if (!out) throw std::runtime_error("cannot write heatmap " + svg.string());
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
            << "\" font-family=\"monospace\" font-size=\"10\">\n";
        for (std::size_t j = 0; j < cols; ++j)
            out << "  <text x=\"" << margin + static_cast<int>(j) * cell + cell / 2 << "\" y=\""
                << margin - 8 << "\" text-anchor=\"middle\">" << col_labels[j] << "</text>\n";
        char buf[256];
        for (std::size_t t = 0; t < m.size(); ++t) {
            out << "  <text x=\"" << margin - 6 << "\" y=\"" << margin + static_cast<int>(t) * cell + cell / 2 + 4
                << "\" text-anchor=\"end\">" << row_labels[t] << "</text>\n";
            for (std::size_t j = 0; j < cols; ++j) {
                const int shade = static_cast<int>(std::lround(255.0 * (1.0 - m[t][j] / vmax)));
                std::snprintf(buf, sizeof buf,
                              "  <rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\" "
                              "stroke=\"#999\"/>\n",
                              margin + static_cast<int>(j) * cell, margin + static_cast<int>(t) * cell, cell,
                              cell, shade, shade, shade);
                out << buf;
            }
        }
        out << "</svg>\n";
    }
}

}  // namespace bidigen
