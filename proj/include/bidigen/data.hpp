// Dataset ingestion (JSONL source/target pairs) and synthetic task
// generators for desk-scale experiments.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidigen {

enum class ResponseClass { Yes, No, Irrelevant, More };

inline const char* to_string(ResponseClass c) {
    switch (c) {
        case ResponseClass::Yes: return "yes";
        case ResponseClass::No: return "no";
        case ResponseClass::Irrelevant: return "irrelevant";
        case ResponseClass::More: return "more";
    }
    return "more";
}

inline ResponseClass parse_response_class(const std::string& s) {
    if (s == "yes") return ResponseClass::Yes;
    if (s == "no") return ResponseClass::No;
    if (s == "irrelevant") return ResponseClass::Irrelevant;
    if (s == "more") return ResponseClass::More;
    throw std::invalid_argument("unknown response class '" + s + "'");
}

struct Example {
    std::string source;
    std::string target;
    std::optional<ResponseClass> gold_class;
};

inline std::vector<Example> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    std::vector<Example> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw std::runtime_error(where + ": malformed JSON");
        if (!j.is_object() || !j.contains("source") || !j.contains("target"))
            throw std::runtime_error(where + ": record must carry 'source' and 'target'");
        Example ex;
        try {
            ex.source = j.at("source").get<std::string>();
            ex.target = j.at("target").get<std::string>();
            if (j.contains("gold_class")) ex.gold_class = parse_response_class(j.at("gold_class").get<std::string>());
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset " + path.string());
    for (const auto& ex : examples) {
        nlohmann::json j;
        j["source"] = ex.source;
        j["target"] = ex.target;
        if (ex.gold_class) j["gold_class"] = to_string(*ex.gold_class);
        out << j.dump() << '\n';
    }
}

namespace detail {
inline std::string random_digit_string(std::mt19937_64& rng, std::size_t len, std::size_t alphabet) {
    std::uniform_int_distribution<std::size_t> pick(0, alphabet - 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
        if (i) s.push_back(' ');
        s += std::to_string(pick(rng));
    }
    return s;
}
}  // namespace detail

// target == source
inline std::vector<Example> gen_copy(std::size_t n, std::size_t max_len, std::size_t vocab_digits,
                                     std::uint64_t seed) {
    if (max_len < 1 || vocab_digits < 1) throw std::invalid_argument("gen_copy: max_len and vocab_digits must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::string s = detail::random_digit_string(rng, len_dist(rng), vocab_digits);
        out.push_back({s, s, std::nullopt});
    }
    return out;
}

// target == reverse(source)
inline std::vector<Example> gen_reverse(std::size_t n, std::size_t max_len, std::size_t vocab_digits,
                                        std::uint64_t seed) {
    if (max_len < 1 || vocab_digits < 1) throw std::invalid_argument("gen_reverse: max_len and vocab_digits must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len_dist(1, max_len);
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t len = len_dist(rng);
        std::uniform_int_distribution<std::size_t> pick(0, vocab_digits - 1);
        std::vector<std::string> toks;
        for (std::size_t t = 0; t < len; ++t) toks.push_back(std::to_string(pick(rng)));
        std::string src, rev;
        for (std::size_t t = 0; t < len; ++t) {
            if (t) { src.push_back(' '); rev.push_back(' '); }
            src += toks[t];
            rev += toks[len - 1 - t];
        }
        out.push_back({src, rev, std::nullopt});
    }
    return out;
}

// fixed source, target uniformly "a b" or "b a"; positionwise marginals are
// uniform so joint validity requires conditioning on the other position
inline std::vector<Example> gen_xor_template(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"choose", coin(rng) ? "a b" : "b a", std::nullopt});
    return out;
}

}  // namespace bidigen
