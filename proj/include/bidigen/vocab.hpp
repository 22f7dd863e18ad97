// Whitespace tokenizer and vocabulary with reserved special tokens, plus
// construction of the concatenated model input [CLS] source [SEP] slots.

#pragma once

#include "bidigen/tensor.hpp"

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bidigen {

class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kCls = 1;
    static constexpr TokenId kSep = 2;
    static constexpr TokenId kPlaceholder = 3;
    static constexpr TokenId kUnk = 4;
    static constexpr std::size_t kNumReserved = 5;

    Vocabulary() {
        for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[P]", "[UNK]"}) add_token(t);
    }

    std::size_t size() const { return id_to_token_.size(); }

    // lowercased whitespace split
    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : text) {
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!cur.empty()) { out.push_back(cur); cur.clear(); }
            } else {
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            }
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    }

    // id lookup with UNK fallback for out-of-vocabulary tokens
    TokenId id_of(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

    const std::string& token_of(TokenId id) const {
        if (id >= id_to_token_.size()) throw std::out_of_range("unknown token id " + std::to_string(id));
        return id_to_token_[id];
    }

    std::vector<TokenId> encode(const std::string& text) const {
        std::vector<TokenId> ids;
        for (const auto& tok : tokenize(text)) ids.push_back(id_of(tok));
        return ids;
    }

    // tokens with count >= min_count get ids in order of first appearance
    static Vocabulary build(const std::vector<std::string>& corpus, std::size_t min_count = 1) {
        if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
        std::unordered_map<std::string, std::size_t> counts;
        std::vector<std::string> order;
        for (const auto& line : corpus)
            for (auto& tok : tokenize(line)) {
                auto [it, fresh] = counts.try_emplace(std::move(tok), 0);
                if (fresh) order.push_back(it->first);
                ++it->second;
            }
        Vocabulary v;
        for (const auto& tok : order)
            if (counts[tok] >= min_count) v.add_token(tok);
        return v;
    }

    // plain text, one token per line, line number == id
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
        for (const auto& tok : id_to_token_) out << tok << '\n';
    }

    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
        Vocabulary v;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            if (lineno < kNumReserved) {
                if (line != v.id_to_token_[lineno])
                    throw std::runtime_error("vocabulary file " + path.string() + " line " +
                                             std::to_string(lineno + 1) + ": reserved token mismatch");
            } else {
                v.add_token(line);
            }
            ++lineno;
        }
        if (lineno < kNumReserved)
            throw std::runtime_error("vocabulary file " + path.string() + " is missing reserved tokens");
        return v;
    }

private:
    void add_token(const std::string& tok) {
        if (token_to_id_.count(tok)) return;
        token_to_id_.emplace(tok, static_cast<TokenId>(id_to_token_.size()));
        id_to_token_.push_back(tok);
    }

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

struct ModelInput {
    std::vector<TokenId> ids;
    std::size_t input_len = 0;   // CLS + source + SEP
    std::size_t output_len = 0;  // placeholder slots
    std::vector<std::uint8_t> key_mask;
};

// [CLS] source [SEP] followed by target_slots placeholders; the source is
// truncated from the left so the most recent context is kept
inline ModelInput encode_pair(const Vocabulary& vocab, const std::string& source,
                              std::size_t target_slots, std::size_t max_seq_len) {
    if (target_slots < 1) throw std::invalid_argument("encode_pair: target_slots must be >= 1");
    if (target_slots + 3 > max_seq_len)
        throw std::length_error("encode_pair: target_slots + 3 exceeds max_seq_len");
    std::vector<TokenId> src = vocab.encode(source);
    const std::size_t budget = max_seq_len - target_slots - 3;
    if (src.size() > budget) src.erase(src.begin(), src.end() - static_cast<std::ptrdiff_t>(budget));

    ModelInput mi;
    mi.ids.reserve(src.size() + 2 + target_slots);
    mi.ids.push_back(Vocabulary::kCls);
    mi.ids.insert(mi.ids.end(), src.begin(), src.end());
    mi.ids.push_back(Vocabulary::kSep);
    mi.input_len = mi.ids.size();
    mi.ids.insert(mi.ids.end(), target_slots, Vocabulary::kPlaceholder);
    mi.output_len = target_slots;
    mi.key_mask.assign(mi.ids.size(), 1);
    return mi;
}

// token strings joined by single spaces, stopping before the first SEP
inline std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
    std::string out;
    for (TokenId id : ids) {
        if (id == Vocabulary::kSep) break;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token_of(id);
    }
    return out;
}

}  // namespace bidigen
