#include "bidigen/vocab.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>
#include <vector>

using namespace bidigen;

TEST_CASE("reserved ids are fixed") {
    Vocabulary v;
    REQUIRE(v.size() == 5);
    REQUIRE(v.token_of(Vocabulary::kPad) == "[PAD]");
    REQUIRE(v.token_of(Vocabulary::kCls) == "[CLS]");
    REQUIRE(v.token_of(Vocabulary::kSep) == "[SEP]");
    REQUIRE(v.token_of(Vocabulary::kPlaceholder) == "[P]");
    REQUIRE(v.token_of(Vocabulary::kUnk) == "[UNK]");
}

TEST_CASE("build keeps tokens above min_count") {
    Vocabulary v1 = Vocabulary::build({"a b", "a"}, 1);
    REQUIRE(v1.size() == 7);
    REQUIRE(v1.contains("a"));
    REQUIRE(v1.contains("b"));

    Vocabulary v2 = Vocabulary::build({"a b", "a"}, 2);
    REQUIRE(v2.contains("a"));
    REQUIRE_FALSE(v2.contains("b"));
    REQUIRE(v2.encode("b") == std::vector<TokenId>{Vocabulary::kUnk});
}

TEST_CASE("build rejects an empty corpus") {
    REQUIRE_THROWS_AS(Vocabulary::build({}, 1), std::invalid_argument);
}

TEST_CASE("digit corpus yields ten tokens plus reserved") {
    std::mt19937_64 rng(40);
    std::vector<std::string> corpus;
    std::uniform_int_distribution<int> digit(0, 9);
    for (int i = 0; i < 1000; ++i) {
        std::string line;
        for (int t = 0; t < 6; ++t) {
            if (t) line.push_back(' ');
            line += std::to_string(digit(rng));
        }
        corpus.push_back(line);
    }
    Vocabulary v = Vocabulary::build(corpus, 1);
    REQUIRE(v.size() == 15);
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
    auto toks = Vocabulary::tokenize("  Have\tYou BEEN  ");
    REQUIRE(toks == std::vector<std::string>{"have", "you", "been"});
}

TEST_CASE("encode_pair layout") {
    Vocabulary v = Vocabulary::build({"a b"}, 1);
    SECTION("source plus slots") {
        ModelInput mi = encode_pair(v, "a", 2, 32);
        REQUIRE(mi.ids == std::vector<TokenId>{Vocabulary::kCls, v.id_of("a"), Vocabulary::kSep,
                                               Vocabulary::kPlaceholder, Vocabulary::kPlaceholder});
        REQUIRE(mi.input_len == 3);
        REQUIRE(mi.output_len == 2);
        REQUIRE(mi.key_mask == std::vector<std::uint8_t>(5, 1));
    }
    SECTION("empty context is allowed") {
        ModelInput mi = encode_pair(v, "", 1, 32);
        REQUIRE(mi.ids == std::vector<TokenId>{Vocabulary::kCls, Vocabulary::kSep, Vocabulary::kPlaceholder});
    }
    SECTION("long sources are truncated from the left") {
        std::string source;
        for (int i = 0; i < 600; ++i) source += i % 2 ? " b" : " a";
        ModelInput mi = encode_pair(v, source, 50, 512);
        REQUIRE(mi.input_len == 459 + 2);
        // left truncation keeps the most recent context: the final source
        // token of the original string survives as the last input token
        REQUIRE(mi.ids[mi.input_len - 2] == v.id_of("b"));
    }
    SECTION("too many slots") {
        REQUIRE_THROWS_AS(encode_pair(v, "a", 30, 32), std::length_error);
    }
}

TEST_CASE("decode stops before the first SEP") {
    Vocabulary v = Vocabulary::build({"a b c"}, 1);
    std::vector<TokenId> ids{v.id_of("a"), v.id_of("b"), Vocabulary::kSep, v.id_of("c")};
    REQUIRE(decode(v, ids) == "a b");
    REQUIRE(decode(v, std::vector<TokenId>{Vocabulary::kSep}) == "");
    REQUIRE_THROWS_AS(decode(v, std::vector<TokenId>{99}), std::out_of_range);
}

TEST_CASE("round trip on in-vocabulary text") {
    Vocabulary v = Vocabulary::build({"a b c"}, 1);
    REQUIRE(decode(v, v.encode("a b c")) == "a b c");

    // random 20-token sequences round-trip exactly
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> pick(0, 2);
    const char* alphabet[] = {"a", "b", "c"};
    for (int rep = 0; rep < 20; ++rep) {
        std::string text;
        for (int t = 0; t < 20; ++t) {
            if (t) text.push_back(' ');
            text += alphabet[pick(rng)];
        }
        REQUIRE(decode(v, v.encode(text)) == text);
    }
}

TEST_CASE("vocabulary file round trip") {
    auto dir = testutil::scratch_dir("vocab");
    Vocabulary v = Vocabulary::build({"alpha beta gamma"}, 1);
    v.save(dir / "vocab.txt");
    Vocabulary loaded = Vocabulary::load(dir / "vocab.txt");
    REQUIRE(loaded.size() == v.size());
    for (TokenId id = 0; id < v.size(); ++id) REQUIRE(loaded.token_of(id) == v.token_of(id));
}

TEST_CASE("model input structural invariants hold over random corpora") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> len(0, 40), slots(1, 20), word(0, 9);
    for (int rep = 0; rep < 100; ++rep) {
        std::string source;
        const int n = len(rng);
        for (int t = 0; t < n; ++t) {
            if (t) source.push_back(' ');
            source += std::to_string(word(rng));
        }
        Vocabulary v = Vocabulary::build({source.empty() ? "x" : source}, 1);
        ModelInput mi = encode_pair(v, source, static_cast<std::size_t>(slots(rng)), 64);
        REQUIRE(mi.ids[0] == Vocabulary::kCls);
        REQUIRE(mi.ids[mi.input_len - 1] == Vocabulary::kSep);
        REQUIRE(mi.ids.size() == mi.input_len + mi.output_len);
        for (std::size_t j = mi.input_len; j < mi.ids.size(); ++j)
            REQUIRE(mi.ids[j] == Vocabulary::kPlaceholder);
        for (std::size_t j = 0; j < mi.ids.size(); ++j) REQUIRE(mi.key_mask[j] == 1);
        REQUIRE(mi.ids.size() <= 64);
    }
}
