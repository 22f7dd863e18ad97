#include "bidigen/data.hpp"

#include "bidigen/vocab.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <vector>

using namespace bidigen;

TEST_CASE("load_jsonl basics") {
    auto dir = testutil::scratch_dir("data");
    SECTION("empty file gives an empty list") {
        std::ofstream(dir / "empty.jsonl");
        REQUIRE(load_jsonl(dir / "empty.jsonl").empty());
    }
    SECTION("one valid line gives one example") {
        std::ofstream(dir / "one.jsonl") << R"({"source":"a b","target":"c","gold_class":"yes"})" << "\n";
        auto ex = load_jsonl(dir / "one.jsonl");
        REQUIRE(ex.size() == 1);
        REQUIRE(ex[0].source == "a b");
        REQUIRE(ex[0].target == "c");
        REQUIRE(ex[0].gold_class == ResponseClass::Yes);
    }
    SECTION("malformed lines are reported with their line number") {
        std::ofstream(dir / "bad.jsonl") << R"({"source":"a","target":"b"})" << "\n"
                                         << "not json\n";
        try {
            load_jsonl(dir / "bad.jsonl");
            FAIL("expected a parse error");
        } catch (const std::runtime_error& e) {
            REQUIRE(std::string(e.what()).find(":2") != std::string::npos);
        }
    }
    SECTION("missing field names the line") {
        std::ofstream(dir / "missing.jsonl") << R"({"source":"a"})" << "\n";
        try {
            load_jsonl(dir / "missing.jsonl");
            FAIL("expected a parse error");
        } catch (const std::runtime_error& e) {
            REQUIRE(std::string(e.what()).find(":1") != std::string::npos);
        }
    }
}

TEST_CASE("jsonl write/read round trip preserves values") {
    auto dir = testutil::scratch_dir("data_rt");
    std::vector<Example> examples;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> word(0, 9), len(1, 12);
    for (int i = 0; i < 100; ++i) {
        Example ex;
        for (int t = 0, n = len(rng); t < n; ++t) {
            if (t) ex.source.push_back(' ');
            ex.source += std::to_string(word(rng));
        }
        ex.target = std::to_string(word(rng));
        if (i % 3 == 0) ex.gold_class = static_cast<ResponseClass>(i % 4);
        examples.push_back(ex);
    }
    write_jsonl(dir / "rt.jsonl", examples);
    auto loaded = load_jsonl(dir / "rt.jsonl");
    REQUIRE(loaded.size() == examples.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded[i].source == examples[i].source);
        REQUIRE(loaded[i].target == examples[i].target);
        REQUIRE(loaded[i].gold_class == examples[i].gold_class);
    }
}

TEST_CASE("gen_copy") {
    REQUIRE(gen_copy(0, 8, 10, 1).empty());
    auto ex = gen_copy(500, 8, 10, 1);
    for (const auto& e : ex) REQUIRE(e.source == e.target);

    // length histogram uniform over [1, max_len] within 3 sigma
    auto big = gen_copy(10000, 8, 10, 2);
    std::vector<std::size_t> hist(9, 0);
    for (const auto& e : big) ++hist[Vocabulary::tokenize(e.source).size()];
    const double p = 1.0 / 8.0;
    const double sd = std::sqrt(p * (1.0 - p) * 10000.0);
    for (std::size_t l = 1; l <= 8; ++l)
        REQUIRE(std::abs(static_cast<double>(hist[l]) - 10000.0 * p) <= 3.0 * sd);
}

TEST_CASE("gen_reverse") {
    auto ex = gen_reverse(300, 8, 10, 3);
    for (const auto& e : ex) {
        auto src = Vocabulary::tokenize(e.source);
        auto tgt = Vocabulary::tokenize(e.target);
        REQUIRE(src.size() == tgt.size());
        for (std::size_t i = 0; i < src.size(); ++i) REQUIRE(tgt[i] == src[src.size() - 1 - i]);
    }
    // a palindromic source maps to itself and a length-1 source is fixed
    for (const auto& e : ex)
        if (Vocabulary::tokenize(e.source).size() == 1) REQUIRE(e.source == e.target);
}

TEST_CASE("gen_xor_template") {
    auto ex = gen_xor_template(4000, 5);
    std::size_t ab = 0;
    for (const auto& e : ex) {
        REQUIRE(e.source == "choose");
        REQUIRE((e.target == "a b" || e.target == "b a"));
        if (e.target == "a b") ++ab;
    }
    const double sd = std::sqrt(0.25 * 4000.0);
    REQUIRE(std::abs(static_cast<double>(ab) - 2000.0) <= 3.0 * sd);
}

TEST_CASE("generators are seed-deterministic and closed over their alphabet") {
    auto a = gen_reverse(50, 8, 4, 9);
    auto b = gen_reverse(50, 8, 4, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].source == b[i].source);
        REQUIRE(a[i].target == b[i].target);
    }
    std::set<std::string> allowed{"0", "1", "2", "3"};
    for (const auto& e : a)
        for (const auto& tok : Vocabulary::tokenize(e.source)) REQUIRE(allowed.count(tok) == 1);
}
