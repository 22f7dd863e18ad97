#include "bidigen/placeholder.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

using namespace bidigen;

namespace {

std::size_t count_set(const ReplacementMask& m) {
    return std::accumulate(m.begin(), m.end(), std::size_t{0});
}

}  // namespace

TEST_CASE("policy validation") {
    PlaceholderPolicy p;
    p.kind = PolicyKind::Bernoulli;
    p.mu = 1.5;
    REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
    p.mu = 0.5;
    REQUIRE_NOTHROW(p.validate());
    p.kind = PolicyKind::Gaussian;
    p.sigma = -0.1;
    REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("degenerate masks") {
    SECTION("Bernoulli mu=1 replaces everything") {
        PlaceholderSampler s({PolicyKind::Bernoulli, 1.0, 0.0, 1});
        REQUIRE(count_set(s.sample_mask(7)) == 7);
    }
    SECTION("Bernoulli mu=0 replaces nothing") {
        PlaceholderSampler s({PolicyKind::Bernoulli, 0.0, 0.0, 1});
        REQUIRE(count_set(s.sample_mask(7)) == 0);
    }
    SECTION("All replaces everything") {
        PlaceholderSampler s({PolicyKind::All, 0.0, 0.0, 1});
        REQUIRE(count_set(s.sample_mask(5)) == 5);
    }
    SECTION("Gaussian sigma=0 is deterministic in count") {
        PlaceholderSampler s({PolicyKind::Gaussian, 0.5, 0.0, 1});
        for (int rep = 0; rep < 50; ++rep) REQUIRE(count_set(s.sample_mask(12)) == 6);
        // round-half-to-even at odd lengths: 7 * 0.5 = 3.5 -> 4
        for (int rep = 0; rep < 50; ++rep) REQUIRE(count_set(s.sample_mask(7)) == 4);
        // 5 * 0.5 = 2.5 -> 2
        for (int rep = 0; rep < 50; ++rep) REQUIRE(count_set(s.sample_mask(5)) == 2);
    }
    SECTION("zero length is a data error") {
        PlaceholderSampler s({PolicyKind::All, 0.0, 0.0, 1});
        REQUIRE_THROWS_AS(s.sample_mask(0), std::invalid_argument);
    }
}

TEST_CASE("Bernoulli count statistics match the closed-form mean and variance") {
    // E = |y| mu = 7.0, Var = |y| mu (1 - mu) = 2.1 at mu = 0.7, |y| = 10
    PlaceholderSampler s({PolicyKind::Bernoulli, 0.7, 0.0, 20260809});
    const std::size_t draws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double c = static_cast<double>(count_set(s.sample_mask(10)));
        sum += c;
        sum_sq += c * c;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    REQUIRE(std::abs(mean - 7.0) <= 0.05);
    REQUIRE(std::abs(var - 2.1) <= 0.1);
}

TEST_CASE("Gaussian clamped-count histogram matches the analytic distribution") {
    // independent oracle: P(count = k) from the normal CDF with the same
    // rounding and clamping; chi-square goodness of fit at p > 0.01
    const double mu = 0.5, sigma = 0.6;
    const std::size_t len = 20, draws = 100000;
    PlaceholderSampler s({PolicyKind::Gaussian, mu, sigma, 77});
    std::vector<std::size_t> hist(len + 1, 0);
    for (std::size_t i = 0; i < draws; ++i) ++hist[count_set(s.sample_mask(len))];

    std::vector<double> expected(len + 1, 0.0);
    for (std::size_t k = 0; k <= len; ++k) {
        // count k <=> len * P in [k - 1/2, k + 1/2), with clamping folding the
        // tails into k = 0 and k = len
        const double lo = (static_cast<double>(k) - 0.5) / static_cast<double>(len);
        const double hi = (static_cast<double>(k) + 0.5) / static_cast<double>(len);
        double p = testutil::normal_cdf(hi, mu, sigma) - testutil::normal_cdf(lo, mu, sigma);
        if (k == 0) p = testutil::normal_cdf(hi, mu, sigma);
        if (k == len) p = 1.0 - testutil::normal_cdf(lo, mu, sigma);
        expected[k] = p * static_cast<double>(draws);
    }

    // merge sparse bins so every expected count is at least 5
    double stat = 0.0;
    std::size_t bins = 0;
    double pend_obs = 0.0, pend_exp = 0.0;
    for (std::size_t k = 0; k <= len; ++k) {
        pend_obs += static_cast<double>(hist[k]);
        pend_exp += expected[k];
        if (pend_exp >= 5.0) {
            stat += (pend_obs - pend_exp) * (pend_obs - pend_exp) / pend_exp;
            ++bins;
            pend_obs = pend_exp = 0.0;
        }
    }
    if (pend_exp > 0.0) {
        stat += (pend_obs - pend_exp) * (pend_obs - pend_exp) / pend_exp;
        ++bins;
    }
    const double pvalue = testutil::chi_square_pvalue(stat, static_cast<double>(bins - 1));
    INFO("chi-square " << stat << " over " << bins << " bins, p = " << pvalue);
    REQUIRE(pvalue > 0.01);
}

TEST_CASE("Gaussian placements are uniform across positions") {
    const std::size_t len = 10, draws = 100000;
    PlaceholderSampler s({PolicyKind::Gaussian, 0.5, 0.6, 99});
    std::vector<std::size_t> hits(len, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < draws; ++i) {
        ReplacementMask m = s.sample_mask(len);
        for (std::size_t j = 0; j < len; ++j) hits[j] += m[j];
        total += count_set(m);
    }
    // by symmetry each position is replaced with probability E[count] / len
    const double p = static_cast<double>(total) / static_cast<double>(draws * len);
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(draws));
    for (std::size_t j = 0; j < len; ++j) {
        const double freq = static_cast<double>(hits[j]) / static_cast<double>(draws);
        REQUIRE(std::abs(freq - p) <= 3.0 * sd + 1e-9);
    }
}

TEST_CASE("same seed gives an identical mask stream") {
    PlaceholderPolicy policy{PolicyKind::Gaussian, 0.5, 0.6, 1234};
    PlaceholderSampler a(policy), b(policy);
    for (int i = 0; i < 200; ++i) REQUIRE(a.sample_mask(1 + i % 17) == b.sample_mask(1 + i % 17));
}

TEST_CASE("apply_mask substitutes the placeholder id") {
    std::vector<TokenId> ids{5, 6, 7, 8};
    REQUIRE(apply_mask(ids, {0, 0, 0, 0}) == ids);
    REQUIRE(apply_mask(ids, {1, 1, 1, 1}) ==
            std::vector<TokenId>(4, Vocabulary::kPlaceholder));
    REQUIRE(apply_mask(ids, {1, 0, 1, 0}) ==
            std::vector<TokenId>{Vocabulary::kPlaceholder, 6, Vocabulary::kPlaceholder, 8});
    REQUIRE_THROWS_AS(apply_mask(ids, {1, 0}), std::invalid_argument);

    // positionwise select oracle over random masks
    std::mt19937_64 rng(17);
    std::bernoulli_distribution coin(0.4);
    for (int rep = 0; rep < 50; ++rep) {
        ReplacementMask m(ids.size());
        for (auto& b : m) b = coin(rng);
        std::vector<TokenId> got = apply_mask(ids, m);
        for (std::size_t j = 0; j < ids.size(); ++j)
            REQUIRE(got[j] == (m[j] ? Vocabulary::kPlaceholder : ids[j]));
    }
}
