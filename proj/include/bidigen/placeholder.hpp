// Stochastic replacement of output tokens with the placeholder token.
//
// Bernoulli draws an independent decision per position with mean mu.
// Gaussian draws a fraction P ~ N(mu, sigma^2); round(len * P), clamped to
// [0, len], placeholders are then placed uniformly without replacement.

#pragma once

#include "bidigen/vocab.hpp"

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace bidigen {

enum class PolicyKind { Bernoulli, Gaussian, All };

struct PlaceholderPolicy {
    PolicyKind kind = PolicyKind::Gaussian;
    double mu = 0.5;
    double sigma = 0.6;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (kind == PolicyKind::Bernoulli && (mu < 0.0 || mu > 1.0))
            throw std::invalid_argument("placeholder policy: Bernoulli mu must be in [0, 1]");
        if (kind == PolicyKind::Gaussian && sigma < 0.0)
            throw std::invalid_argument("placeholder policy: Gaussian sigma must be >= 0");
    }
};

using ReplacementMask = std::vector<std::uint8_t>;

// round half to even, as std::nearbyint does under the default rounding mode
inline std::size_t rounded_count(double x, std::size_t len) {
    const double r = std::nearbyint(x);
    if (r <= 0.0) return 0;
    if (r >= static_cast<double>(len)) return len;
    return static_cast<std::size_t>(r);
}

class PlaceholderSampler {
public:
    explicit PlaceholderSampler(const PlaceholderPolicy& policy)
        : policy_(policy), rng_(policy.rng_seed) {
        policy.validate();
    }

    ReplacementMask sample_mask(std::size_t target_len) {
        if (target_len == 0) throw std::invalid_argument("sample_mask: target length must be >= 1");
        ReplacementMask mask(target_len, 0);
        switch (policy_.kind) {
            case PolicyKind::All:
                mask.assign(target_len, 1);
                break;
            case PolicyKind::Bernoulli: {
                std::bernoulli_distribution coin(policy_.mu);
                for (auto& m : mask) m = coin(rng_) ? 1 : 0;
                break;
            }
            case PolicyKind::Gaussian: {
                double p = policy_.mu;
                if (policy_.sigma > 0.0) {
                    std::normal_distribution<double> dist(policy_.mu, policy_.sigma);
                    p = dist(rng_);
                }
                const std::size_t count = rounded_count(static_cast<double>(target_len) * p, target_len);
                // partial Fisher-Yates over position indices
                std::vector<std::size_t> idx(target_len);
                for (std::size_t i = 0; i < target_len; ++i) idx[i] = i;
                for (std::size_t i = 0; i < count; ++i) {
                    std::uniform_int_distribution<std::size_t> pick(i, target_len - 1);
                    std::swap(idx[i], idx[pick(rng_)]);
                    mask[idx[i]] = 1;
                }
                break;
            }
        }
        return mask;
    }

    const PlaceholderPolicy& policy() const { return policy_; }

private:
    PlaceholderPolicy policy_;
    std::mt19937_64 rng_;
};

inline std::vector<TokenId> apply_mask(std::span<const TokenId> target_ids, const ReplacementMask& mask) {
    if (target_ids.size() != mask.size()) throw std::invalid_argument("apply_mask: length mismatch");
    std::vector<TokenId> out(target_ids.begin(), target_ids.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i]) out[i] = Vocabulary::kPlaceholder;
    return out;
}

}  // namespace bidigen
