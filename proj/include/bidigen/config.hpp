// Run configuration: a strict JSON schema covering the model shape, the
// training hyperparameters, the placeholder policy, the generation strategy
// and the dataset paths. Unknown keys are rejected so typos fail loudly.

#pragma once

#include "bidigen/checkpoint.hpp"
#include "bidigen/decode.hpp"
#include "bidigen/placeholder.hpp"
#include "bidigen/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace bidigen {

// configuration and usage mistakes; the CLI maps these to exit code 2
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    std::string train_path;
    std::string dev_path;  // optional
    std::size_t min_count = 1;
};

struct RunConfig {
    EncoderConfig model{0, 128, 2, 4, 128, 256, 0.1};  // vocab_size 0 = derive from data
    TrainConfig train;
    PlaceholderPolicy placeholder;
    Strategy strategy = Strategy::LeftToRight;
    DataConfig data;
    std::string output_dir;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw UsageError("config: unknown key '" + where + key + "'");
}

template <typename T>
inline void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const std::exception&) {
        throw UsageError("config: bad value for '" + where + key + "'");
    }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
    detail::reject_unknown_keys(j, {"model", "train", "placeholder", "strategy", "data", "output_dir"}, "");
    RunConfig rc;

    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m, {"vocab_size", "max_seq_len", "num_layers", "num_heads",
                                        "hidden_dim", "ffn_dim", "dropout_rate"}, "model.");
        detail::read_field(m, "vocab_size", rc.model.vocab_size, "model.");
        detail::read_field(m, "max_seq_len", rc.model.max_seq_len, "model.");
        detail::read_field(m, "num_layers", rc.model.num_layers, "model.");
        detail::read_field(m, "num_heads", rc.model.num_heads, "model.");
        detail::read_field(m, "hidden_dim", rc.model.hidden_dim, "model.");
        detail::read_field(m, "ffn_dim", rc.model.ffn_dim, "model.");
        detail::read_field(m, "dropout_rate", rc.model.dropout_rate, "model.");
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t, {"batch_size", "epochs", "peak_lr", "warmup_fraction",
                                        "weight_decay", "beta1", "beta2", "eps_adam", "loss_scope",
                                        "max_gen_len", "seed"}, "train.");
        detail::read_field(t, "batch_size", rc.train.batch_size, "train.");
        detail::read_field(t, "epochs", rc.train.epochs, "train.");
        detail::read_field(t, "peak_lr", rc.train.peak_lr, "train.");
        detail::read_field(t, "warmup_fraction", rc.train.warmup_fraction, "train.");
        detail::read_field(t, "weight_decay", rc.train.weight_decay, "train.");
        detail::read_field(t, "beta1", rc.train.beta1, "train.");
        detail::read_field(t, "beta2", rc.train.beta2, "train.");
        detail::read_field(t, "eps_adam", rc.train.eps_adam, "train.");
        detail::read_field(t, "max_gen_len", rc.train.max_gen_len, "train.");
        detail::read_field(t, "seed", rc.train.seed, "train.");
        if (t.contains("loss_scope")) {
            std::string s;
            detail::read_field(t, "loss_scope", s, "train.");
            try {
                rc.train.loss_scope = parse_loss_scope(s);
            } catch (const std::exception& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
        }
    }

    if (j.contains("placeholder")) {
        const auto& p = j.at("placeholder");
        detail::reject_unknown_keys(p, {"kind", "mu", "sigma", "seed"}, "placeholder.");
        if (p.contains("kind")) {
            std::string k;
            detail::read_field(p, "kind", k, "placeholder.");
            if (k == "bernoulli")
                rc.placeholder.kind = PolicyKind::Bernoulli;
            else if (k == "gaussian")
                rc.placeholder.kind = PolicyKind::Gaussian;
            else if (k == "all")
                rc.placeholder.kind = PolicyKind::All;
            else
                throw UsageError("config: unknown placeholder kind '" + k + "'");
        }
        detail::read_field(p, "mu", rc.placeholder.mu, "placeholder.");
        detail::read_field(p, "sigma", rc.placeholder.sigma, "placeholder.");
        detail::read_field(p, "seed", rc.placeholder.rng_seed, "placeholder.");
    }

    if (j.contains("strategy")) {
        std::string s;
        detail::read_field(j, "strategy", s, "");
        try {
            rc.strategy = parse_strategy(s);
        } catch (const std::exception& e) {
            throw UsageError(std::string("config: ") + e.what());
        }
    }

    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, {"train_path", "dev_path", "min_count"}, "data.");
        detail::read_field(d, "train_path", rc.data.train_path, "data.");
        detail::read_field(d, "dev_path", rc.data.dev_path, "data.");
        detail::read_field(d, "min_count", rc.data.min_count, "data.");
    }

    detail::read_field(j, "output_dir", rc.output_dir, "");

    try {
        rc.train.validate();
        rc.placeholder.validate();
        if (rc.train.max_gen_len + 3 > rc.model.max_seq_len)
            throw std::invalid_argument("train.max_gen_len + 3 must not exceed model.max_seq_len");
    } catch (const std::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UsageError("config file " + path.string() + " is not valid JSON");
    return parse_run_config(j);
}

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
    nlohmann::json j;
    j["model"] = encoder_config_to_json(rc.model);
    j["train"] = {{"batch_size", rc.train.batch_size},
                  {"epochs", rc.train.epochs},
                  {"peak_lr", rc.train.peak_lr},
                  {"warmup_fraction", rc.train.warmup_fraction},
                  {"weight_decay", rc.train.weight_decay},
                  {"beta1", rc.train.beta1},
                  {"beta2", rc.train.beta2},
                  {"eps_adam", rc.train.eps_adam},
                  {"loss_scope", to_string(rc.train.loss_scope)},
                  {"max_gen_len", rc.train.max_gen_len},
                  {"seed", rc.train.seed}};
    const char* kind = rc.placeholder.kind == PolicyKind::Bernoulli  ? "bernoulli"
                       : rc.placeholder.kind == PolicyKind::Gaussian ? "gaussian"
                                                                     : "all";
    j["placeholder"] = {{"kind", kind},
                        {"mu", rc.placeholder.mu},
                        {"sigma", rc.placeholder.sigma},
                        {"seed", rc.placeholder.rng_seed}};
    j["strategy"] = to_string(rc.strategy);
    j["data"] = {{"train_path", rc.data.train_path},
                 {"dev_path", rc.data.dev_path},
                 {"min_count", rc.data.min_count}};
    j["output_dir"] = rc.output_dir;
    return j;
}

// fully-resolved config echo written next to a command's outputs
inline void write_config_echo(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config echo " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace bidigen
