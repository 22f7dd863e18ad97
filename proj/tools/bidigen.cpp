// bidigen: train, generate with, evaluate and analyze bidirectional
// placeholder-uncovering sequence models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include "bidigen/analysis.hpp"
#include "bidigen/checkpoint.hpp"
#include "bidigen/config.hpp"
#include "bidigen/data.hpp"
#include "bidigen/decode.hpp"
#include "bidigen/eval.hpp"
#include "bidigen/train.hpp"
#include "bidigen/vocab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bidigen;

namespace {

struct LoadedModel {
    EncoderModel model;
    Vocabulary vocab;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& vocab_path) {
    if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
    if (!fs::exists(vocab_path)) throw UsageError("vocabulary not found: " + vocab_path);
    LoadedModel lm{load_checkpoint(checkpoint), Vocabulary::load(vocab_path)};
    if (lm.vocab.size() != lm.model.config().vocab_size)
        throw UsageError("vocabulary size " + std::to_string(lm.vocab.size()) +
                         " does not match checkpoint vocab_size " +
                         std::to_string(lm.model.config().vocab_size));
    return lm;
}

std::vector<Example> load_dataset(const std::string& path) {
    if (!fs::exists(path)) throw UsageError("dataset not found: " + path);
    return load_jsonl(path);
}

int cmd_train(const std::string& config_path, const std::optional<std::string>& output_dir,
              const std::optional<std::size_t>& epochs, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& train_path, const std::optional<std::string>& dev_path) {
    if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path);
    RunConfig rc = load_run_config(config_path);
    if (output_dir) rc.output_dir = *output_dir;
    if (epochs) rc.train.epochs = *epochs;
    if (seed) rc.train.seed = *seed;
    if (train_path) rc.data.train_path = *train_path;
    if (dev_path) rc.data.dev_path = *dev_path;
    if (rc.output_dir.empty()) throw UsageError("config: output_dir is required for training");
    if (rc.data.train_path.empty()) throw UsageError("config: data.train_path is required for training");

    std::vector<Example> train_set = load_dataset(rc.data.train_path);
    std::vector<Example> dev_set;
    if (!rc.data.dev_path.empty()) dev_set = load_dataset(rc.data.dev_path);

    std::vector<std::string> corpus;
    corpus.reserve(train_set.size() * 2);
    for (const auto& ex : train_set) {
        corpus.push_back(ex.source);
        corpus.push_back(ex.target);
    }
    Vocabulary vocab = Vocabulary::build(corpus, rc.data.min_count);
    if (rc.model.vocab_size != 0 && rc.model.vocab_size != vocab.size())
        throw UsageError("config: model.vocab_size " + std::to_string(rc.model.vocab_size) +
                         " does not match the vocabulary built from the data (" +
                         std::to_string(vocab.size()) + ")");
    rc.model.vocab_size = vocab.size();
    rc.model.validate();

    fs::create_directories(rc.output_dir);
    vocab.save(fs::path(rc.output_dir) / "vocab.txt");
    write_config_echo(run_config_to_json(rc), fs::path(rc.output_dir) / "config.json");

    EncoderModel model(rc.model, rc.train.seed);
    TrainResult result = train(model, train_set, dev_set, vocab, rc.placeholder, rc.train, rc.output_dir);
    for (const auto& em : result.metrics) {
        std::printf("epoch %zu step %zu loss %.6f", em.epoch, em.step, em.train_loss);
        if (em.dev_bleu4) std::printf(" dev_bleu4 %.2f", *em.dev_bleu4);
        if (em.dev_micro_acc) std::printf(" dev_micro_acc %.2f", *em.dev_micro_acc);
        std::printf("\n");
    }
    if (!result.best_checkpoint.empty())
        std::printf("best checkpoint (epoch %zu): %s\n", result.best_epoch,
                    result.best_checkpoint.string().c_str());
    return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& vocab_path,
                 const std::optional<std::string>& input, const std::optional<std::string>& input_file,
                 const std::string& strategy_name, std::size_t max_gen_len,
                 const std::optional<std::string>& trace_path) {
    Strategy strategy = parse_strategy(strategy_name);
    LoadedModel lm = load_model(checkpoint, vocab_path);

    std::vector<std::string> inputs;
    if (input) inputs.push_back(*input);
    if (input_file) {
        std::ifstream in(*input_file);
        if (!in) throw UsageError("cannot open input file " + *input_file);
        std::string line;
        while (std::getline(in, line)) inputs.push_back(line);
    }
    if (inputs.empty()) throw UsageError("generate: provide --input or --input-file");

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        GenerationResult res = generate(lm.model, lm.vocab, inputs[i], strategy, max_gen_len);
        std::printf("%s\n", res.text.c_str());
        if (trace_path) {
            fs::path p = *trace_path;
            if (inputs.size() > 1) p += "." + std::to_string(i);
            export_trace(res.trace, lm.vocab, p);
        }
    }
    return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& vocab_path, const std::string& data_path,
                 const std::string& strategy_name, std::size_t max_gen_len, const std::string& out_dir) {
    Strategy strategy = parse_strategy(strategy_name);
    LoadedModel lm = load_model(checkpoint, vocab_path);
    std::vector<Example> data = load_dataset(data_path);
    if (data.empty()) throw UsageError("evaluate: dataset " + data_path + " is empty");

    EvalReport rep = evaluate(lm.model, lm.vocab, data, strategy, max_gen_len);
    const std::string text = format_report(rep);
    std::fputs(text.c_str(), stdout);

    fs::create_directories(out_dir);
    std::ofstream rep_out(fs::path(out_dir) / "eval_report.txt");
    rep_out << text;
    write_report_csv(rep, fs::path(out_dir) / "eval_report.csv");
    nlohmann::json echo{{"command", "evaluate"},     {"checkpoint", checkpoint},
                        {"vocab", vocab_path},       {"data", data_path},
                        {"strategy", strategy_name}, {"max_gen_len", max_gen_len}};
    write_config_echo(echo, fs::path(out_dir) / "eval_report.config.json");
    return 0;
}

int cmd_analyze(const std::string& checkpoint, const std::string& vocab_path, const std::string& data_path,
                const std::optional<std::size_t>& head, const std::optional<std::size_t>& layer,
                std::size_t max_examples, std::size_t max_gen_len, const std::string& out_dir) {
    LoadedModel lm = load_model(checkpoint, vocab_path);
    std::vector<Example> data = load_dataset(data_path);
    if (data.empty()) throw UsageError("analyze: dataset " + data_path + " is empty");
    if (data.size() > max_examples) data.resize(max_examples);
    if (head && *head >= lm.model.config().num_heads)
        throw UsageError("analyze: head index out of range");
    if (layer && *layer >= lm.model.config().num_layers)
        throw UsageError("analyze: layer index out of range");

    std::vector<std::vector<AttentionSplitRow>> rows;
    for (const auto& ex : data) {
        GenerationResult res = generate(lm.model, lm.vocab, ex.source, Strategy::LeftToRight, max_gen_len);
        rows.push_back(decompose(res.trace, res.trace.input_len, layer));
    }
    AnalysisReport rep = aggregate(rows);
    const std::string text = format_report(rep);
    std::fputs(text.c_str(), stdout);

    fs::create_directories(out_dir);
    std::ofstream rep_out(fs::path(out_dir) / "analysis_report.txt");
    rep_out << text;

    AnalysisReport csv_rep = rep;
    if (head) {
        csv_rep.per_head_alpha = {rep.per_head_alpha[*head]};
        csv_rep.per_head_renorm = {rep.per_head_renorm[*head]};
        csv_rep.num_heads = 1;
    }
    write_per_head_csv(csv_rep, fs::path(out_dir) / "per_head.csv");

    nlohmann::json echo{{"command", "analyze"},   {"checkpoint", checkpoint},
                        {"vocab", vocab_path},    {"data", data_path},
                        {"max_examples", max_examples}, {"max_gen_len", max_gen_len}};
    if (head) echo["head"] = *head;
    if (layer) echo["layer"] = *layer;
    write_config_echo(echo, fs::path(out_dir) / "analysis_report.config.json");
    return 0;
}

int cmd_heatmap(const std::string& checkpoint, const std::string& vocab_path, const std::string& input,
                std::size_t head, const std::string& out_base, std::size_t max_gen_len,
                const std::optional<std::size_t>& layer) {
    LoadedModel lm = load_model(checkpoint, vocab_path);
    if (head >= lm.model.config().num_heads) throw UsageError("heatmap: head index out of range");
    if (layer && *layer >= lm.model.config().num_layers) throw UsageError("heatmap: layer index out of range");
    GenerationResult res = generate(lm.model, lm.vocab, input, Strategy::LeftToRight, max_gen_len);
    export_heatmap(res.trace, lm.vocab, head, out_base, layer);
    nlohmann::json echo{{"command", "heatmap"}, {"checkpoint", checkpoint}, {"vocab", vocab_path},
                        {"input", input},       {"head", head},             {"max_gen_len", max_gen_len}};
    if (layer) echo["layer"] = *layer;
    write_config_echo(echo, out_base + ".config.json");
    std::printf("%s\n", res.text.c_str());
    return 0;
}

int cmd_gen_data(const std::string& task, std::size_t n, std::uint64_t seed, const std::string& out,
                 std::size_t max_len, std::size_t digits) {
    std::vector<Example> examples;
    if (task == "copy")
        examples = gen_copy(n, max_len, digits, seed);
    else if (task == "reverse")
        examples = gen_reverse(n, max_len, digits, seed);
    else if (task == "xor")
        examples = gen_xor_template(n, seed);
    else
        throw UsageError("gen-data: unknown task '" + task + "' (expected copy, reverse or xor)");
    write_jsonl(out, examples);
    nlohmann::json echo{{"command", "gen-data"}, {"task", task}, {"n", n},
                        {"seed", seed},          {"out", out},   {"max_len", max_len},
                        {"digits", digits}};
    write_config_echo(echo, out + ".config.json");
    std::printf("wrote %zu examples to %s\n", examples.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bidirectional sequence generation via placeholder uncovering"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
    std::string config_path;
    std::optional<std::string> out_override, train_override, dev_override;
    std::optional<std::size_t> epochs_override;
    std::optional<std::uint64_t> seed_override;
    train_cmd->add_option("--config", config_path, "run config JSON")->required();
    train_cmd->add_option("--output-dir", out_override, "override output_dir");
    train_cmd->add_option("--epochs", epochs_override, "override train.epochs");
    train_cmd->add_option("--seed", seed_override, "override train.seed");
    train_cmd->add_option("--train-path", train_override, "override data.train_path");
    train_cmd->add_option("--dev-path", dev_override, "override data.dev_path");

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "generate text from a checkpoint");
    std::string g_ckpt, g_vocab, g_strategy = "left_to_right";
    std::optional<std::string> g_input, g_input_file, g_trace;
    std::size_t g_max_gen = 50;
    gen_cmd->add_option("--checkpoint", g_ckpt, "checkpoint file")->required();
    gen_cmd->add_option("--vocab", g_vocab, "vocabulary file")->required();
    gen_cmd->add_option("--input", g_input, "source text");
    gen_cmd->add_option("--input-file", g_input_file, "file with one source text per line");
    gen_cmd->add_option("--strategy", g_strategy, "generation strategy");
    gen_cmd->add_option("--max-gen-len", g_max_gen, "placeholder slots");
    gen_cmd->add_option("--trace", g_trace, "write a step trace file");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint over a dataset");
    std::string e_ckpt, e_vocab, e_data, e_strategy = "left_to_right", e_out = ".";
    std::size_t e_max_gen = 50;
    eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--vocab", e_vocab, "vocabulary file")->required();
    eval_cmd->add_option("--data", e_data, "JSONL dataset")->required();
    eval_cmd->add_option("--strategy", e_strategy, "generation strategy");
    eval_cmd->add_option("--max-gen-len", e_max_gen, "placeholder slots");
    eval_cmd->add_option("--out-dir", e_out, "report directory");

    // analyze
    auto* ana_cmd = app.add_subcommand("analyze", "attention-flow report over a dataset");
    std::string a_ckpt, a_vocab, a_data, a_out = ".";
    std::optional<std::size_t> a_head, a_layer;
    std::size_t a_max_examples = 100, a_max_gen = 50;
    ana_cmd->add_option("--checkpoint", a_ckpt, "checkpoint file")->required();
    ana_cmd->add_option("--vocab", a_vocab, "vocabulary file")->required();
    ana_cmd->add_option("--data", a_data, "JSONL dataset")->required();
    ana_cmd->add_option("--head", a_head, "restrict the per-head CSV to one head");
    ana_cmd->add_option("--layer", a_layer, "analyze this layer instead of the final one");
    ana_cmd->add_option("--max-examples", a_max_examples, "cap on analyzed examples");
    ana_cmd->add_option("--max-gen-len", a_max_gen, "placeholder slots");
    ana_cmd->add_option("--out-dir", a_out, "report directory");

    // heatmap
    auto* hm_cmd = app.add_subcommand("heatmap", "export an attention heatmap for one input");
    std::string h_ckpt, h_vocab, h_input, h_out;
    std::size_t h_head = 0, h_max_gen = 50;
    std::optional<std::size_t> h_layer;
    hm_cmd->add_option("--checkpoint", h_ckpt, "checkpoint file")->required();
    hm_cmd->add_option("--vocab", h_vocab, "vocabulary file")->required();
    hm_cmd->add_option("--input", h_input, "source text")->required();
    hm_cmd->add_option("--head", h_head, "attention head");
    hm_cmd->add_option("--out", h_out, "output base path (.csv and .svg are appended)")->required();
    hm_cmd->add_option("--max-gen-len", h_max_gen, "placeholder slots");
    hm_cmd->add_option("--layer", h_layer, "use this layer instead of the final one");

    // gen-data
    auto* gd_cmd = app.add_subcommand("gen-data", "write a synthetic JSONL dataset");
    std::string d_task, d_out;
    std::size_t d_n = 1000, d_max_len = 8, d_digits = 10;
    std::uint64_t d_seed = 0;
    gd_cmd->add_option("--task", d_task, "copy, reverse or xor")->required();
    gd_cmd->add_option("--n", d_n, "number of examples");
    gd_cmd->add_option("--seed", d_seed, "generator seed");
    gd_cmd->add_option("--out", d_out, "output JSONL path")->required();
    gd_cmd->add_option("--max-len", d_max_len, "maximum sequence length (copy/reverse)");
    gd_cmd->add_option("--digits", d_digits, "alphabet size (copy/reverse)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd)
            return cmd_train(config_path, out_override, epochs_override, seed_override, train_override,
                             dev_override);
        if (*gen_cmd)
            return cmd_generate(g_ckpt, g_vocab, g_input, g_input_file, g_strategy, g_max_gen, g_trace);
        if (*eval_cmd) return cmd_evaluate(e_ckpt, e_vocab, e_data, e_strategy, e_max_gen, e_out);
        if (*ana_cmd)
            return cmd_analyze(a_ckpt, a_vocab, a_data, a_head, a_layer, a_max_examples, a_max_gen, a_out);
        if (*hm_cmd) return cmd_heatmap(h_ckpt, h_vocab, h_input, h_head, h_out, h_max_gen, h_layer);
        if (*gd_cmd) return cmd_gen_data(d_task, d_n, d_seed, d_out, d_max_len, d_digits);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
