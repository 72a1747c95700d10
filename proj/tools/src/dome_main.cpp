#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dome/coin.hpp"
#include "dome/corpus.hpp"
#include "dome/errors.hpp"
#include "dome/metrics.hpp"
#include "dome/model.hpp"
#include "dome/trainer.hpp"

namespace {

using nlohmann::ordered_json;

int usage_error(const std::string& msg) {
    std::cerr << "error: " << msg << std::endl;
    return 1;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw dome::ParseError("cannot open file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw dome::ParseError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw dome::ParseError("failed while writing '" + path + "'");
}

/// DOME_SEED overrides the configured seed when set.
void apply_env_seed(std::uint64_t& seed) {
    const char* env = std::getenv("DOME_SEED");
    if (!env || !*env) return;
    if (env[0] == '-')
        throw dome::ConfigError("DOME_SEED must be a non-negative integer");
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0')
        throw dome::ConfigError("DOME_SEED must be a non-negative integer");
    seed = static_cast<std::uint64_t>(v);
    std::cerr << "seed overridden by DOME_SEED=" << seed << std::endl;
}

int cmd_preprocess(const std::string& input, const std::string& out,
                   bool drop_others) {
    dome::Corpus corpus = dome::load_corpus_jsonl(input, /*require_intent=*/false);
    if (drop_others) {
        const std::size_t before = corpus.size();
        corpus = dome::filter_others(corpus);
        if (corpus.empty() && before > 0)
            std::cerr << "warning: every record was labeled others; output is empty"
                      << std::endl;
    }
    dome::save_corpus_jsonl(corpus, out);
    ordered_json j;
    j["records_written"] = corpus.size();
    j["out"] = out;
    std::cout << j.dump() << std::endl;
    return 0;
}

int cmd_train_dome(const std::string& config_path, const std::string& corpus_path,
                   const std::string& out_path) {
    dome::TrainConfig cfg;
    try {
        cfg = dome::TrainConfig::from_json_file(config_path);
        apply_env_seed(cfg.seed);
        cfg.checkpoint_path = out_path;
        cfg.validate();
    } catch (const dome::Error& e) {
        return usage_error(std::string("config: ") + e.what());
    }
    dome::Corpus corpus = dome::load_corpus_jsonl(corpus_path, true);
    dome::TrainResult result = dome::train_dome(corpus, cfg);
    ordered_json j;
    j["loss_history"] = result.loss_history;
    j["biencoder_history"] = result.biencoder_history;
    j["epochs_completed"] = result.epochs_completed;
    j["checkpoint"] = out_path;
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_train_coin(const std::string& config_path, const std::string& corpus_path,
                   const std::string& out_path) {
    dome::CoinTrainConfig cfg;
    try {
        cfg = dome::CoinTrainConfig::from_json_file(config_path);
        apply_env_seed(cfg.seed);
        cfg.checkpoint_path = out_path;
        cfg.validate();
    } catch (const dome::Error& e) {
        return usage_error(std::string("config: ") + e.what());
    }
    dome::Corpus corpus = dome::load_corpus_jsonl(corpus_path, true);
    dome::CoinTrainResult result = dome::train_coin(corpus, cfg);
    ordered_json j;
    j["loss_history"] = result.loss_history;
    j["epochs_completed"] = cfg.classifier.epochs;
    j["checkpoint"] = out_path;
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_label(const std::string& ckpt, const std::string& input,
              const std::string& out) {
    dome::LoadedCoin loaded = dome::load_coin_checkpoint(ckpt);
    {
        std::ifstream is(input, std::ios::binary);
        std::string line;
        while (is && std::getline(is, line)) {
            if (line.find("\"intent\"") != std::string::npos) {
                std::cerr << "warning: existing intent labels will be overwritten"
                          << std::endl;
                break;
            }
        }
    }
    dome::Corpus corpus = dome::load_corpus_jsonl(input, /*require_intent=*/false);
    if (corpus.empty()) throw dome::EmptyInput("input corpus has no records");
    corpus = dome::auto_label(*loaded.model, loaded.vocab, std::move(corpus));
    dome::save_corpus_jsonl(corpus, out);
    ordered_json j;
    j["records_labeled"] = corpus.size();
    j["out"] = out;
    std::cout << j.dump() << std::endl;
    return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& code_path,
                 const std::string& intent_name, unsigned beam,
                 const std::string& trace_path) {
    dome::IntentCategory intent;
    try {
        intent = dome::parse_intent(intent_name);
    } catch (const dome::InvalidIntent&) {
        return usage_error("unknown intent '" + intent_name + "'");
    }
    if (intent == dome::IntentCategory::Others)
        return usage_error("comments cannot be generated for the others intent");

    dome::LoadedDome loaded = dome::load_dome_checkpoint(ckpt);
    const std::string code = read_text_file(code_path);

    dome::AttentionTrace trace;
    dome::GenerateResult res =
        dome::generate(loaded.bundle, code, intent, beam,
                       trace_path.empty() ? nullptr : &trace);
    if (!trace_path.empty())
        write_text_file(trace_path, dome::trace_to_json(trace) + "\n");

    ordered_json j;
    j["comment"] = res.comment;
    j["intent"] = dome::to_string(res.intent);
    j["exemplar_id"] = res.exemplar_id;
    j["score"] = res.exemplar_score;
    j["beam_score"] = res.beam_score;
    j["used_exemplar"] = res.used_exemplar;
    std::cout << j.dump(2) << std::endl;
    return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& test_path,
                 const std::string& out_path) {
    dome::LoadedDome loaded = dome::load_dome_checkpoint(ckpt);
    dome::Corpus test = dome::load_corpus_jsonl(test_path, true);
    const std::size_t before = test.size();
    test = dome::filter_others(test);
    if (test.size() != before)
        std::cerr << "warning: skipped " << (before - test.size())
                  << " record(s) labeled others" << std::endl;
    if (test.empty()) throw dome::EmptyInput("no evaluable records in the test set");

    std::vector<dome::TokenSeq> candidates;
    std::vector<dome::TokenSeq> references;
    std::vector<dome::IntentCategory> intents;
    candidates.reserve(test.size());
    references.reserve(test.size());
    intents.reserve(test.size());
    for (const dome::CodeCommentRecord& r : test) {
        dome::GenerateResult res = dome::generate(loaded.bundle, r.code, r.intent);
        candidates.push_back(dome::tokenize(res.comment));
        references.push_back(dome::tokenize(r.comment));
        intents.push_back(r.intent);
    }
    dome::MetricReport report =
        dome::evaluate_generation(candidates, references, intents);
    const std::string text = dome::report_to_json(report);
    if (!out_path.empty()) write_text_file(out_path, text + "\n");
    std::cout << text << std::endl;
    return 0;
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const dome::ParseError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::CorruptCheckpoint& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::EmptyInput& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::InvalidIntent& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::InputTooLong& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::NoExemplar& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const dome::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const dome::Error& e) {
        std::cerr << "internal error: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << std::endl;
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Developer-intent driven code comment generation toolkit"};
    app.require_subcommand(1);

    std::string input, output, config_path, corpus_path, ckpt_path, code_path;
    std::string intent_name, trace_path, test_path;
    bool drop_others = false;
    unsigned beam = 0;

    CLI::App* pre = app.add_subcommand("preprocess",
                                       "Normalize a JSONL corpus and optionally "
                                       "drop records labeled others");
    pre->add_option("--input", input, "input corpus (JSONL)")->required();
    pre->add_option("--out", output, "output corpus (JSONL)")->required();
    pre->add_flag("--drop-others", drop_others,
                  "remove records labeled others");

    CLI::App* tdome = app.add_subcommand("train-dome",
                                         "Train the comment generator");
    tdome->add_option("--config", config_path, "training config (JSON)")->required();
    tdome->add_option("--corpus", corpus_path, "training corpus (JSONL)")->required();
    tdome->add_option("--out", output, "checkpoint path to write")->required();

    CLI::App* tcoin = app.add_subcommand("train-coin",
                                         "Train the intent classifier");
    tcoin->add_option("--config", config_path, "training config (JSON)")->required();
    tcoin->add_option("--corpus", corpus_path, "training corpus (JSONL)")->required();
    tcoin->add_option("--out", output, "checkpoint path to write")->required();

    CLI::App* label = app.add_subcommand("label",
                                         "Label a corpus with classifier intents");
    label->add_option("--ckpt", ckpt_path, "classifier checkpoint")->required();
    label->add_option("--input", input, "input corpus (JSONL)")->required();
    label->add_option("--out", output, "labeled corpus (JSONL)")->required();

    CLI::App* gen = app.add_subcommand("generate",
                                       "Generate a comment for a code file");
    gen->add_option("--ckpt", ckpt_path, "generator checkpoint")->required();
    gen->add_option("--code", code_path, "file containing the code snippet")
        ->required();
    gen->add_option("--intent", intent_name, "target intent")->required();
    gen->add_option("--beam", beam, "beam width override (default: config)");
    gen->add_option("--trace", trace_path, "write attention trace JSON here");

    CLI::App* eval = app.add_subcommand("evaluate",
                                        "Generate for a labeled test set and "
                                        "report BLEU/ROUGE-L/METEOR");
    eval->add_option("--ckpt", ckpt_path, "generator checkpoint")->required();
    eval->add_option("--test", test_path, "test corpus (JSONL)")->required();
    eval->add_option("--out", output, "report JSON path (also printed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }

    if (app.got_subcommand(pre))
        return run_guarded([&] { return cmd_preprocess(input, output, drop_others); });
    if (app.got_subcommand(tdome))
        return run_guarded(
            [&] { return cmd_train_dome(config_path, corpus_path, output); });
    if (app.got_subcommand(tcoin))
        return run_guarded(
            [&] { return cmd_train_coin(config_path, corpus_path, output); });
    if (app.got_subcommand(label))
        return run_guarded([&] { return cmd_label(ckpt_path, input, output); });
    if (app.got_subcommand(gen))
        return run_guarded([&] {
            return cmd_generate(ckpt_path, code_path, intent_name, beam, trace_path);
        });
    if (app.got_subcommand(eval))
        return run_guarded(
            [&] { return cmd_evaluate(ckpt_path, test_path, output); });
    return usage_error("no command selected");
}
