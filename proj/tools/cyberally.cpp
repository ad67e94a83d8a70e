// cyberally: serve the triage pipeline, replay alert files, run evaluations.

#include "cyberally/config.hpp"
#include "cyberally/error.hpp"
#include "cyberally/evaluation.hpp"
#include "cyberally/pipeline.hpp"
#include "cyberally/service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace cyberally;
using nlohmann::json;

namespace {

const std::string kDataDir = CYBERALLY_DATA_DIR;

std::filesystem::path corpus_file(const std::filesystem::path& corpus, const char* name) {
    return std::filesystem::is_directory(corpus) ? corpus / name : corpus;
}

void write_json(const std::string& path, const json& doc) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << doc.dump(2) << '\n';
}

std::vector<double> parse_weights(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        out.push_back(std::stod(item));
    }
    if (out.empty()) throw Error(ErrorCode::InvalidConfig, "no weights given");
    return out;
}

std::vector<std::string> read_tokens(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream words(line);
        std::string word;
        while (words >> word) tokens.push_back(word);
    }
    return tokens;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Alert triage and response suggestion pipeline"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string serve_config;
    serve->add_option("--config", serve_config, "Service config file")->required();

    // replay
    auto* replay = app.add_subcommand("replay", "Feed an alert file through the pipeline");
    std::string replay_file, replay_config = kDataDir + "/demo/config.json", replay_json;
    double speed = 0.0;
    bool approve_all = false;
    replay->add_option("file", replay_file, "Newline-delimited alert file")->required();
    replay->add_option("--speed", speed, "Multiplier on recorded inter-arrival gaps (0 = no waiting)");
    replay->add_option("--config", replay_config, "Service config file");
    replay->add_flag("--approve-all", approve_all, "Approve every carded alert afterwards");
    replay->add_option("--json", replay_json, "Write the report here");

    // eval
    auto* eval = app.add_subcommand("eval", "Corpus generation and evaluation");
    std::string lexicon_path = kDataDir + "/lexicon.txt";
    eval->add_option("--lexicon", lexicon_path, "Word-vector file");
    std::string eval_corpus;
    int eval_folds = 10;
    std::uint64_t eval_seed = 42;
    eval->add_option("--corpus", eval_corpus, "Labeled corpus file (kNN evaluation at 1x, 5x, 10x)");
    eval->add_option("--folds", eval_folds);
    eval->add_option("--seed", eval_seed);

    auto* gen = eval->add_subcommand("gen", "Generate a corpus from a spec");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec)->required();
    gen->add_option("--out", gen_out)->required();

    auto* dedup = eval->add_subcommand("dedup", "Per-priority counts before and after dedup");
    std::string dedup_corpus, dedup_json;
    DedupConfig dedup_cfg;
    long long dedup_window = 30;
    dedup->add_option("--corpus", dedup_corpus, "Corpus directory or alert file")->required();
    dedup->add_option("--threshold", dedup_cfg.threshold);
    dedup->add_option("--window-minutes", dedup_window);
    dedup->add_option("--json", dedup_json, "Write the table here");

    auto* knn = eval->add_subcommand("knn", "Cross-validated kNN metrics per upsampling weight");
    std::string knn_corpus, knn_weights = "1,5,10", knn_json;
    int knn_folds = 10;
    std::uint64_t knn_seed = 42;
    KnnConfig knn_cfg;
    long long knn_window = 30;
    knn->add_option("--corpus", knn_corpus, "Corpus directory or labeled file")->required();
    knn->add_option("--weights", knn_weights);
    knn->add_option("--folds", knn_folds);
    knn->add_option("--seed", knn_seed);
    knn->add_option("--k", knn_cfg.k);
    knn->add_option("--window-minutes", knn_window);
    knn->add_option("--json", knn_json, "Write the metrics here");

    auto* lex = eval->add_subcommand("lexicon", "Build a deterministic lexicon from a token list");
    std::vector<std::string> lex_vocab;
    std::string lex_out;
    std::size_t lex_dim = 16;
    std::uint64_t lex_seed = 7;
    double lex_cohesion = 0.0;
    lex->add_option("--vocabulary", lex_vocab, "Token list files; each file is one group")->required();
    lex->add_option("--cohesion", lex_cohesion, "Pull toward the group direction, in [0, 1)");
    lex->add_option("--out", lex_out)->required();
    lex->add_option("--dim", lex_dim);
    lex->add_option("--seed", lex_seed);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*serve) {
            auto config = load_config(serve_config);
            std::shared_ptr<Pipeline> pipeline = make_pipeline(config);
            Service service(pipeline);
            service.run(config.host, config.port);
            return 0;
        }
        if (*replay) {
            auto pipeline = make_pipeline(load_config(replay_config));
            auto report = pipeline->replay(replay_file, speed);
            json doc = to_json(report);
            if (approve_all) {
                std::size_t tickets = 0;
                for (const auto& card : pipeline->cards()) {
                    if (pipeline->decision(card.alert_id)) continue;
                    if (pipeline->submit_decision({card.alert_id, Verdict::Approve, "replay", {}, {}})) {
                        ++tickets;
                    }
                }
                doc["tickets"] = tickets;
            }
            std::cout << doc.dump(2) << '\n';
            write_json(replay_json, doc);
            return report.conserved() ? 0 : 1;
        }
        if (*eval) {
            if (*lex) {
                std::vector<std::vector<std::string>> groups;
                for (const auto& file : lex_vocab) groups.push_back(read_tokens(file));
                auto lexicon = make_grouped_lexicon(groups, lex_dim, lex_seed, lex_cohesion);
                std::ofstream out(lex_out);
                if (!out) throw Error(ErrorCode::IoError, "cannot write " + lex_out);
                write_lexicon(lexicon, out);
                std::cout << lexicon.size() << " tokens, dimension " << lexicon.dimension() << '\n';
                return 0;
            }
            auto lexicon = load_lexicon(lexicon_path);
            if (*gen) {
                auto spec = load_corpus_spec(gen_spec);
                auto corpus = generate_corpus(spec, lexicon);
                write_corpus(corpus, spec, gen_out);
                std::cout << corpus.alerts.size() << " alerts, " << corpus.distinct_types
                          << " distinct types, " << corpus.suspicious_types << " suspicious -> " << gen_out
                          << '\n';
                return 0;
            }
            if (*dedup) {
                dedup_cfg.window = minutes(dedup_window);
                dedup_cfg.validate();
                auto alerts = load_alerts(corpus_file(dedup_corpus, "alerts.ndjson"));
                auto table = run_dedup_eval(alerts, lexicon, dedup_cfg);
                std::cout << format_dedup_table(table);
                write_json(dedup_json, to_json(table));
                return 0;
            }
            std::string corpus = *knn ? knn_corpus : eval_corpus;
            if (corpus.empty()) {
                std::cerr << eval->help();
                return 2;
            }
            std::vector<double> weights{1, 5, 10};
            int folds = eval_folds;
            std::uint64_t seed = eval_seed;
            if (*knn) {
                weights = parse_weights(knn_weights);
                folds = knn_folds;
                seed = knn_seed;
                knn_cfg.window = minutes(knn_window);
            }
            auto labeled = load_labeled_corpus(corpus_file(corpus, "labeled.ndjson"));
            auto columns = run_classifier_eval(labeled, lexicon, knn_cfg, weights, folds, seed);
            std::cout << format_classifier_table(columns);
            write_json(knn_json, to_json(columns));
            return 0;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
