// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "oracles.hpp"

#include "cyberally/alert.hpp"
#include "cyberally/case_management.hpp"
#include "cyberally/classifier.hpp"
#include "cyberally/config.hpp"
#include "cyberally/dedup.hpp"
#include "cyberally/embedding.hpp"
#include "cyberally/error.hpp"
#include "cyberally/evaluation.hpp"
#include "cyberally/knowledge_graph.hpp"
#include "cyberally/pipeline.hpp"
#include "cyberally/provider.hpp"
#include "cyberally/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cyberally;

namespace {

const fs::path kData = CYBERALLY_DATA_DIR;
const fs::path kGoldens = CYBERALLY_GOLDEN_DIR;
const std::string kCli = CYBERALLY_CLI;

// Collects failed checks for one criterion.
struct Check {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return json::parse(in);
}

int g_failed = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<void(Check&)>& body) {
    Check c;
    auto t0 = std::chrono::steady_clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.failures.push_back(std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_seconds) {
        std::ostringstream msg;
        msg << "took " << secs << " s, limit " << limit_seconds << " s";
        c.failures.push_back(msg.str());
    }
    std::ostringstream line;
    line.precision(2);
    line << std::fixed << (c.failures.empty() ? "PASS" : "FAIL") << "  " << name << "  (" << secs << " s)";
    std::cout << line.str() << "\n";
    for (const auto& f : c.failures) std::cout << "      " << f << "\n";
    std::cout.flush();
    if (!c.failures.empty()) ++g_failed;
}

fs::path scratch_dir(const std::string& tag) {
    std::random_device rd;
    auto p = fs::temp_directory_path() / ("cyberally-acc-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(p);
    return p;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

// ------------------------------------------------------------------ dedup table

void table1(Check& c) {
    auto dir = scratch_dir("t1");
    auto lexicon = kData / "lexicon.txt";
    auto gen = kCli + " eval --lexicon " + quoted(lexicon) + " gen --spec " +
               quoted(kData / "specs/table1.json") + " --out " + quoted(dir / "corpus") + " > " +
               quoted(dir / "gen.log") + " 2>&1";
    c.expect(std::system(gen.c_str()) == 0, "eval gen exited nonzero");
    auto run = kCli + " eval --lexicon " + quoted(lexicon) + " dedup --corpus " + quoted(dir / "corpus") +
               " --json " + quoted(dir / "table.json") + " > " + quoted(dir / "dedup.log") + " 2>&1";
    c.expect(std::system(run.c_str()) == 0, "eval dedup exited nonzero");

    auto table = read_json(dir / "table.json");
    auto spec = read_json(kData / "specs/table1.json").at("priorities");
    auto oracle_rows = read_json(kGoldens / "table1_oracle.json");

    std::map<int, std::pair<std::size_t, std::size_t>> got;
    for (const auto& row : table.at("rows")) {
        got[row.at("priority").get<int>()] = {row.at("total").get<std::size_t>(),
                                              row.at("after_dedup").get<std::size_t>()};
    }
    c.expect(got.size() == spec.size(), "row count " + std::to_string(got.size()));
    for (const auto& [key, want] : spec.items()) {
        int p = std::stoi(key);
        auto it = got.find(p);
        if (it == got.end()) {
            c.expect(false, "missing priority " + key);
            continue;
        }
        auto total = want.at("total").get<std::size_t>();
        auto distinct = want.at("distinct").get<std::size_t>();
        c.expect(it->second.first == total, "priority " + key + " total " + std::to_string(it->second.first));
        c.expect(it->second.second == distinct,
                 "priority " + key + " after dedup " + std::to_string(it->second.second) + ", want " +
                     std::to_string(distinct));
    }
    for (const auto& row : oracle_rows) {
        int p = row.at("priority").get<int>();
        c.expect(got.count(p) && got[p].second == row.at("after_dedup").get<std::size_t>(),
                 "oracle golden differs at priority " + std::to_string(p));
    }
    fs::remove_all(dir);
}

// ------------------------------------------------------------------ classifier weights

void table2(Check& c) {
    auto lexicon = load_lexicon(kData / "lexicon.txt");
    auto corpus = load_labeled_corpus(kData / "corpora/imbalanced/labeled.ndjson");

    std::set<std::string> benign_types, suspicious_types;
    for (const auto& [a, label] : corpus) {
        (label == TriageLabel::Benign ? benign_types : suspicious_types).insert(alert_text(a));
    }
    c.expect(benign_types.size() == 5000, "benign types " + std::to_string(benign_types.size()));
    c.expect(suspicious_types.size() == 100, "suspicious types " + std::to_string(suspicious_types.size()));

    KnnConfig base;
    base.k = 15;
    base.window = minutes(30);
    auto columns = run_classifier_eval(corpus, lexicon, base, {1.0, 5.0, 10.0}, 10, 42);
    auto golden = read_json(kGoldens / "table2.json").at("columns");
    c.expect(columns.size() == golden.size(), "column count");
    for (std::size_t i = 0; i < columns.size() && i < golden.size(); ++i) {
        const auto& m = columns[i].metrics;
        const auto& g = golden[i];
        std::ostringstream tag;
        tag << "w=" << columns[i].weight << " got " << m.tp << "/" << m.fp << "/" << m.tn << "/" << m.fn;
        c.expect(columns[i].weight == g.at("weight").get<double>(), tag.str() + " weight");
        c.expect(m.tp == g.at("tp").get<std::size_t>() && m.fp == g.at("fp").get<std::size_t>() &&
                     m.tn == g.at("tn").get<std::size_t>() && m.fn == g.at("fn").get<std::size_t>(),
                 tag.str() + " differs from golden");
        if (i > 0) {
            c.expect(columns[i].metrics.recall >= columns[i - 1].metrics.recall,
                     "recall decreases at " + tag.str());
        }
    }
}

// ------------------------------------------------------------------ F1

void f1_arithmetic(Check& c) {
    const double rows[4][3] = {{0.9392, 0.9679, 0.9533},
                               {0.9904, 0.9974, 0.9939},
                               {0.9981, 0.9995, 0.9988},
                               {0.9992, 0.9997, 0.9994}};
    for (const auto& r : rows) {
        double f = f1_score(r[0], r[1]);
        std::ostringstream tag;
        tag.precision(6);
        tag << "f1(" << r[0] << ", " << r[1] << ") = " << f << ", want " << r[2];
        c.expect(std::abs(f - r[2]) <= 5e-5, tag.str());
    }
}

// ------------------------------------------------------------------ oracles

// Outcome tallies across all instances, so a run that never reaches a branch fails.
struct Coverage {
    std::size_t admitted = 0, duplicate = 0, rejected = 0, zero = 0;
    std::size_t suspicious = 0, benign = 0;
    std::size_t static_hits = 0, dynamic_hits = 0, empty_rankings = 0;
    std::size_t largest = 0;
} g_cov;

Timestamp from_ms(long long ms) { return Timestamp(Duration(ms)); }

std::vector<double> random_unit(std::mt19937_64& g, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double s = 0;
    for (auto& x : v) {
        x = n(g);
        s += x * x;
    }
    for (auto& x : v) x /= std::sqrt(s);
    return v;
}

// Random stream: a few prototype vectors with jitter, exact repeats, zero
// vectors and the occasional late arrival.
void dedup_instance(Check& c, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::size_t n = 10 + oracle::draw_below(g, 1991);
    std::size_t dim = 2 + oracle::draw_below(g, 15);
    std::size_t protos = 1 + oracle::draw_below(g, 40);
    double jitter = std::uniform_real_distribution<double>(0.0, 0.4)(g);
    std::vector<std::vector<double>> proto;
    for (std::size_t i = 0; i < protos; ++i) proto.push_back(random_unit(g, dim));

    DedupConfig cfg;
    cfg.threshold = std::uniform_real_distribution<double>(0.5, 0.99)(g);
    cfg.window = minutes(1 + static_cast<long long>(oracle::draw_below(g, 60)));
    cfg.skew = seconds(static_cast<long long>(oracle::draw_below(g, 10)));

    std::vector<oracle::DedupItem> items;
    std::vector<std::vector<double>> seen;
    long long t = 1'700'000'000'000LL;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        t += static_cast<long long>(oracle::draw_below(g, 120'000));
        long long ts = t;
        if (u(g) < 0.05) ts -= static_cast<long long>(oracle::draw_below(g, 15'000));
        oracle::Embedded e;
        double r = u(g);
        if (r < 0.03) {
            e.v.assign(dim, 0.0);
        } else if (r < 0.25 && !seen.empty()) {
            e.v = seen[oracle::draw_below(g, seen.size())];
            e.zero = false;
        } else {
            auto v = proto[oracle::draw_below(g, protos)];
            std::normal_distribution<double> nd(0.0, jitter);
            for (auto& x : v) x += nd(g);
            e.v = v;
            e.zero = oracle::length(v) == 0.0;
            seen.push_back(v);
        }
        items.push_back({"a" + std::to_string(i), ts, e});
    }

    auto want = oracle::dedup(items, cfg.threshold, cfg.window.count(), cfg.skew.count());
    g_cov.largest = std::max(g_cov.largest, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (items[i].e.zero) ++g_cov.zero;
        if (want[i] == oracle::DedupOutcome::Admitted) ++g_cov.admitted;
        if (want[i] == oracle::DedupOutcome::Duplicate) ++g_cov.duplicate;
        if (want[i] == oracle::DedupOutcome::Rejected) ++g_cov.rejected;
    }
    DedupFilter filter(cfg);
    for (std::size_t i = 0; i < items.size(); ++i) {
        Alert a;
        a.id = items[i].id;
        a.timestamp = from_ms(items[i].ts);
        EmbeddingVector v{items[i].e.v, items[i].e.zero ? 0.0 : 1.0};
        oracle::DedupOutcome got;
        try {
            got = filter.check_and_admit(a, v).is_duplicate ? oracle::DedupOutcome::Duplicate
                                                            : oracle::DedupOutcome::Admitted;
        } catch (const Error& e) {
            got = e.code() == ErrorCode::OutOfOrderTimestamp ? oracle::DedupOutcome::Rejected
                                                             : oracle::DedupOutcome::Admitted;
            if (e.code() != ErrorCode::OutOfOrderTimestamp) {
                c.expect(false, "dedup seed " + std::to_string(seed) + ": unexpected error");
                return;
            }
        }
        if (got != want[i]) {
            c.expect(false, "dedup seed " + std::to_string(seed) + " differs at item " + std::to_string(i));
            return;
        }
    }
}

void knn_instance(Check& c, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::size_t n = 5 + oracle::draw_below(g, 1996);
    std::size_t dim = 2 + oracle::draw_below(g, 15);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double suspicious_share = u(g) * 0.5;

    std::vector<oracle::Example> train;
    long long t0 = 1'700'000'000'000LL;
    long long span = 1 + static_cast<long long>(oracle::draw_below(g, 48 * 3'600'000ULL));
    for (std::size_t i = 0; i < n; ++i) {
        oracle::Example e;
        e.id = "t" + std::to_string(oracle::draw_below(g, 1'000'000)) + "-" + std::to_string(i);
        if (u(g) < 0.15 && !train.empty()) {
            const auto& other = train[oracle::draw_below(g, train.size())];
            e.v = other.v;
            e.ts = u(g) < 0.5 ? other.ts : t0 + static_cast<long long>(oracle::draw_below(g, span));
        } else {
            e.v = random_unit(g, dim);
            e.ts = t0 + static_cast<long long>(oracle::draw_below(g, span));
        }
        e.suspicious = u(g) < suspicious_share;
        train.push_back(e);
    }
    std::vector<LabeledExample> sys;
    std::vector<const oracle::Example*> ptrs;
    for (const auto& e : train) {
        sys.push_back({e.id, EmbeddingVector{e.v, 1.0}, e.suspicious ? TriageLabel::Suspicious : TriageLabel::Benign,
                       from_ms(e.ts)});
        ptrs.push_back(&e);
    }

    KnnConfig cfg;
    cfg.k = 1 + static_cast<int>(oracle::draw_below(g, 25));
    cfg.malicious_weight = 1.0 + std::floor(u(g) * 12.0);
    cfg.window = minutes(1 + static_cast<long long>(oracle::draw_below(g, 600)));

    for (int q = 0; q < 20; ++q) {
        std::vector<double> v = u(g) < 0.2 ? train[oracle::draw_below(g, n)].v : random_unit(g, dim);
        if (q == 0) v.assign(dim, 0.0);
        long long at = t0 + static_cast<long long>(oracle::draw_below(g, span));
        bool want = oracle::knn_suspicious(ptrs, v, at, cfg.k, cfg.malicious_weight, cfg.window.count());
        ++(want ? g_cov.suspicious : g_cov.benign);
        EmbeddingVector query{v, oracle::length(v) == 0.0 ? 0.0 : 1.0};
        bool got = classify(sys, cfg, query, from_ms(at)) == TriageLabel::Suspicious;
        if (got != want) {
            c.expect(false, "knn seed " + std::to_string(seed) + " differs at query " + std::to_string(q));
            return;
        }
    }
}

void retrieval_instance(Check& c, std::uint64_t seed, const std::shared_ptr<const Lexicon>& lex,
                        const oracle::Lexicon& olex, const std::vector<std::string>& vocab) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto phrase = [&](std::size_t words) {
        std::string s;
        for (std::size_t i = 0; i < words; ++i) {
            if (!s.empty()) s += ' ';
            s += u(g) < 0.05 ? "zzunknown" : vocab[oracle::draw_below(g, vocab.size())];
        }
        return s;
    };

    std::size_t n_static = 1 + oracle::draw_below(g, 2000);
    std::size_t n_alerts = 1 + oracle::draw_below(g, 60);
    const std::size_t dim = lex->dimension();

    LayeredGraph graph(lex);
    std::vector<oracle::Doc> static_docs, dynamic_docs;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n_static; ++i) {
        GraphNode node;
        node.id = "n" + std::to_string(i);
        node.kind = u(g) < 0.5 ? NodeKind::PastIncident : NodeKind::Note;
        if (u(g) < 0.1 && !texts.empty()) {
            auto t = texts[oracle::draw_below(g, texts.size())];
            auto cut = t.find('|');
            node.label = t.substr(0, cut);
            node.description = t.substr(cut + 1);
        } else {
            node.label = phrase(1 + oracle::draw_below(g, 3));
            node.description = phrase(oracle::draw_below(g, 8));
            if (node.description.empty()) node.description = "zzunknown";
        }
        texts.push_back(node.label + "|" + node.description);
        static_docs.push_back({node.id, oracle::mean_vector(olex, node.label + " " + node.description, dim).v});
        graph.add_node(LayerId::Static, node);
    }
    graph.seal_static();

    std::vector<Alert> alerts;
    for (std::size_t i = 0; i < n_alerts; ++i) {
        Alert a;
        a.id = "x" + std::to_string(i);
        a.timestamp = from_ms(1'700'000'000'000LL + static_cast<long long>(i) * 1000);
        a.priority = 5;
        a.rule_id = "100";
        a.agent = "nowhere";
        a.title = phrase(1 + oracle::draw_below(g, 4));
        a.full_log = u(g) < 0.5 ? phrase(oracle::draw_below(g, 6)) : "";
        auto text = alert_text(a);
        graph.record_alert(a, embed(*lex, text));
        dynamic_docs.push_back({alert_node_id(a.id), oracle::mean_vector(olex, text, dim).v});
        alerts.push_back(a);
    }

    RetrievalConfig cfg;
    cfg.top_k_static = 1 + static_cast<int>(oracle::draw_below(g, 20));
    cfg.top_k_dynamic = 1 + static_cast<int>(oracle::draw_below(g, 10));
    cfg.min_score = std::uniform_real_distribution<double>(-1.0, 0.9)(g);
    cfg.hops = 1;

    for (int q = 0; q < 5; ++q) {
        const auto& a = alerts[oracle::draw_below(g, alerts.size())];
        auto text = alert_text(a);
        auto bundle = retrieve(graph, cfg, a, embed(*lex, text));
        auto qv = oracle::mean_vector(olex, text, dim).v;
        auto exclude = alert_node_id(a.id);
        auto want_s = oracle::rank(static_docs, qv, exclude, cfg.min_score, cfg.top_k_static);
        auto want_d = oracle::rank(dynamic_docs, qv, exclude, cfg.min_score, cfg.top_k_dynamic);
        g_cov.static_hits += want_s.size();
        g_cov.dynamic_hits += want_d.size();
        if (want_s.empty() && want_d.empty()) ++g_cov.empty_rankings;
        auto same = [](const std::vector<RetrievedItem>& got, const std::vector<std::pair<std::string, double>>& want) {
            if (got.size() != want.size()) return false;
            for (std::size_t i = 0; i < got.size(); ++i) {
                if (got[i].node.id != want[i].first || got[i].score != want[i].second) return false;
            }
            return true;
        };
        if (!same(bundle.static_items, want_s) || !same(bundle.dynamic_items, want_d)) {
            c.expect(false, "retrieval seed " + std::to_string(seed) + " differs at query " + std::to_string(q));
            return;
        }
    }
}

void oracle_equivalence(Check& c) {
    const int instances = 60;
    for (int s = 0; s < instances; ++s) dedup_instance(c, 1000 + static_cast<std::uint64_t>(s));
    for (int s = 0; s < instances; ++s) knn_instance(c, 2000 + static_cast<std::uint64_t>(s));

    auto lex = std::make_shared<const Lexicon>(load_lexicon(kData / "lexicon.txt"));
    auto olex = oracle::read_lexicon((kData / "lexicon.txt").string());
    auto vocab = lex->tokens();
    for (int s = 0; s < instances; ++s) retrieval_instance(c, 3000 + static_cast<std::uint64_t>(s), lex, olex, vocab);

    std::ostringstream cov;
    cov << "dedup " << g_cov.admitted << "/" << g_cov.duplicate << "/" << g_cov.rejected << "/" << g_cov.zero
        << " knn " << g_cov.suspicious << "/" << g_cov.benign << " retrieval " << g_cov.static_hits << "/"
        << g_cov.dynamic_hits << "/" << g_cov.empty_rankings << " largest " << g_cov.largest;
    c.expect(g_cov.admitted > 0 && g_cov.duplicate > 0 && g_cov.rejected > 0 && g_cov.zero > 0,
             "dedup instances miss an outcome: " + cov.str());
    c.expect(g_cov.suspicious > 0 && g_cov.benign > 0, "kNN instances miss a label: " + cov.str());
    c.expect(g_cov.static_hits > 0 && g_cov.dynamic_hits > 0 && g_cov.empty_rankings > 0,
             "retrieval instances miss a case: " + cov.str());
    c.expect(g_cov.largest >= 1500, "no large instance: " + cov.str());
    std::cout << "      coverage: " << cov.str() << "\n";
}

// ------------------------------------------------------------------ replay

std::vector<std::string> stage_lines(const std::vector<PipelineEvent>& events) {
    std::vector<std::string> order;
    std::map<std::string, std::string> lines;
    for (const auto& e : events) {
        auto [it, fresh] = lines.try_emplace(e.alert_id, e.alert_id + ":");
        if (fresh) {
            order.push_back(e.alert_id);
        } else {
            it->second += ",";
        }
        it->second += std::string(to_string(e.stage));
    }
    std::vector<std::string> out;
    for (const auto& id : order) out.push_back(lines[id]);
    return out;
}

void e2e_replay(Check& c) {
    auto golden = read_json(kGoldens / "demo_replay.json");
    auto want_stages = golden.at("stages").get<std::vector<std::string>>();
    auto config = load_config(kData / "demo/config.json");
    auto alerts = kData / "corpora/demo/alerts.ndjson";

    for (int run = 0; run < 3; ++run) {
        auto pipeline = make_pipeline(config);
        auto report = pipeline->replay(alerts, 0.0);
        std::string tag = "run " + std::to_string(run) + ": ";
        c.expect(report.conserved(), tag + "conservation");
        c.expect(report.ingested == golden.at("ingested").get<std::size_t>(), tag + "ingested");
        c.expect(report.duplicates == golden.at("duplicates").get<std::size_t>(), tag + "duplicates");
        c.expect(report.benign == golden.at("benign").get<std::size_t>(), tag + "benign");
        c.expect(report.carded == golden.at("carded").get<std::size_t>(), tag + "carded");
        c.expect(report.failed == golden.at("failed").get<std::size_t>(), tag + "failed");
        c.expect(pipeline->options().knn.malicious_weight == golden.at("weight").get<double>(), tag + "weight");
        c.expect(stage_lines(pipeline->events().since(0)) == want_stages, tag + "stage sequence");
    }

    // Approve everything while the backend drops every first attempt.
    auto lexicon = std::make_shared<const Lexicon>(load_lexicon(config.lexicon));
    auto training = make_examples(*lexicon, load_labeled_corpus(config.training_corpus));
    PipelineOptions options;
    options.dedup = config.dedup;
    options.knn = config.knn;
    options.knn.malicious_weight = fit_weight(training);
    options.rag = config.rag;
    options.generation.backoff = std::chrono::milliseconds(1);
    options.cases.retries = 2;
    options.cases.backoff = std::chrono::milliseconds(1);
    auto backend = std::make_shared<FakeCaseBackend>();
    auto provider = std::make_shared<ScriptedProvider>(demo_reply);
    Pipeline pipeline(lexicon, load_static(config.static_graph, lexicon), training, provider, backend, options);
    auto report = pipeline.replay(alerts, 0.0);
    c.expect(report.conserved(), "approval run conservation");

    auto cards = pipeline.cards();
    c.expect(!cards.empty(), "no cards to approve");
    std::set<std::string> ticket_ids;
    for (std::size_t i = 0; i < cards.size(); ++i) {
        backend->fail_next(1, i % 2 == 0 ? FakeCaseBackend::FailureMode::BeforeCommit
                                         : FakeCaseBackend::FailureMode::AfterCommit);
        Decision d;
        d.alert_id = cards[i].alert_id;
        d.verdict = Verdict::Approve;
        d.analyst = "acceptance";
        d.at = now_utc();
        auto ticket = pipeline.submit_decision(d);
        c.expect(ticket.has_value(), "no ticket for " + d.alert_id);
        if (ticket) ticket_ids.insert(ticket->ticket_id);
    }
    auto tickets = backend->tickets();
    c.expect(tickets.size() == cards.size(),
             std::to_string(tickets.size()) + " tickets for " + std::to_string(cards.size()) + " cards");
    c.expect(ticket_ids.size() == cards.size(), "ticket ids not one per card");
    std::set<std::string> ticketed;
    for (const auto& t : tickets) ticketed.insert(t.alert_id);
    c.expect(ticketed.size() == tickets.size(), "an alert was ticketed twice");
}

// ------------------------------------------------------------------ invariants

void invariants(Check& c) {
    auto lex = std::make_shared<const Lexicon>(load_lexicon(kData / "lexicon.txt"));
    auto vocab = lex->tokens();
    std::mt19937_64 g(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> words;
        std::size_t n = 1 + oracle::draw_below(g, 12);
        for (std::size_t i = 0; i < n; ++i) {
            words.push_back(u(g) < 0.1 ? "qqq" : vocab[oracle::draw_below(g, vocab.size())]);
        }
        auto join = [](const std::vector<std::string>& w) {
            std::string s;
            for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
            return s;
        };
        auto a = embed(*lex, join(words));
        std::shuffle(words.begin(), words.end(), g);
        auto b = embed(*lex, join(words));
        bool close = a.values.size() == b.values.size() && a.coverage == b.coverage;
        for (std::size_t i = 0; close && i < a.values.size(); ++i) {
            close = std::abs(a.values[i] - b.values[i]) <= 1e-12;
        }
        c.expect(close, "embedding changed under permutation (trial " + std::to_string(trial) + ")");
        if (!a.is_zero()) {
            auto self = cosine_similarity(a, a);
            c.expect(self && std::abs(*self - 1.0) <= 1e-12, "self-similarity off by more than 1e-12");
        }
    }

    auto graph = load_static(kData / "static_graph.json", lex);
    auto static_before = json::array();
    for (const auto& n : graph.nodes(LayerId::Static)) static_before.push_back(n.id + "|" + node_text(n));
    auto static_edges = std::vector<GraphEdge>(graph.edges(LayerId::Static).begin(),
                                               graph.edges(LayerId::Static).end());
    auto static_index = graph.index(LayerId::Static);

    auto sealed = [&](const std::function<void()>& f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code() == ErrorCode::SealedLayer;
        }
        return false;
    };
    auto first = graph.nodes(LayerId::Static).front();
    c.expect(sealed([&] { graph.add_node(LayerId::Static, GraphNode{"new", NodeKind::Note, "x", "y", {}}); }),
             "static add_node accepted");
    c.expect(sealed([&] { graph.add_edge(LayerId::Static, GraphEdge{first.id, first.id == "x" ? "y" : "x",
                                                                      Relation::RelatesTo}); }),
             "static add_edge accepted");
    auto changed = first;
    changed.description += " edited";
    c.expect(sealed([&] { graph.update_node(changed); }), "static update_node accepted");

    auto demo = read_record_lines(kData / "corpora/demo/alerts.ndjson");
    for (const auto& line : demo) {
        auto a = parse_alert(std::string_view(line));
        if (graph.find_node(alert_node_id(a.id))) continue;
        graph.record_alert(a, embed(*lex, alert_text(a)));
    }

    auto static_after = json::array();
    for (const auto& n : graph.nodes(LayerId::Static)) static_after.push_back(n.id + "|" + node_text(n));
    c.expect(static_after == static_before, "static nodes changed");
    c.expect(std::equal(static_edges.begin(), static_edges.end(), graph.edges(LayerId::Static).begin(),
                        graph.edges(LayerId::Static).end()),
             "static edges changed");
    c.expect(graph.index(LayerId::Static) == static_index, "static index changed");

    for (auto layer : {LayerId::Static, LayerId::Dynamic}) {
        std::set<std::string> ids;
        for (const auto& n : graph.nodes(layer)) {
            ids.insert(n.id);
            bool indexed = graph.index(layer).count(n.id) > 0;
            if (n.kind == NodeKind::AlertEvent) continue;
            auto e = embed(*lex, node_text(n));
            c.expect(indexed == !e.is_zero(), "index membership wrong for " + n.id);
            if (indexed) c.expect(graph.index(layer).at(n.id) == e, "stale index entry for " + n.id);
        }
        for (const auto& [id, vec] : graph.index(layer)) {
            c.expect(ids.count(id) == 1, "index entry without node: " + id);
        }
        for (const auto& e : graph.edges(layer)) {
            c.expect(graph.find_node(e.src) && graph.find_node(e.dst), "dangling edge " + e.src + "->" + e.dst);
        }
    }

    std::vector<std::string> all;
    for (auto layer : {LayerId::Static, LayerId::Dynamic}) {
        for (const auto& n : graph.nodes(layer)) all.push_back(n.id);
    }
    for (const auto& id : all) {
        std::set<std::string> prev;
        for (int h = 0; h <= 4; ++h) {
            auto sub = graph.neighborhood(id, h);
            std::set<std::string> cur;
            for (const auto& n : sub.nodes) cur.insert(n.id);
            c.expect(cur.count(id) == 1, "neighbourhood misses its centre " + id);
            c.expect(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()),
                     "neighbourhood of " + id + " shrinks at " + std::to_string(h) + " hops");
            prev = std::move(cur);
        }
    }
}

} // namespace

int main() {
    criterion("dedup table: after-dedup count per priority equals the distinct count", 30, table1);
    criterion("classifier weights: recall non-decreasing over 1/5/10, metrics equal oracle goldens", 120, table2);
    criterion("f1 arithmetic: four precision/recall pairs within 5e-5", 1, f1_arithmetic);
    criterion("oracle equivalence: dedup, kNN and retrieval on 60 seeded instances each", 180,
              oracle_equivalence);
    criterion("end-to-end demo replay: golden stages, conservation, one ticket per approved card", 60,
              e2e_replay);
    criterion("embedding and graph invariants", 60, invariants);
    std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << "\n";
    return g_failed == 0 ? 0 : 1;
}
