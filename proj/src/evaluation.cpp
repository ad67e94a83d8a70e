#include "cyberally/evaluation.hpp"

#include "cyberally/error.hpp"
#include "cyberally/hashing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace cyberally {

using nlohmann::json;

namespace {

const std::vector<std::string> kDefaultAgents{"web-01", "db-01", "hmi-01", "plc-gw-01", "mail-01"};
constexpr int kMaxAttempts = 2000;

Timestamp default_start() { return *parse_iso8601("2024-03-11T08:00:00Z"); }

void invalid(const std::string& message) { throw Error(ErrorCode::InvalidConfig, message); }

struct TypeDraft {
    int priority = 0;
    TriageLabel label = TriageLabel::Benign;
    std::string title;
    std::string full_log;
    std::string agent;
    std::string rule_id;
    std::size_t occurrences = 1;
};

struct Placed {
    Timestamp ts;
    std::size_t type;
    std::size_t occurrence;
};

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

} // namespace

std::size_t CorpusSpec::total_distinct() const {
    std::size_t n = 0;
    for (const auto& [p, d] : per_priority_distinct) n += d;
    return n;
}

std::size_t CorpusSpec::total_alerts() const {
    std::size_t n = 0;
    for (const auto& [p, t] : per_priority_total) n += t;
    return n;
}

void CorpusSpec::validate() const {
    if (per_priority_distinct.size() != per_priority_total.size()) {
        invalid("every priority needs both a total and a distinct count");
    }
    for (const auto& [priority, distinct] : per_priority_distinct) {
        if (priority < kMinPriority || priority > kMaxPriority) {
            invalid("priority out of range: " + std::to_string(priority));
        }
        auto total = per_priority_total.find(priority);
        if (total == per_priority_total.end()) {
            invalid("no total for priority " + std::to_string(priority));
        }
        if (total->second < distinct) {
            throw Error(ErrorCode::UnsatisfiableSpec,
                        "priority " + std::to_string(priority) + ": total below distinct");
        }
        if (distinct == 0 && total->second > 0) {
            throw Error(ErrorCode::UnsatisfiableSpec,
                        "priority " + std::to_string(priority) + ": duplicates without a distinct type");
        }
    }
    if (suspicious_types) {
        if (*suspicious_types > total_distinct()) {
            invalid("suspicious_types exceeds the number of distinct types");
        }
    } else if (!(malicious_fraction > 0.0 && malicious_fraction < 1.0)) {
        invalid("malicious_fraction must be in (0, 1)");
    }
    if (!(threshold > 0.0 && threshold <= 1.0)) invalid("threshold must be in (0, 1]");
    if (window < Duration::zero()) invalid("window must be non-negative");
    if (duration < Duration::zero()) invalid("duration must be non-negative");
    if (tokens_per_alert < 1) invalid("tokens_per_alert must be >= 1");
    if (title_tokens < 1 || title_tokens > tokens_per_alert) {
        invalid("title_tokens must be in [1, tokens_per_alert]");
    }
    if (!(class_affinity >= 0.0 && class_affinity <= 1.0)) invalid("class_affinity must be in [0, 1]");
}

CorpusSpec parse_corpus_spec(const json& doc) {
    static const std::set<std::string> known{
        "seed", "priorities", "malicious_fraction", "suspicious_types", "duration_minutes", "start",
        "threshold", "window_minutes", "tokens_per_alert", "title_tokens", "agents",
        "benign_vocabulary", "suspicious_vocabulary", "class_affinity"};
    if (!doc.is_object()) invalid("corpus spec must be an object");
    for (const auto& [key, value] : doc.items()) {
        if (!known.contains(key)) invalid("unknown corpus spec key: " + key);
    }
    CorpusSpec spec;
    spec.start = default_start();
    try {
        spec.seed = doc.value("seed", spec.seed);
        for (const auto& [key, row] : doc.at("priorities").items()) {
            int priority = std::stoi(key);
            spec.per_priority_total[priority] = row.at("total").get<std::size_t>();
            spec.per_priority_distinct[priority] = row.at("distinct").get<std::size_t>();
        }
        spec.malicious_fraction = doc.value("malicious_fraction", spec.malicious_fraction);
        if (doc.contains("suspicious_types")) {
            spec.suspicious_types = doc.at("suspicious_types").get<std::size_t>();
        }
        if (doc.contains("duration_minutes")) {
            spec.duration = minutes(doc.at("duration_minutes").get<long long>());
        }
        if (doc.contains("window_minutes")) {
            spec.window = minutes(doc.at("window_minutes").get<long long>());
        }
        if (doc.contains("start")) {
            auto ts = parse_iso8601(doc.at("start").get<std::string>());
            if (!ts) invalid("bad start timestamp");
            spec.start = *ts;
        }
        spec.threshold = doc.value("threshold", spec.threshold);
        spec.tokens_per_alert = doc.value("tokens_per_alert", spec.tokens_per_alert);
        spec.title_tokens = doc.value("title_tokens", std::min(spec.title_tokens, spec.tokens_per_alert));
        spec.agents = doc.value("agents", spec.agents);
        spec.benign_vocabulary = doc.value("benign_vocabulary", spec.benign_vocabulary);
        spec.suspicious_vocabulary = doc.value("suspicious_vocabulary", spec.suspicious_vocabulary);
        spec.class_affinity = doc.value("class_affinity", spec.class_affinity);
    } catch (const json::exception& e) {
        invalid(std::string("corpus spec: ") + e.what());
    } catch (const std::invalid_argument&) {
        invalid("priority keys must be integers");
    }
    spec.validate();
    return spec;
}

CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        invalid(path.string() + ": " + e.what());
    }
    return parse_corpus_spec(doc);
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec, const Lexicon& lexicon) {
    spec.validate();
    DeterministicRng rng(spec.seed);

    std::vector<std::string> benign_pool = spec.benign_vocabulary;
    std::vector<std::string> suspicious_pool = spec.suspicious_vocabulary;
    if (benign_pool.empty() && suspicious_pool.empty()) {
        auto tokens = lexicon.tokens();
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            (i % 2 == 0 ? benign_pool : suspicious_pool).push_back(tokens[i]);
        }
    }
    for (const auto* pool : {&benign_pool, &suspicious_pool}) {
        for (const auto& token : *pool) {
            if (!lexicon.find(token)) invalid("vocabulary token not in lexicon: " + token);
        }
    }
    if (benign_pool.empty() && suspicious_pool.empty()) {
        throw Error(ErrorCode::UnsatisfiableSpec, "no vocabulary to draw from");
    }
    const auto& agents = spec.agents.empty() ? kDefaultAgents : spec.agents;

    const std::size_t distinct = spec.total_distinct();
    std::size_t n_suspicious = spec.suspicious_types.value_or(static_cast<std::size_t>(
        std::llround(spec.malicious_fraction * static_cast<double>(distinct))));
    std::vector<std::size_t> order(distinct);
    for (std::size_t i = 0; i < distinct; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<TriageLabel> type_label(distinct, TriageLabel::Benign);
    for (std::size_t i = 0; i < n_suspicious; ++i) type_label[order[i]] = TriageLabel::Suspicious;

    // Texts, rejection-sampled for separation from every earlier type.
    std::vector<TypeDraft> types;
    types.reserve(distinct);
    std::vector<std::vector<double>> accepted;
    std::vector<double> accepted_norms;
    for (const auto& [priority, count] : spec.per_priority_distinct) {
        for (std::size_t i = 0; i < count; ++i) {
            TypeDraft draft;
            draft.priority = priority;
            draft.label = type_label[types.size()];
            const auto& own = draft.label == TriageLabel::Suspicious ? suspicious_pool : benign_pool;
            const auto& other = draft.label == TriageLabel::Suspicious ? benign_pool : suspicious_pool;

            bool placed = false;
            for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
                std::vector<std::string> words;
                for (std::size_t w = 0; w < spec.tokens_per_alert; ++w) {
                    bool use_own = other.empty() || (!own.empty() && rng.unit() < spec.class_affinity);
                    const auto& pool = use_own ? own : other;
                    words.push_back(pool[rng.index(pool.size())]);
                }
                std::string title, full_log;
                for (std::size_t w = 0; w < words.size(); ++w) {
                    auto& target = w < spec.title_tokens ? title : full_log;
                    if (!target.empty()) target += ' ';
                    target += words[w];
                }
                Alert probe{"", {}, priority, "", title, full_log, ""};
                auto vec = embed(lexicon, alert_text(probe));
                double vec_norm = norm(vec.values);
                if (vec.is_zero() || vec_norm == 0.0) continue;
                bool separated = true;
                for (std::size_t j = 0; j < accepted.size() && separated; ++j) {
                    separated = cosine_with_norms(vec.values, vec_norm, accepted[j], accepted_norms[j]) <
                                spec.threshold;
                }
                if (!separated) continue;
                accepted.push_back(std::move(vec.values));
                accepted_norms.push_back(vec_norm);
                draft.title = std::move(title);
                draft.full_log = std::move(full_log);
                placed = true;
            }
            if (!placed) {
                throw Error(ErrorCode::UnsatisfiableSpec,
                            "could not separate type " + std::to_string(types.size()) + " from earlier types");
            }
            draft.agent = agents[rng.index(agents.size())];
            draft.rule_id = std::to_string(100000 + types.size());
            types.push_back(std::move(draft));
        }
    }

    // Spread each priority's duplicates over its types.
    std::size_t first = 0;
    for (const auto& [priority, count] : spec.per_priority_distinct) {
        std::size_t extra = spec.per_priority_total.at(priority) - count;
        for (std::size_t i = 0; i < extra; ++i) {
            types[first + rng.index(count)].occurrences += 1;
        }
        first += count;
    }

    const long long span = static_cast<long long>(spec.duration.count());
    const long long reach = std::min<long long>(spec.window.count(), span);
    std::vector<Placed> placements;
    placements.reserve(spec.total_alerts());
    for (std::size_t t = 0; t < types.size(); ++t) {
        const auto& type = types[t];
        if (type.occurrences == 1) {
            placements.push_back({spec.start + Duration(rng.index(span + 1)), t, 0});
            continue;
        }
        if (reach < 1) {
            throw Error(ErrorCode::UnsatisfiableSpec,
                        "duplicates need a window and duration of at least 1 ms");
        }
        Timestamp rep = spec.start + Duration(rng.index(span - reach + 1));
        placements.push_back({rep, t, 0});
        for (std::size_t k = 1; k < type.occurrences; ++k) {
            placements.push_back({rep + Duration(1 + rng.index(reach)), t, k});
        }
    }
    std::sort(placements.begin(), placements.end(), [](const Placed& a, const Placed& b) {
        return std::tie(a.ts, a.type, a.occurrence) < std::tie(b.ts, b.type, b.occurrence);
    });

    GeneratedCorpus corpus;
    corpus.distinct_types = distinct;
    corpus.suspicious_types = n_suspicious;
    corpus.alerts.reserve(placements.size());
    corpus.labels.reserve(placements.size());
    char id[32];
    for (std::size_t i = 0; i < placements.size(); ++i) {
        const auto& p = placements[i];
        const auto& type = types[p.type];
        std::snprintf(id, sizeof id, "evt-%06zu", i + 1);
        corpus.alerts.push_back({id, p.ts, type.priority, type.rule_id, type.title, type.full_log, type.agent});
        corpus.labels.push_back(type.label);
    }
    return corpus;
}

void write_corpus(const GeneratedCorpus& corpus, const CorpusSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream alerts(dir / "alerts.ndjson", std::ios::binary | std::ios::trunc);
    std::ofstream labeled(dir / "labeled.ndjson", std::ios::binary | std::ios::trunc);
    if (!alerts || !labeled) throw Error(ErrorCode::IoError, "cannot write corpus under " + dir.string());
    for (std::size_t i = 0; i < corpus.alerts.size(); ++i) {
        alerts << to_wire(corpus.alerts[i]) << '\n';
        labeled << to_json(corpus.alerts[i], corpus.labels[i]).dump() << '\n';
    }
    json priorities = json::object();
    for (const auto& [priority, distinct] : spec.per_priority_distinct) {
        priorities[std::to_string(priority)] = {{"total", spec.per_priority_total.at(priority)},
                                                {"distinct", distinct}};
    }
    json manifest = {{"seed", spec.seed},
                     {"alerts", corpus.alerts.size()},
                     {"distinct_types", corpus.distinct_types},
                     {"suspicious_types", corpus.suspicious_types},
                     {"priorities", priorities}};
    std::ofstream(dir / "manifest.json", std::ios::binary | std::ios::trunc) << manifest.dump(2) << '\n';
}

std::vector<Alert> load_alerts(const std::filesystem::path& path) {
    std::vector<Alert> out;
    for (const auto& line : read_record_lines(path)) {
        out.push_back(parse_alert(std::string_view(line)));
    }
    return out;
}

DedupRow DedupTable::totals() const {
    DedupRow sum;
    for (const auto& [p, row] : rows) {
        sum.total += row.total;
        sum.after_dedup += row.after_dedup;
    }
    return sum;
}

DedupTable run_dedup_eval(std::span<const Alert> alerts, const Lexicon& lexicon, const DedupConfig& config) {
    DedupFilter filter(config);
    DedupTable table;
    for (const auto& alert : alerts) {
        auto& row = table.rows[alert.priority];
        row.total += 1;
        try {
            if (!filter.check_and_admit(alert, embed(lexicon, alert_text(alert))).is_duplicate) {
                row.after_dedup += 1;
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::OutOfOrderTimestamp) throw;
            table.skipped_out_of_order += 1;
        }
    }
    return table;
}

std::vector<WeightedMetrics> run_classifier_eval(std::span<const std::pair<Alert, TriageLabel>> corpus,
                                                 const Lexicon& lexicon, const KnnConfig& base,
                                                 const std::vector<double>& weights, int folds,
                                                 std::uint64_t seed) {
    auto examples = make_examples(lexicon, corpus);
    std::vector<WeightedMetrics> out;
    for (double w : weights) {
        KnnConfig cfg = base;
        cfg.malicious_weight = w;
        cfg.validate();
        out.push_back({w, evaluate_cv(examples, cfg, folds, seed)});
    }
    return out;
}

std::string format_dedup_table(const DedupTable& table) {
    std::string out = "Priority  Total  After dedup\n";
    auto line = [&](const std::string& label, const DedupRow& row) {
        out += pad(label, 8) + "  " + pad(std::to_string(row.total), 5) + "  " +
               pad(std::to_string(row.after_dedup), 11) + "\n";
    };
    for (const auto& [priority, row] : table.rows) line(std::to_string(priority), row);
    line("Total", table.totals());
    return out;
}

std::string format_classifier_table(const std::vector<WeightedMetrics>& columns) {
    std::string out = pad("", 9);
    for (const auto& c : columns) {
        char head[32];
        std::snprintf(head, sizeof head, "%gx", c.weight);
        out += "  " + pad(head, 6);
    }
    out += "\n";
    auto row = [&](const char* name, auto pick) {
        out += std::string(name) + std::string(9 - std::string(name).size(), ' ');
        for (const auto& c : columns) out += "  " + pad(fixed4(pick(c.metrics)), 6);
        out += "\n";
    };
    row("Precision", [](const Metrics& m) { return m.precision; });
    row("Recall", [](const Metrics& m) { return m.recall; });
    row("F1", [](const Metrics& m) { return m.f1; });
    return out;
}

json to_json(const DedupTable& table) {
    json rows = json::array();
    for (const auto& [priority, row] : table.rows) {
        rows.push_back({{"priority", priority}, {"total", row.total}, {"after_dedup", row.after_dedup}});
    }
    auto sum = table.totals();
    return {{"rows", rows},
            {"total", sum.total},
            {"after_dedup", sum.after_dedup},
            {"skipped_out_of_order", table.skipped_out_of_order}};
}

json to_json(const std::vector<WeightedMetrics>& columns) {
    json out = json::array();
    for (const auto& c : columns) {
        const auto& m = c.metrics;
        out.push_back({{"weight", c.weight}, {"precision", m.precision}, {"recall", m.recall},
                       {"f1", m.f1}, {"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}});
    }
    return out;
}

} // namespace cyberally
