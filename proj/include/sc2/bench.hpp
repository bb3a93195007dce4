#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sc2/core.hpp"
#include "sc2/predict.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"

namespace sc2 {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::string name;
    TaskKind kind;
    std::filesystem::path path;
    std::optional<long> expected_count;
};

/// Load a dataset of JSONL lines {"id","query","left","right","gold"?}.
inline std::vector<TextPairTask> load_dataset(const DatasetSpec& spec) {
    std::ifstream in(spec.path);
    if (!in) throw ConfigError("cannot open dataset: " + spec.path.string());
    std::vector<TextPairTask> tasks;
    std::vector<std::string> seen_ids;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        TextPairTask task;
        task.kind = spec.kind;
        try {
            task.id = j.at("id").get<std::string>();
            task.query = j.at("query").get<std::string>();
            task.left = j.at("left").get<std::string>();
            task.right = j.at("right").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("missing or mistyped field: ") + e.what(), line_no);
        }
        if (j.contains("gold") && !j.at("gold").is_null()) {
            std::string g = j.at("gold").get<std::string>();
            if (g != "A" && g != "B") throw FormatError("gold must be \"A\" or \"B\"", line_no);
            task.gold = label_from_letter(g[0]);
        }
        if (task.left.empty() || task.right.empty())
            throw FormatError("candidate texts must be non-empty", line_no);
        for (const std::string& id : seen_ids) {
            if (id == task.id) throw DuplicateIdError("duplicate task id '" + task.id + "'");
        }
        seen_ids.push_back(task.id);
        tasks.push_back(std::move(task));
    }
    if (spec.expected_count && *spec.expected_count != static_cast<long>(tasks.size()))
        throw ConfigError("dataset " + spec.path.string() + ": expected " +
                          std::to_string(*spec.expected_count) + " tasks, loaded " +
                          std::to_string(tasks.size()));
    return tasks;
}

/// Uniform sample of n tasks without replacement, stable for a fixed seed.
inline std::vector<TextPairTask> sample_dataset(const std::vector<TextPairTask>& tasks, size_t n,
                                                const DeterminismContext& ctx) {
    if (n < 1 || n > tasks.size())
        throw ValidationError("sample size " + std::to_string(n) + " out of range [1, " +
                              std::to_string(tasks.size()) + "]");
    std::vector<size_t> idx(tasks.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    RandomStream stream = ctx.stream("dataset-sample");
    stream.shuffle(idx);
    std::vector<TextPairTask> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(tasks[idx[i]]);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class AspectSource { None, Online, Offline, Manual };

inline const char* to_string(AspectSource s) {
    switch (s) {
        case AspectSource::None: return "none";
        case AspectSource::Online: return "online";
        case AspectSource::Offline: return "offline";
        case AspectSource::Manual: return "manual";
    }
    return "unknown";
}

inline AspectSource aspect_source_from_string(std::string_view s) {
    std::string v = text::lower_ascii(text::trim(s));
    if (v == "none") return AspectSource::None;
    if (v == "online") return AspectSource::Online;
    if (v == "offline") return AspectSource::Offline;
    if (v == "manual") return AspectSource::Manual;
    throw ConfigError("unknown aspect source: " + std::string(s));
}

struct EvalConfig {
    MethodTag method;
    AspectSource aspect_source = AspectSource::None;
    std::filesystem::path aspect_file;        // Offline source
    std::vector<std::string> manual_aspects;  // Manual source
    int online_aspect_samples = 8;
    std::vector<FewshotExample> fewshot;
    int rounds = 1;
    uint64_t seed = 0;
    std::optional<size_t> sample_n;
    int parallelism = 1;

    void validate() const {
        method.validate();
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
        if (online_aspect_samples < 1) throw ConfigError("online_aspect_samples must be >= 1");
        if (method.needs_aspects() && aspect_source == AspectSource::None)
            throw ConfigError(std::string(to_string(method.method)) +
                              " needs an aspect source other than 'none'");
        if (aspect_source == AspectSource::Manual && manual_aspects.empty())
            throw ConfigError("manual aspect source needs a non-empty aspect list");
        if (aspect_source == AspectSource::Offline && aspect_file.empty())
            throw ConfigError("offline aspect source needs an aspect file");
        if (method.method == Method::CoT1 && fewshot.empty())
            throw ConfigError("CoT1 needs one few-shot exemplar");
        if (method.method == Method::SC2 &&
            static_cast<int>(fewshot.size()) < method.fewshot_k())
            throw ConfigError("SC2 with fewshot_k=" + std::to_string(method.fewshot_k()) +
                              " needs that many exemplars");
    }

    /// Echo of everything that shapes the results. Parallelism is left out:
    /// it is an execution detail and must not change a single output byte.
    nlohmann::json to_json() const {
        return nlohmann::json{{"method", method.to_json()},
                              {"aspect_source", to_string(aspect_source)},
                              {"rounds", rounds},
                              {"seed", seed},
                              {"sample_n", sample_n ? nlohmann::json(*sample_n) : nlohmann::json(nullptr)}};
    }
};

struct EvalReport {
    std::vector<std::optional<double>> round_accuracy;
    std::optional<double> mean_accuracy;
    std::vector<PredictionRecord> records;
    UsageSnapshot usage;  // sum of per-item deltas
    nlohmann::json config_echo;
    double wall_clock_sec = 0.0;  // informational; kept out of the canonical JSON

    /// Canonical, deterministic report: fixed (dataset, config, seed, mock
    /// script) reproduces these bytes exactly, so timing stays out of it.
    nlohmann::json to_json() const {
        nlohmann::json rounds = nlohmann::json::array();
        for (const auto& a : round_accuracy)
            rounds.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
        nlohmann::json recs = nlohmann::json::array();
        for (const PredictionRecord& r : records) recs.push_back(r.to_json());
        return nlohmann::json{
            {"schema", "report_v1"},
            {"config", config_echo},
            {"round_accuracy", rounds},
            {"mean_accuracy", mean_accuracy ? nlohmann::json(*mean_accuracy) : nlohmann::json(nullptr)},
            {"usage", usage_to_json(usage)},
            {"records", recs},
        };
    }
};

/// Share of records whose prediction matches gold. Failed items count as
/// incorrect; records without gold are an error.
inline double accuracy(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ValidationError("accuracy: no records");
    long correct = 0;
    for (const PredictionRecord& r : records) {
        if (!r.gold) throw ValidationError("accuracy: record '" + r.task_id + "' has no gold label");
        if (r.correct()) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

namespace detail {

inline std::optional<AspectSet> resolve_static_aspects(const EvalConfig& cfg) {
    switch (cfg.aspect_source) {
        case AspectSource::Manual:
            return AspectSet::make(cfg.manual_aspects, AspectProvenance::Manual);
        case AspectSource::Offline:
            return load_aspect_file(cfg.aspect_file).aspects;
        default:
            return std::nullopt;
    }
}

} // namespace detail

/// Run cfg.rounds independent rounds over the tasks. Round r draws its seeds
/// from (cfg.seed, r), so adding rounds never perturbs earlier ones. Items
/// run in parallel up to cfg.parallelism; per-item failures are recorded,
/// not fatal.
inline EvalReport evaluate(Provider& provider, const PromptCatalog& catalog,
                           const std::vector<TextPairTask>& all_tasks, const EvalConfig& cfg) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    DeterminismContext root(cfg.seed);

    std::vector<TextPairTask> tasks =
        cfg.sample_n ? sample_dataset(all_tasks, *cfg.sample_n, root) : all_tasks;
    if (tasks.empty()) throw ConfigError("evaluate: no tasks to run");

    std::optional<AspectSet> static_aspects = detail::resolve_static_aspects(cfg);

    EvalReport report;
    report.config_echo = cfg.to_json();

    for (int round = 0; round < cfg.rounds; ++round) {
        DeterminismContext round_ctx = root.child("round", static_cast<uint64_t>(round));
        std::vector<PredictionRecord> round_records(tasks.size());

        std::atomic<size_t> cursor{0};
        auto worker = [&]() {
            while (true) {
                size_t i = cursor.fetch_add(1);
                if (i >= tasks.size()) break;
                const TextPairTask& task = tasks[i];
                PredictContext pc{provider, catalog, round_ctx, round};
                std::optional<AspectSet> aspects = static_aspects;
                RoleUsage aspect_usage;
                PredictionRecord rec;
                if (cfg.aspect_source == AspectSource::Online && cfg.method.needs_aspects()) {
                    try {
                        OnlineAspectResult online = propose_aspects_online(
                            provider, catalog, task, cfg.online_aspect_samples, round_ctx);
                        aspects = online.aspects;
                        aspect_usage = online.usage;
                    } catch (const Error& e) {
                        rec = detail::new_record(pc, task, cfg.method);
                        rec.error = std::string("aspect model failed: ") + e.what();
                        round_records[i] = std::move(rec);
                        continue;
                    }
                }
                rec = predict_item(pc, task, cfg.method, aspects, cfg.fewshot);
                rec.usage[Role::Aspect] += aspect_usage;
                round_records[i] = std::move(rec);
            }
        };
        size_t thread_count = std::min<size_t>(static_cast<size_t>(cfg.parallelism), tasks.size());
        if (thread_count <= 1) {
            worker();
        } else {
            std::vector<std::thread> threads;
            for (size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
            for (std::thread& t : threads) t.join();
        }

        bool all_gold = true;
        for (const PredictionRecord& r : round_records) {
            if (!r.gold) all_gold = false;
        }
        report.round_accuracy.push_back(all_gold ? std::optional<double>(accuracy(round_records))
                                                 : std::nullopt);
        for (PredictionRecord& r : round_records) {
            report.usage += r.usage;
            report.records.push_back(std::move(r));
        }
    }

    bool have_all = !report.round_accuracy.empty();
    double sum = 0.0;
    for (const auto& a : report.round_accuracy) {
        if (!a) have_all = false;
        else sum += *a;
    }
    if (have_all) report.mean_accuracy = sum / static_cast<double>(report.round_accuracy.size());

    report.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Cost reporting
// ---------------------------------------------------------------------------

struct CostRow {
    std::string label;
    long items = 0;
    double aspect_calls_per_item = 0.0;
    double comparison_calls_per_item = 0.0;
    double comparator_calls_per_item = 0.0;
    double preference_calls_per_item = 0.0;
    long total_calls = 0;
    long decoded_tokens = 0;
    std::optional<double> accuracy;
};

struct CostReport {
    std::vector<CostRow> rows;

    std::string to_csv() const {
        std::string out =
            "label,items,aspect_calls_per_item,comparison_calls_per_item,"
            "comparator_calls_per_item,preference_calls_per_item,total_calls,"
            "decoded_tokens,accuracy\n";
        char buf[256];
        for (const CostRow& r : rows) {
            std::snprintf(buf, sizeof(buf), "%s,%ld,%.4f,%.4f,%.4f,%.4f,%ld,%ld,", r.label.c_str(),
                          r.items, r.aspect_calls_per_item, r.comparison_calls_per_item,
                          r.comparator_calls_per_item, r.preference_calls_per_item, r.total_calls,
                          r.decoded_tokens);
            out += buf;
            if (r.accuracy) {
                std::snprintf(buf, sizeof(buf), "%.6f", *r.accuracy);
                out += buf;
            }
            out += '\n';
        }
        return out;
    }
};

inline CostRow cost_row(const std::string& label, const EvalReport& report) {
    CostRow row;
    row.label = label;
    row.items = static_cast<long>(report.records.size());
    if (row.items > 0) {
        double n = static_cast<double>(row.items);
        row.aspect_calls_per_item = static_cast<double>(report.usage[Role::Aspect].calls) / n;
        row.comparison_calls_per_item =
            static_cast<double>(report.usage[Role::Comparison].calls) / n;
        row.comparator_calls_per_item =
            static_cast<double>(report.usage[Role::Comparator].calls) / n;
        row.preference_calls_per_item =
            static_cast<double>(report.usage[Role::Preference].calls) / n;
    }
    row.total_calls = report.usage.total().calls;
    row.decoded_tokens = report.usage.total().decoded_tokens;
    row.accuracy = report.mean_accuracy;
    return row;
}

inline CostReport cost_report(const std::vector<std::pair<std::string, const EvalReport*>>& runs) {
    CostReport table;
    for (const auto& [label, report] : runs) table.rows.push_back(cost_row(label, *report));
    return table;
}

// ---------------------------------------------------------------------------
// |C| sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    int c = 0;
    std::optional<double> accuracy_mean;
    long comparator_calls = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::vector<EvalReport> reports;

    std::string to_csv() const {
        std::string out = "c,accuracy_mean,comparator_calls\n";
        char buf[128];
        for (const SweepRow& r : rows) {
            out += std::to_string(r.c);
            out += ',';
            if (r.accuracy_mean) {
                std::snprintf(buf, sizeof(buf), "%.6f", *r.accuracy_mean);
                out += buf;
            }
            out += ',';
            out += std::to_string(r.comparator_calls);
            out += '\n';
        }
        return out;
    }
};

using ProviderFactory = std::function<std::unique_ptr<Provider>()>;

/// One evaluation per |C| value with a shared seed. Each cell gets a fresh
/// provider so scripted mocks start from a full queue.
inline SweepReport sweep_c(const ProviderFactory& make_provider, const PromptCatalog& catalog,
                           const std::vector<TextPairTask>& tasks, const EvalConfig& base_cfg,
                           const std::vector<int>& values) {
    if (values.empty()) throw ConfigError("sweep: no |C| values given");
    if (base_cfg.method.method != Method::SC2)
        throw ConfigError("sweep: base method must be SC2");
    for (int v : values) {
        if (v < 1) throw ConfigError("sweep: |C| values must be >= 1");
    }
    SweepReport sweep;
    for (int v : values) {
        EvalConfig cfg = base_cfg;
        cfg.method.sample_count_opt = v;
        std::unique_ptr<Provider> provider = make_provider();
        EvalReport report = evaluate(*provider, catalog, tasks, cfg);
        SweepRow row;
        row.c = v;
        row.accuracy_mean = report.mean_accuracy;
        row.comparator_calls = report.usage[Role::Comparator].calls;
        sweep.rows.push_back(row);
        sweep.reports.push_back(std::move(report));
    }
    return sweep;
}

// ---------------------------------------------------------------------------
// Raw-dataset adapters
// ---------------------------------------------------------------------------

namespace adapters {

struct ConvertStats {
    long written = 0;
    long dropped_ties = 0;
};

namespace detail {

inline nlohmann::json parse_line(const std::string& line, long line_no) {
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
}

inline void write_row(std::ofstream& out, const std::string& id, const std::string& query,
                      const std::string& left, const std::string& right, PreferenceLabel gold) {
    nlohmann::json j{{"id", id},
                     {"query", query},
                     {"left", left},
                     {"right", right},
                     {"gold", std::string(1, to_side_letter(gold))}};
    out << j.dump() << '\n';
}

} // namespace detail

/// Query-document triplets with graded relevance: the higher-scored document
/// becomes the preferred side. Score ties cannot be labeled and are dropped
/// (counted).
inline ConvertStats convert_trec(const std::filesystem::path& input,
                                 const std::filesystem::path& output) {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot open input: " + input.string());
    std::ofstream out(output, std::ios::trunc);
    if (!out) throw ConfigError("cannot write output: " + output.string());
    ConvertStats stats;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j = detail::parse_line(line, line_no);
        double rel_a = j.at("relA").get<double>();
        double rel_b = j.at("relB").get<double>();
        if (rel_a == rel_b) {
            ++stats.dropped_ties;
            continue;
        }
        std::string id = j.contains("id") ? j.at("id").get<std::string>()
                                          : "trec-" + std::to_string(line_no);
        detail::write_row(out, id, j.at("query").get<std::string>(),
                          j.at("docA").get<std::string>(), j.at("docB").get<std::string>(),
                          rel_a > rel_b ? PreferenceLabel::Left : PreferenceLabel::Right);
        ++stats.written;
    }
    return stats;
}

/// Articles with two graded summaries: the higher overall score wins;
/// score-tied pairs are dropped and counted.
inline ConvertStats convert_tldr(const std::filesystem::path& input,
                                 const std::filesystem::path& output) {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot open input: " + input.string());
    std::ofstream out(output, std::ios::trunc);
    if (!out) throw ConfigError("cannot write output: " + output.string());
    ConvertStats stats;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j = detail::parse_line(line, line_no);
        double score_a = j.at("scoreA").get<double>();
        double score_b = j.at("scoreB").get<double>();
        if (score_a == score_b) {
            ++stats.dropped_ties;
            continue;
        }
        std::string id = j.contains("id") ? j.at("id").get<std::string>()
                                          : "tldr-" + std::to_string(line_no);
        detail::write_row(out, id, j.at("article").get<std::string>(),
                          j.at("summaryA").get<std::string>(), j.at("summaryB").get<std::string>(),
                          score_a > score_b ? PreferenceLabel::Left : PreferenceLabel::Right);
        ++stats.written;
    }
    return stats;
}

/// Chosen/rejected dialogue pairs: the chosen response is assigned a side by
/// a seeded coin per line so the gold labels are balanced.
inline ConvertStats convert_hh(const std::filesystem::path& input,
                               const std::filesystem::path& output,
                               const DeterminismContext& ctx) {
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot open input: " + input.string());
    std::ofstream out(output, std::ios::trunc);
    if (!out) throw ConfigError("cannot write output: " + output.string());
    ConvertStats stats;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        nlohmann::json j = detail::parse_line(line, line_no);
        std::string id =
            j.contains("id") ? j.at("id").get<std::string>() : "hh-" + std::to_string(line_no);
        std::string query = j.at("query").get<std::string>();
        std::string chosen = j.at("chosen").get<std::string>();
        std::string rejected = j.at("rejected").get<std::string>();
        bool chosen_left = !ctx.stream("hh-side", id).coin();
        if (chosen_left) {
            detail::write_row(out, id, query, chosen, rejected, PreferenceLabel::Left);
        } else {
            detail::write_row(out, id, query, rejected, chosen, PreferenceLabel::Right);
        }
        ++stats.written;
    }
    return stats;
}

} // namespace adapters

} // namespace sc2
