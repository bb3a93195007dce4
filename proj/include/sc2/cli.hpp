#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "sc2/bench.hpp"
#include "sc2/config.hpp"
#include "sc2/live_backend.hpp"
#include "sc2/predict.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"

namespace sc2::cli {

inline std::unique_ptr<Provider> make_provider(const RunConfig& cfg) {
    ProviderOptions options;
    options.model_id = cfg.model_id;
    options.cache_dir = cfg.cache_dir;
    std::shared_ptr<Backend> backend;
    if (cfg.backend_mode == BackendMode::Mock) {
        backend = std::make_shared<MockBackend>(MockScript::load(cfg.mock_script));
    } else {
        LiveBackendConfig live;
        const char* url = std::getenv("PROVIDER_BASE_URL");
        const char* key = std::getenv("PROVIDER_API_KEY");
        live.base_url = url != nullptr ? url : "";
        live.api_key = key != nullptr ? key : "";
        backend = make_live_backend(live);
    }
    return std::make_unique<Provider>(std::move(backend), std::move(options));
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << body;
}

inline void write_outputs(const std::filesystem::path& dir, const EvalReport& report,
                          const std::string& label) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "report.json", report.to_json().dump(2) + "\n");
    std::string records;
    for (const PredictionRecord& r : report.records) records += r.to_json().dump() + "\n";
    write_text_file(dir / "records.jsonl", records);
    write_text_file(dir / "cost.csv", cost_report({{label, &report}}).to_csv());
}

/// Render what the first item's prompts would look like, with zero backend
/// calls. Placeholder artifacts stand in for sampled content.
inline void dry_run(const RunConfig& cfg, const PromptCatalog& catalog,
                    const std::vector<TextPairTask>& tasks, std::ostream& out) {
    const TextPairTask& task = tasks.front();
    const MethodTag& method = cfg.eval.method;

    std::optional<AspectSet> aspects;
    if (cfg.eval.aspect_source == AspectSource::Manual) {
        aspects = AspectSet::make(cfg.eval.manual_aspects, AspectProvenance::Manual);
    } else if (cfg.eval.aspect_source == AspectSource::Offline) {
        aspects = load_aspect_file(cfg.eval.aspect_file).aspects;
    } else if (cfg.eval.aspect_source == AspectSource::Online) {
        out << "--- aspect prompt (online) ---\n"
            << catalog.render_aspect_online_prompt(task) << "\n";
        aspects = AspectSet::make({"(placeholder aspect)"}, AspectProvenance::Manual);
    }

    if (method.method == Method::SC2) {
        ComparisonTable placeholder;
        for (const std::string& a : aspects->aspects)
            placeholder.rows.push_back(ComparisonRow{a, "", "", ""});
        out << "--- comparison prompt ---\n"
            << catalog.render_comparison_prompt(task, *aspects, cfg.eval.fewshot) << "\n";
        if (method.sample_count() > 1) {
            out << "--- comparator prompt ---\n"
                << catalog.render_comparator_prompt(task, placeholder, placeholder) << "\n";
        }
        out << "--- preference prompt ---\n"
            << catalog.render_preference_prompt(task, Method::SC2, std::nullopt, placeholder,
                                                cfg.eval.fewshot)
            << "\n";
        return;
    }
    out << "--- preference prompt ---\n"
        << catalog.render_preference_prompt(task, method.method, aspects, std::nullopt,
                                            cfg.eval.fewshot)
        << "\n";
}

} // namespace detail

struct CliFlags {
    ConfigOverrides overrides;
    bool dry_run = false;
    bool force = false;
};

/// `run`: execute one evaluation. Exit 0 on completion (even with per-item
/// failures, which are reported as warnings); nonzero when the run cannot be
/// set up at all.
inline int cmd_run(const std::filesystem::path& config_path, const CliFlags& flags,
                   std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = load_run_config(config_path, flags.overrides);
        PromptCatalog catalog(cfg.templates_dir);
        std::vector<TextPairTask> tasks = load_dataset(cfg.dataset);
        if (tasks.empty()) throw ConfigError("dataset is empty: " + cfg.dataset.path.string());

        if (flags.dry_run) {
            detail::dry_run(cfg, catalog, tasks, out);
            return 0;
        }

        std::unique_ptr<Provider> provider = make_provider(cfg);
        EvalReport report = evaluate(*provider, catalog, tasks, cfg.eval);
        detail::write_outputs(cfg.output_dir, report, cfg.eval.method.label());

        long failed = 0;
        for (const PredictionRecord& r : report.records) {
            if (r.failed()) ++failed;
        }
        if (failed > 0)
            err << "warning: " << failed << " of " << report.records.size()
                << " items failed and count as incorrect\n";
        out << "method " << cfg.eval.method.label() << " on " << cfg.dataset.name << ": ";
        if (report.mean_accuracy) {
            out << "accuracy " << *report.mean_accuracy;
        } else {
            out << "no gold labels, accuracy unavailable";
        }
        RoleUsage total = report.usage.total();
        out << " (calls " << total.calls << ", decoded tokens " << total.decoded_tokens << ")\n";
        out << "report written to " << (cfg.output_dir / "report.json").string() << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

/// `aspects-build`: run the offline aspect model over the corpus and persist
/// the five fixed aspects. Skips the rebuild when the corpus digest already
/// matches, unless --force.
inline int cmd_aspects_build(const std::filesystem::path& config_path, const CliFlags& flags,
                             std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = load_run_config(config_path, flags.overrides);
        if (cfg.aspect_out.empty())
            throw ConfigError("aspects.file must be set to persist offline aspects");
        PromptCatalog catalog(cfg.templates_dir);

        DatasetSpec corpus_spec = cfg.dataset;
        if (!cfg.aspect_corpus.empty()) {
            corpus_spec.path = cfg.aspect_corpus;
            corpus_spec.expected_count.reset();
        }
        std::vector<TextPairTask> corpus = load_dataset(corpus_spec);
        if (corpus.empty()) throw ConfigError("aspect corpus is empty");
        if (cfg.aspect_corpus_size > 0 &&
            corpus.size() > static_cast<size_t>(cfg.aspect_corpus_size))
            corpus.resize(static_cast<size_t>(cfg.aspect_corpus_size));

        std::string digest = corpus_digest(corpus);
        if (!flags.force && std::filesystem::exists(cfg.aspect_out)) {
            AspectFile existing = load_aspect_file(cfg.aspect_out);
            if (existing.corpus_digest == digest) {
                out << "aspects up to date (corpus digest match); use --force to rebuild\n";
                for (const std::string& a : existing.aspects.aspects) out << "- " << a << "\n";
                return 0;
            }
        }

        std::unique_ptr<Provider> provider = make_provider(cfg);
        OfflineAspectResult result = build_offline_aspects(*provider, catalog, corpus);
        save_aspect_file(cfg.aspect_out,
                         AspectFile{cfg.dataset.name, result.aspects, result.corpus_digest});
        out << "built " << result.aspects.aspects.size() << " aspects from " << corpus.size()
            << " pairs -> " << cfg.aspect_out.string() << "\n";
        for (const std::string& a : result.aspects.aspects) out << "- " << a << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

/// `sweep`: evaluate SC2 across several |C| values and write the CSV.
inline int cmd_sweep(const std::filesystem::path& config_path, const CliFlags& flags,
                     std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = load_run_config(config_path, flags.overrides);
        std::vector<int> values = cfg.sweep_c_values;
        if (values.empty()) throw ConfigError("sweep needs --c-values or run.c_values");
        PromptCatalog catalog(cfg.templates_dir);
        std::vector<TextPairTask> tasks = load_dataset(cfg.dataset);

        SweepReport sweep = sweep_c([&cfg]() { return make_provider(cfg); }, catalog, tasks,
                                    cfg.eval, values);
        std::filesystem::create_directories(cfg.output_dir);
        std::string csv = sweep.to_csv();
        detail::write_text_file(cfg.output_dir / "sweep.csv", csv);
        out << csv;
        out << "sweep written to " << (cfg.output_dir / "sweep.csv").string() << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

enum class ConvertKind { Trec, Tldr, Hh };

/// `convert-*`: normalize a raw dataset dump into the JSONL ingest format.
inline int cmd_convert(ConvertKind kind, const std::filesystem::path& input,
                       const std::filesystem::path& output, uint64_t seed, std::ostream& out,
                       std::ostream& err) {
    try {
        adapters::ConvertStats stats;
        switch (kind) {
            case ConvertKind::Trec: stats = adapters::convert_trec(input, output); break;
            case ConvertKind::Tldr: stats = adapters::convert_tldr(input, output); break;
            case ConvertKind::Hh:
                stats = adapters::convert_hh(input, output, DeterminismContext(seed));
                break;
        }
        out << "wrote " << stats.written << " pairs to " << output.string();
        if (stats.dropped_ties > 0) out << " (dropped " << stats.dropped_ties << " score ties)";
        out << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace sc2::cli
