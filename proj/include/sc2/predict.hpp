#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sc2/aspect.hpp"
#include "sc2/compare.hpp"
#include "sc2/core.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"
#include "sc2/rng.hpp"

namespace sc2 {

enum class SelectionStrategy { Tournament, Exact, Random };

inline const char* to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Tournament: return "tournament";
        case SelectionStrategy::Exact: return "exact";
        case SelectionStrategy::Random: return "random";
    }
    return "unknown";
}

inline SelectionStrategy selection_from_string(std::string_view s) {
    std::string v = text::lower_ascii(text::trim(s));
    if (v == "tournament") return SelectionStrategy::Tournament;
    if (v == "exact") return SelectionStrategy::Exact;
    if (v == "random") return SelectionStrategy::Random;
    throw ConfigError("unknown selection strategy: " + std::string(s));
}

/// A method plus its options. Options are stored only when explicitly set,
/// so validate() can reject options that are illegal for the tag.
struct MethodTag {
    Method method = Method::DP;
    std::optional<SelectionStrategy> selection_opt;
    std::optional<int> sample_count_opt;  // |C|
    std::optional<int> selfcon_k_opt;
    std::optional<int> fewshot_k_opt;

    SelectionStrategy selection() const { return selection_opt.value_or(SelectionStrategy::Tournament); }
    int sample_count() const { return sample_count_opt.value_or(8); }
    int selfcon_k() const { return selfcon_k_opt.value_or(8); }
    int fewshot_k() const { return fewshot_k_opt.value_or(method == Method::CoT1 ? 1 : 0); }

    void validate() const {
        if (selection_opt && method != Method::SC2)
            throw ConfigError("selection is only valid for SC2");
        if (sample_count_opt && method != Method::SC2)
            throw ConfigError("sample_count is only valid for SC2");
        if (sample_count_opt && *sample_count_opt < 1)
            throw ConfigError("sample_count must be >= 1");
        if (selfcon_k_opt && method != Method::SelfCon)
            throw ConfigError("selfcon_k is only valid for SelfCon");
        if (selfcon_k_opt && *selfcon_k_opt < 1) throw ConfigError("selfcon_k must be >= 1");
        if (fewshot_k_opt) {
            if (method == Method::CoT1) {
                if (*fewshot_k_opt != 1) throw ConfigError("CoT1 uses exactly 1 exemplar");
            } else if (method == Method::SC2) {
                if (*fewshot_k_opt < 0 || *fewshot_k_opt > 5)
                    throw ConfigError("SC2 supports 0..5 few-shot exemplars");
            } else {
                throw ConfigError("fewshot_k is only valid for CoT1 or SC2");
            }
        }
    }

    bool needs_aspects() const { return method == Method::DPAspects || method == Method::SC2; }

    nlohmann::json to_json() const {
        nlohmann::json j{{"tag", std::string(to_string(method))}};
        if (method == Method::SC2) {
            j["selection"] = to_string(selection());
            j["sample_count"] = sample_count();
        }
        if (method == Method::SelfCon) j["selfcon_k"] = selfcon_k();
        if (fewshot_k() > 0) j["fewshot_k"] = fewshot_k();
        return j;
    }

    std::string label() const {
        std::string s = to_string(method);
        if (method == Method::SC2)
            s += std::string("/") + to_string(selection()) + "/C=" + std::to_string(sample_count());
        if (method == Method::SelfCon) s += "/k=" + std::to_string(selfcon_k());
        return s;
    }
};

/// Strict-majority winner, or a seeded uniform draw among the tied maxima.
/// Permutation-invariant in the ballot; seed-independent whenever a strict
/// majority exists.
inline PreferenceLabel majority_vote(const std::vector<PreferenceLabel>& labels,
                                     const DeterminismContext& ctx, std::string_view item = {}) {
    if (labels.empty()) throw ValidationError("majority_vote: empty ballot");
    long left = 0;
    long right = 0;
    for (PreferenceLabel l : labels) (l == PreferenceLabel::Left ? left : right) += 1;
    if (left > right) return PreferenceLabel::Left;
    if (right > left) return PreferenceLabel::Right;
    return ctx.stream("majority-tie", item).coin() ? PreferenceLabel::Right
                                                   : PreferenceLabel::Left;
}

/// Uniform result row for every method.
struct PredictionRecord {
    std::string task_id;
    MethodTag method;
    std::optional<PreferenceLabel> predicted;
    std::optional<PreferenceLabel> gold;
    std::string rationale;
    std::vector<std::string> aspects;
    std::optional<ComparisonTable> chosen_table;  // SC2 only
    UsageSnapshot usage;
    uint64_t master_seed = 0;
    int round = 0;
    std::optional<std::pair<int, int>> vote_split;  // SelfCon: (left, right)
    std::vector<std::string> repairs;
    std::string error;

    bool failed() const { return !predicted.has_value(); }
    bool correct() const { return predicted && gold && *predicted == *gold; }

    nlohmann::json to_json() const {
        nlohmann::json j{
            {"schema", "record_v1"},
            {"task_id", task_id},
            {"method", method.to_json()},
            {"predicted",
             predicted ? nlohmann::json(std::string(1, to_side_letter(*predicted)))
                       : nlohmann::json(nullptr)},
            {"gold", gold ? nlohmann::json(std::string(1, to_side_letter(*gold)))
                          : nlohmann::json(nullptr)},
            {"failed", failed()},
            {"rationale", rationale},
            {"aspects", aspects},
            {"chosen_table",
             chosen_table ? nlohmann::json(render_table(*chosen_table)) : nlohmann::json(nullptr)},
            {"usage", usage_to_json(usage)},
            {"seed", {{"master_seed", master_seed}, {"round", round}}},
            {"repairs", repairs},
            {"error", error},
        };
        j["vote_split"] = vote_split ? nlohmann::json{vote_split->first, vote_split->second}
                                     : nlohmann::json(nullptr);
        return j;
    }
};

/// Everything a per-item prediction needs.
struct PredictContext {
    Provider& provider;
    const PromptCatalog& catalog;
    DeterminismContext ctx;
    int round = 0;
};

namespace detail {

inline PredictionRecord new_record(const PredictContext& pc, const TextPairTask& task,
                                   const MethodTag& method) {
    PredictionRecord rec;
    rec.task_id = task.id;
    rec.method = method;
    rec.gold = task.gold;
    rec.master_seed = pc.ctx.master_seed();
    rec.round = pc.round;
    return rec;
}

/// One preference call + parse, shared by every method.
inline void run_preference_call(PredictContext& pc, PredictionRecord& rec, std::string prompt,
                                double temperature = 0.0) {
    GenerationRequest req = make_request(Role::Preference, std::move(prompt));
    req.temperature = temperature;
    GenerationResponse resp = pc.provider.generate(req);
    rec.usage[Role::Preference] += resp.usage;
    ParsedPreference parsed = parse_preference(resp.texts.front());
    rec.predicted = parsed.label;
    rec.rationale = parsed.rationale;
}

} // namespace detail

inline PredictionRecord predict_dp(PredictContext& pc, const TextPairTask& task,
                                   const MethodTag& method) {
    PredictionRecord rec = detail::new_record(pc, task, method);
    detail::run_preference_call(pc, rec,
                                pc.catalog.render_preference_prompt(task, Method::DP));
    return rec;
}

inline PredictionRecord predict_dp_aspects(PredictContext& pc, const TextPairTask& task,
                                           const MethodTag& method, const AspectSet& aspects) {
    PredictionRecord rec = detail::new_record(pc, task, method);
    rec.aspects = aspects.aspects;
    detail::run_preference_call(
        pc, rec, pc.catalog.render_preference_prompt(task, Method::DPAspects, aspects));
    return rec;
}

inline PredictionRecord predict_cot0(PredictContext& pc, const TextPairTask& task,
                                     const MethodTag& method) {
    PredictionRecord rec = detail::new_record(pc, task, method);
    detail::run_preference_call(pc, rec,
                                pc.catalog.render_preference_prompt(task, Method::CoT0));
    return rec;
}

inline PredictionRecord predict_cot1(PredictContext& pc, const TextPairTask& task,
                                     const MethodTag& method,
                                     const std::vector<FewshotExample>& fewshot) {
    if (fewshot.size() != 1)
        throw ConfigError("CoT1 requires exactly one exemplar, got " +
                          std::to_string(fewshot.size()));
    PredictionRecord rec = detail::new_record(pc, task, method);
    detail::run_preference_call(
        pc, rec,
        pc.catalog.render_preference_prompt(task, Method::CoT1, std::nullopt, std::nullopt,
                                            fewshot));
    return rec;
}

/// k chain-of-thought samples at sampling temperature, majority vote on the
/// parsed labels. Samples that fail to parse are dropped from the tally and
/// recorded.
inline PredictionRecord predict_selfcon(PredictContext& pc, const TextPairTask& task,
                                        const MethodTag& method) {
    int k = method.selfcon_k();
    PredictionRecord rec = detail::new_record(pc, task, method);
    std::string prompt = pc.catalog.render_preference_prompt(task, Method::SelfCon);
    GenerationRequest req = make_request(Role::Preference, std::move(prompt), k);
    req.temperature = 0.7;  // sampling temperature, not the 0.0 preference default
    GenerationResponse resp = pc.provider.generate(req);
    rec.usage[Role::Preference] += resp.usage;

    std::vector<PreferenceLabel> ballot;
    for (size_t s = 0; s < resp.texts.size(); ++s) {
        try {
            ParsedPreference parsed = parse_preference(resp.texts[s]);
            if (rec.rationale.empty()) rec.rationale = parsed.rationale;
            ballot.push_back(parsed.label);
        } catch (const ParseError&) {
            rec.repairs.push_back("sample " + std::to_string(s) + " dropped: unparseable vote");
        }
    }
    if (ballot.empty()) throw ParseError("no self-consistency sample produced a vote");
    int left = 0;
    int right = 0;
    for (PreferenceLabel l : ballot) (l == PreferenceLabel::Left ? left : right) += 1;
    rec.vote_split = std::make_pair(left, right);
    rec.predicted = majority_vote(ballot, pc.ctx, task.id);
    return rec;
}

/// The full pipeline: sample |C| comparison tables, select the most
/// consistent one, and ask the preference model with the chosen table.
inline PredictionRecord predict_sc2(PredictContext& pc, const TextPairTask& task,
                                    const MethodTag& method, const AspectSet& aspects,
                                    const std::vector<FewshotExample>& fewshot = {}) {
    PredictionRecord rec = detail::new_record(pc, task, method);
    rec.aspects = aspects.aspects;

    std::vector<FewshotExample> shots = fewshot;
    if (static_cast<int>(shots.size()) > method.fewshot_k())
        shots.resize(static_cast<size_t>(method.fewshot_k()));

    SampleSet samples =
        sample_comparisons(pc.provider, pc.catalog, task, aspects, method.sample_count(), shots);
    rec.usage[Role::Comparison] += samples.usage;
    for (const std::string& r : samples.repairs) rec.repairs.push_back(r);

    SelectionResult selected;
    if (samples.samples.size() == 1) {
        // no pairwise comparator in the degenerate case
        selected.winner = samples.samples.front();
        selected.winner_index = 0;
    } else {
        switch (method.selection()) {
            case SelectionStrategy::Tournament: {
                RoleUsage judge_usage;
                JudgeOptions opts;
                opts.randomize_presentation = true;
                PairJudge judge =
                    make_llm_judge(pc.provider, pc.catalog, task, pc.ctx, opts, &judge_usage);
                selected = select_tournament(samples, judge, pc.ctx, task.id);
                selected.transcript.usage = judge_usage;
                break;
            }
            case SelectionStrategy::Exact: {
                RoleUsage judge_usage;
                JudgeOptions opts;
                opts.randomize_presentation = false;  // ordered pairs cover both orders
                PairJudge judge =
                    make_llm_judge(pc.provider, pc.catalog, task, pc.ctx, opts, &judge_usage);
                selected = select_exact(samples, judge, pc.ctx, task.id);
                selected.transcript.usage = judge_usage;
                break;
            }
            case SelectionStrategy::Random: {
                selected = select_random(samples, pc.ctx, task.id);
                break;
            }
        }
    }
    rec.usage[Role::Comparator] += selected.transcript.usage;
    rec.chosen_table = selected.winner;

    detail::run_preference_call(
        pc, rec,
        pc.catalog.render_preference_prompt(task, Method::SC2, std::nullopt, selected.winner,
                                            shots));
    return rec;
}

/// Dispatch on the method tag. Throws on generation/parse failures; see
/// predict_item for the failure-tolerant wrapper.
inline PredictionRecord predict(PredictContext& pc, const TextPairTask& task,
                                const MethodTag& method,
                                const std::optional<AspectSet>& aspects = std::nullopt,
                                const std::vector<FewshotExample>& fewshot = {}) {
    method.validate();
    if (method.needs_aspects() && !aspects)
        throw ConfigError(std::string(to_string(method.method)) + " requires an aspect set");
    switch (method.method) {
        case Method::DP: return predict_dp(pc, task, method);
        case Method::DPAspects: return predict_dp_aspects(pc, task, method, *aspects);
        case Method::CoT0: return predict_cot0(pc, task, method);
        case Method::CoT1: {
            if (fewshot.empty()) throw ConfigError("CoT1 requires one exemplar");
            return predict_cot1(pc, task, method, {fewshot.front()});
        }
        case Method::SelfCon: return predict_selfcon(pc, task, method);
        case Method::SC2: return predict_sc2(pc, task, method, *aspects, fewshot);
    }
    throw ConfigError("unhandled method");
}

/// Like predict(), but a failing item comes back as a Failed record instead
/// of unwinding the whole run. Failed items count as incorrect by default.
inline PredictionRecord predict_item(PredictContext& pc, const TextPairTask& task,
                                     const MethodTag& method,
                                     const std::optional<AspectSet>& aspects = std::nullopt,
                                     const std::vector<FewshotExample>& fewshot = {}) {
    try {
        return predict(pc, task, method, aspects, fewshot);
    } catch (const Error& e) {
        PredictionRecord rec = detail::new_record(pc, task, method);
        rec.error = e.what();
        return rec;
    }
}

} // namespace sc2
