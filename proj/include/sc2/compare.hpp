#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sc2/core.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"
#include "sc2/rng.hpp"

namespace sc2 {

// ---------------------------------------------------------------------------
// Deterministic consistency oracle
// ---------------------------------------------------------------------------

struct ConsistencyScore {
    double value = 0.0;  // 1.0 = perfectly consistent (no overlap)
};

namespace detail {

inline double ngram_jaccard(std::string_view a, std::string_view b) {
    std::vector<std::string> ta = text::split_whitespace(text::lower_ascii(a));
    std::vector<std::string> tb = text::split_whitespace(text::lower_ascii(b));
    if (ta.empty() || tb.empty()) return 0.0;
    auto grams = [](const std::vector<std::string>& toks) {
        std::set<std::string> out;
        if (toks.size() < 3) {
            std::string g;
            for (const std::string& t : toks) {
                g += t;
                g += '\x1f';
            }
            out.insert(g);
            return out;
        }
        for (size_t i = 0; i + 3 <= toks.size(); ++i) {
            out.insert(toks[i] + '\x1f' + toks[i + 1] + '\x1f' + toks[i + 2]);
        }
        return out;
    };
    std::set<std::string> ga = grams(ta);
    std::set<std::string> gb = grams(tb);
    size_t inter = 0;
    for (const std::string& g : ga) inter += gb.count(g);
    size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace detail

/// Test-time stand-in for the consistency function: per row, the word
/// 3-gram Jaccard overlap between the shared cell and each unique cell
/// (pairs with an empty side contribute 0); the score is one minus the mean
/// of the per-row maxima. Symmetric under side swap, invariant under row
/// permutation.
inline ConsistencyScore oracle_consistency(const ComparisonTable& table) {
    if (table.rows.empty()) throw ValidationError("oracle_consistency: table has no rows");
    double sum = 0.0;
    for (const ComparisonRow& row : table.rows) {
        double jl = detail::ngram_jaccard(row.shared, row.left_unique);
        double jr = detail::ngram_jaccard(row.shared, row.right_unique);
        sum += std::max(jl, jr);
    }
    return ConsistencyScore{1.0 - sum / static_cast<double>(table.rows.size())};
}

// ---------------------------------------------------------------------------
// Pairwise judging
// ---------------------------------------------------------------------------

/// Outcome of one pairwise judgment. `winner_of_pair` refers to argument
/// position (0 = first, 1 = second) after any presentation shuffling has
/// been mapped back.
struct PairDecision {
    int winner_of_pair = 0;
    bool tie_broken = false;
    bool swapped_presentation = false;
};

using PairJudge = std::function<PairDecision(const ComparisonTable&, const ComparisonTable&)>;

enum class JudgeMode { Llm, Oracle };

struct JudgeOptions {
    JudgeMode mode = JudgeMode::Llm;
    /// Shuffle which table is shown as "A". The two orderings of exact
    /// search cover position bias by construction, so it disables this.
    bool randomize_presentation = true;
};

struct JudgeVerdictRecord {
    int round = 0;
    int i = 0;
    int j = 0;
    int presented[2] = {0, 0};
    int winner = 0;
    bool tie_broken = false;
};

struct JudgeTranscript {
    std::vector<JudgeVerdictRecord> entries;
    RoleUsage usage;  // comparator-role usage attributable to this selection

    int total_calls() const { return static_cast<int>(entries.size()); }

    /// One verdict per line: {"round":..,"i":..,"j":..,"presented":[x,y],
    /// "winner":..,"tie_broken":..}
    std::string to_jsonl() const {
        std::string out;
        for (const JudgeVerdictRecord& e : entries) {
            nlohmann::json j{{"round", e.round},
                             {"i", e.i},
                             {"j", e.j},
                             {"presented", {e.presented[0], e.presented[1]}},
                             {"winner", e.winner},
                             {"tie_broken", e.tie_broken}};
            out += j.dump();
            out += '\n';
        }
        return out;
    }
};

/// Judge a pair with the deterministic oracle: higher score wins, equal
/// scores fall to a seeded coin.
inline PairDecision judge_pair_oracle(const ComparisonTable& a, const ComparisonTable& b,
                                      RandomStream& tie_stream) {
    double sa = oracle_consistency(a).value;
    double sb = oracle_consistency(b).value;
    if (sa > sb) return PairDecision{0, false, false};
    if (sb > sa) return PairDecision{1, false, false};
    return PairDecision{tie_stream.coin() ? 1 : 0, true, false};
}

/// Judge a pair with the LLM comparator. Presentation order is randomized
/// under the seed (unless disabled) and mapped back on return. A verdict
/// that fails to parse is retried once, then degrades to a seeded tie.
inline PairDecision judge_pair_llm(Provider& provider, const PromptCatalog& catalog,
                                   const TextPairTask& task, const ComparisonTable& a,
                                   const ComparisonTable& b, RandomStream& order_stream,
                                   RandomStream& tie_stream, bool randomize_presentation,
                                   RoleUsage* usage = nullptr) {
    bool swapped = randomize_presentation && order_stream.coin();
    const ComparisonTable& first = swapped ? b : a;
    const ComparisonTable& second = swapped ? a : b;
    std::string prompt = catalog.render_comparator_prompt(task, first, second);

    std::optional<PreferenceLabel> verdict;
    for (int attempt = 0; attempt < 2 && !verdict; ++attempt) {
        GenerationRequest req = make_request(Role::Comparator, prompt);
        req.sample_index_base = attempt;
        GenerationResponse resp = provider.generate(req);
        if (usage) *usage += resp.usage;
        try {
            verdict = parse_comparator_verdict(resp.texts.front());
        } catch (const ParseError&) {
            // retry once, then fall through to a seeded tie
        }
    }
    if (!verdict) {
        int w = tie_stream.coin() ? 1 : 0;
        return PairDecision{w, true, swapped};
    }
    bool first_won = (*verdict == PreferenceLabel::Left);
    int winner = (first_won != swapped) ? 0 : 1;
    return PairDecision{winner, false, swapped};
}

/// Bind a judge for repeated use inside one selection. Streams are keyed by
/// (purpose, item), so the same seed and item replay identically.
inline PairJudge make_oracle_judge(const DeterminismContext& ctx, std::string_view item) {
    auto tie = std::make_shared<RandomStream>(ctx.stream("judge-tie", item));
    return [tie](const ComparisonTable& a, const ComparisonTable& b) {
        return judge_pair_oracle(a, b, *tie);
    };
}

inline PairJudge make_llm_judge(Provider& provider, const PromptCatalog& catalog,
                                const TextPairTask& task, const DeterminismContext& ctx,
                                JudgeOptions options = {}, RoleUsage* usage = nullptr) {
    auto order = std::make_shared<RandomStream>(ctx.stream("judge-order", task.id));
    auto tie = std::make_shared<RandomStream>(ctx.stream("judge-tie", task.id));
    bool randomize = options.randomize_presentation;
    return [&provider, &catalog, task, order, tie, randomize, usage](const ComparisonTable& a,
                                                                     const ComparisonTable& b) {
        return judge_pair_llm(provider, catalog, task, a, b, *order, *tie, randomize, usage);
    };
}

/// Spec-level convenience: one pairwise judgment in either mode.
inline PairDecision judge_pair(Provider& provider, const PromptCatalog& catalog,
                               const TextPairTask& task, const ComparisonTable& a,
                               const ComparisonTable& b, const DeterminismContext& ctx,
                               JudgeOptions options = {}) {
    if (options.mode == JudgeMode::Oracle) {
        RandomStream tie = ctx.stream("judge-tie", task.id);
        return judge_pair_oracle(a, b, tie);
    }
    RandomStream order = ctx.stream("judge-order", task.id);
    RandomStream tie = ctx.stream("judge-tie", task.id);
    return judge_pair_llm(provider, catalog, task, a, b, order, tie,
                          options.randomize_presentation);
}

// ---------------------------------------------------------------------------
// Comparison sampling
// ---------------------------------------------------------------------------

struct SampleSet {
    std::vector<ComparisonTable> samples;
    double temperature = 0.0;
    std::string model_id;
    std::vector<std::string> repairs;
    RoleUsage usage;  // comparison-role usage for this set
};

/// Draw `count` comparison tables. Unparseable samples are re-drawn up to
/// two extra times each, then replaced by an all-empty table (recorded).
inline SampleSet sample_comparisons(Provider& provider, const PromptCatalog& catalog,
                                    const TextPairTask& task, const AspectSet& aspects, int count,
                                    const std::vector<FewshotExample>& fewshot = {}) {
    if (count < 1) throw ValidationError("sample_comparisons: count must be >= 1");
    std::string prompt = catalog.render_comparison_prompt(task, aspects, fewshot);
    GenerationRequest req = make_request(Role::Comparison, prompt, count);
    GenerationResponse resp = provider.generate(req);

    SampleSet set;
    set.temperature = req.temperature;
    set.model_id = provider.model_id();
    set.usage = resp.usage;

    for (int s = 0; s < count; ++s) {
        std::string sample_text = resp.texts[static_cast<size_t>(s)];
        std::optional<ComparisonTable> table;
        for (int attempt = 0; attempt <= 2 && !table; ++attempt) {
            if (attempt > 0) {
                GenerationRequest redraw = make_request(Role::Comparison, prompt);
                redraw.sample_index_base = count + s * 2 + (attempt - 1);
                GenerationResponse rr = provider.generate(redraw);
                set.usage += rr.usage;
                sample_text = rr.texts.front();
                set.repairs.push_back("sample " + std::to_string(s) + ": redraw attempt " +
                                      std::to_string(attempt));
            }
            try {
                TableParse parsed = parse_table(sample_text, aspects);
                for (std::string& r : parsed.repairs)
                    set.repairs.push_back("sample " + std::to_string(s) + ": " + r);
                table = std::move(parsed.table);
            } catch (const ParseError&) {
            }
        }
        if (!table) {
            ComparisonTable empty;
            for (const std::string& a : aspects.aspects)
                empty.rows.push_back(ComparisonRow{a, "", "", ""});
            table = std::move(empty);
            set.repairs.push_back("sample " + std::to_string(s) +
                                  ": unparseable after redraws, replaced with empty table");
        }
        table->source_sample_index = s;
        set.samples.push_back(std::move(*table));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

struct SelectionResult {
    ComparisonTable winner;
    int winner_index = 0;
    JudgeTranscript transcript;
};

/// Single-elimination selection: seeded random initial pairing, loser leaves
/// the bracket, the odd survivor of a round gets a seeded bye. Costs exactly
/// |C| - 1 judge calls.
inline SelectionResult select_tournament(const SampleSet& samples, const PairJudge& judge,
                                         const DeterminismContext& ctx,
                                         std::string_view item = {}) {
    size_t n = samples.samples.size();
    if (n == 0) throw ValidationError("select_tournament: sample set is empty");
    std::vector<int> alive(n);
    for (size_t i = 0; i < n; ++i) alive[i] = static_cast<int>(i);

    RandomStream pairing = ctx.stream("tournament-pairing", item);
    RandomStream bye_stream = ctx.stream("tournament-bye", item);
    pairing.shuffle(alive);

    SelectionResult result;
    int round = 0;
    while (alive.size() > 1) {
        std::vector<int> next;
        if (alive.size() % 2 == 1) {
            size_t bye = bye_stream.uniform_index(alive.size());
            next.push_back(alive[bye]);
            alive.erase(alive.begin() + static_cast<long>(bye));
        }
        for (size_t k = 0; k + 1 < alive.size(); k += 2) {
            int i = alive[k];
            int j = alive[k + 1];
            PairDecision d = judge(samples.samples[static_cast<size_t>(i)],
                                   samples.samples[static_cast<size_t>(j)]);
            JudgeVerdictRecord rec;
            rec.round = round;
            rec.i = i;
            rec.j = j;
            rec.presented[0] = d.swapped_presentation ? j : i;
            rec.presented[1] = d.swapped_presentation ? i : j;
            rec.winner = d.winner_of_pair == 0 ? i : j;
            rec.tie_broken = d.tie_broken;
            result.transcript.entries.push_back(rec);
            next.push_back(rec.winner);
        }
        alive = std::move(next);
        ++round;
    }
    result.winner_index = alive.front();
    result.winner = samples.samples[static_cast<size_t>(result.winner_index)];
    return result;
}

/// Exhaustive sum-of-wins selection over all ordered pairs — both
/// presentation orders per pair, |C|·(|C|−1) judge calls. The winner is the
/// sample with the most pairwise wins; ties fall to a seeded draw.
inline SelectionResult select_exact(const SampleSet& samples, const PairJudge& judge,
                                    const DeterminismContext& ctx, std::string_view item = {}) {
    size_t n = samples.samples.size();
    if (n < 2) throw ValidationError("select_exact: needs at least 2 samples");
    std::vector<int> wins(n, 0);
    SelectionResult result;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            PairDecision d = judge(samples.samples[i], samples.samples[j]);
            JudgeVerdictRecord rec;
            rec.round = 0;
            rec.i = static_cast<int>(i);
            rec.j = static_cast<int>(j);
            rec.presented[0] = static_cast<int>(d.swapped_presentation ? j : i);
            rec.presented[1] = static_cast<int>(d.swapped_presentation ? i : j);
            rec.winner = d.winner_of_pair == 0 ? static_cast<int>(i) : static_cast<int>(j);
            rec.tie_broken = d.tie_broken;
            result.transcript.entries.push_back(rec);
            ++wins[static_cast<size_t>(rec.winner)];
        }
    }
    int best = *std::max_element(wins.begin(), wins.end());
    std::vector<int> top;
    for (size_t i = 0; i < n; ++i) {
        if (wins[i] == best) top.push_back(static_cast<int>(i));
    }
    if (top.size() == 1) {
        result.winner_index = top.front();
    } else {
        RandomStream tie = ctx.stream("exact-tie", item);
        result.winner_index = top[tie.uniform_index(top.size())];
    }
    result.winner = samples.samples[static_cast<size_t>(result.winner_index)];
    return result;
}

/// Uniform seeded draw; zero judge calls.
inline SelectionResult select_random(const SampleSet& samples, const DeterminismContext& ctx,
                                     std::string_view item = {}) {
    size_t n = samples.samples.size();
    if (n == 0) throw ValidationError("select_random: sample set is empty");
    RandomStream pick = ctx.stream("random-select", item);
    SelectionResult result;
    result.winner_index = static_cast<int>(pick.uniform_index(n));
    result.winner = samples.samples[static_cast<size_t>(result.winner_index)];
    return result;
}

} // namespace sc2
