#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sc2/core.hpp"
#include "sc2/prompt.hpp"
#include "sc2/provider.hpp"
#include "sc2/rng.hpp"

namespace sc2 {

/// Canonical form of one aspect phrase; empty results are an error here
/// (callers that tolerate empties use text::canonical_phrase directly).
inline std::string canonicalize_aspect(std::string_view phrase) {
    std::string canon = text::canonical_phrase(phrase);
    if (canon.empty())
        throw CanonicalizationError("aspect phrase '" + std::string(phrase) +
                                    "' is empty after canonicalization");
    return canon;
}

/// Tally of canonical phrases across sampled aspect lists. `min_position`
/// holds the smallest within-sample index a phrase was seen at; both maps
/// are invariant under permutation of the samples.
struct AspectVote {
    std::map<std::string, int> counts;
    std::map<std::string, int> min_position;
    int total_mentions = 0;

    void add(const std::string& canon, int position) {
        counts[canon] += 1;
        auto it = min_position.find(canon);
        if (it == min_position.end() || position < it->second) min_position[canon] = position;
        ++total_mentions;
    }
};

struct OnlineAspectResult {
    AspectSet aspects;
    AspectVote votes;
    RoleUsage usage;
};

inline constexpr int kAspectTarget = 5;

namespace detail {

/// Top-k phrases by count; selected phrases are ordered by
/// (count desc, earliest within-sample position, lexicographic). Only a tie
/// group straddling the cutoff consults the seeded stream, so the result
/// depends on nothing but the tallies and the seed.
inline std::vector<std::string> select_top_aspects(const AspectVote& votes, size_t limit,
                                                   RandomStream tie_stream) {
    struct Cand {
        std::string phrase;
        int count;
        int min_pos;
    };
    std::vector<Cand> cands;
    cands.reserve(votes.counts.size());
    for (const auto& [phrase, count] : votes.counts) {
        cands.push_back(Cand{phrase, count, votes.min_position.at(phrase)});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.min_pos != b.min_pos) return a.min_pos < b.min_pos;
        return a.phrase < b.phrase;
    });
    if (cands.size() <= limit) {
        std::vector<std::string> out;
        for (Cand& c : cands) out.push_back(std::move(c.phrase));
        return out;
    }
    // Does the cutoff split a count-tie group? If so, the seeded stream
    // decides which members of the group take the remaining slots.
    int cut_count = cands[limit - 1].count;
    size_t group_begin = limit - 1;
    while (group_begin > 0 && cands[group_begin - 1].count == cut_count) --group_begin;
    size_t group_end = limit;
    while (group_end < cands.size() && cands[group_end].count == cut_count) ++group_end;

    std::vector<std::string> out;
    for (size_t i = 0; i < group_begin; ++i) out.push_back(cands[i].phrase);
    if (group_end > limit) {
        std::vector<size_t> group_idx;
        for (size_t i = group_begin; i < group_end; ++i) group_idx.push_back(i);
        tie_stream.shuffle(group_idx);
        group_idx.resize(limit - group_begin);
        std::sort(group_idx.begin(), group_idx.end());  // keep rank order among chosen
        for (size_t i : group_idx) out.push_back(cands[i].phrase);
    } else {
        for (size_t i = group_begin; i < limit; ++i) out.push_back(cands[i].phrase);
    }
    return out;
}

} // namespace detail

/// Online aspect model: sample k aspect lists for this pair, canonicalize
/// and tally the phrases, and keep the most agreed-upon five.
inline OnlineAspectResult propose_aspects_online(Provider& provider, const PromptCatalog& catalog,
                                                 const TextPairTask& task, int k_samples,
                                                 const DeterminismContext& ctx) {
    if (k_samples < 1) throw ValidationError("propose_aspects_online: k_samples must be >= 1");
    std::string prompt = catalog.render_aspect_online_prompt(task);
    GenerationResponse resp = provider.generate(make_request(Role::Aspect, prompt, k_samples));

    OnlineAspectResult result;
    result.usage = resp.usage;
    bool any = false;
    for (const std::string& sample : resp.texts) {
        std::vector<std::string> phrases = parse_aspect_list(sample);
        if (!phrases.empty()) any = true;
        for (size_t pos = 0; pos < phrases.size(); ++pos) {
            result.votes.add(phrases[pos], static_cast<int>(pos));
        }
    }
    if (!any) throw ParseError("no aspect sample produced a parseable aspect list");

    std::vector<std::string> top = detail::select_top_aspects(
        result.votes, kAspectTarget, ctx.stream("aspect-tie", task.id));
    result.aspects = AspectSet::make(std::move(top), AspectProvenance::Online);
    return result;
}

// ---------------------------------------------------------------------------
// Offline aspect model
// ---------------------------------------------------------------------------

struct OfflineAspectResult {
    AspectSet aspects;
    std::string corpus_digest;
    RoleUsage usage;
};

inline std::string corpus_digest(const std::vector<TextPairTask>& corpus) {
    std::string material;
    for (const TextPairTask& t : corpus) {
        material += t.id;
        material += '\x1f';
        material += t.query;
        material += '\x1f';
        material += t.left;
        material += '\x1f';
        material += t.right;
        material += '\x1e';
    }
    return sha256_hex(material);
}

/// Offline aspect model: extract aspects from every text in the corpus, then
/// consolidate them in a single call into exactly five fixed phrases. The
/// result is reusable for any pair of the task at no further aspect cost.
inline OfflineAspectResult build_offline_aspects(Provider& provider, const PromptCatalog& catalog,
                                                 const std::vector<TextPairTask>& corpus) {
    if (corpus.empty()) throw ValidationError("build_offline_aspects: corpus must be non-empty");
    TaskFamily family = corpus.front().kind.family;

    OfflineAspectResult result;
    result.corpus_digest = corpus_digest(corpus);

    std::vector<std::string> candidates;  // unique canonical phrases, in first-seen order
    auto collect = [&candidates](const std::vector<std::string>& phrases) {
        for (const std::string& p : phrases) {
            if (std::find(candidates.begin(), candidates.end(), p) == candidates.end())
                candidates.push_back(p);
        }
    };
    for (const TextPairTask& task : corpus) {
        for (const std::string* body : {&task.left, &task.right}) {
            std::string prompt = catalog.render_aspect_extract_prompt(family, *body);
            GenerationResponse resp = provider.generate(make_request(Role::Aspect, prompt));
            result.usage += resp.usage;
            collect(parse_aspect_list(resp.texts.front()));
        }
    }

    std::string prompt = catalog.render_aspect_consolidate_prompt(family, candidates);
    std::string previous;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string full = prompt;
        if (attempt > 0) {
            full += "\n\nYour previous answer was:\n" + previous +
                    "\n\nIt did not contain exactly five aspects. Answer again, following the "
                    "required format, with exactly five aspects.";
        }
        GenerationRequest req = make_request(Role::Aspect, full);
        req.temperature = 0.0;  // greedy decode for the consolidation step
        GenerationResponse resp = provider.generate(req);
        result.usage += resp.usage;
        previous = resp.texts.front();

        std::vector<std::string> parsed = parse_aspect_list(previous);
        std::vector<std::string> unique;
        for (const std::string& p : parsed) {
            if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(p);
        }
        if (unique.size() == kAspectTarget) {
            result.aspects = AspectSet::make(std::move(unique), AspectProvenance::Offline);
            return result;
        }
    }
    throw ConsolidationError("aspect consolidation produced a list of the wrong size twice");
}

// ---------------------------------------------------------------------------
// Persisted aspect files
// ---------------------------------------------------------------------------

struct AspectFile {
    std::string task_name;
    AspectSet aspects;
    std::string corpus_digest;
};

inline void save_aspect_file(const std::filesystem::path& path, const AspectFile& file) {
    nlohmann::json j{{"task_name", file.task_name},
                     {"provenance", to_string(file.aspects.provenance)},
                     {"aspects", file.aspects.aspects},
                     {"corpus_digest", file.corpus_digest}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot write aspect file: " + path.string());
    out << j.dump(2) << '\n';
}

inline AspectFile load_aspect_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open aspect file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("aspect file " + path.string() + ": " + e.what());
    }
    AspectFile file;
    file.task_name = j.at("task_name").get<std::string>();
    file.corpus_digest = j.value("corpus_digest", "");
    std::string prov = j.value("provenance", "offline");
    AspectProvenance provenance = prov == "online"   ? AspectProvenance::Online
                                  : prov == "manual" ? AspectProvenance::Manual
                                                     : AspectProvenance::Offline;
    file.aspects = AspectSet::make(j.at("aspects").get<std::vector<std::string>>(), provenance);
    return file;
}

} // namespace sc2
