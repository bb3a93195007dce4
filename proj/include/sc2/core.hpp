#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sc2/errors.hpp"
#include "sc2/text.hpp"

namespace sc2 {

enum class TaskFamily { Summarization, Retrieval, Helpfulness, Harmlessness };

inline const char* to_string(TaskFamily f) {
    switch (f) {
        case TaskFamily::Summarization: return "summarization";
        case TaskFamily::Retrieval: return "retrieval";
        case TaskFamily::Helpfulness: return "helpfulness";
        case TaskFamily::Harmlessness: return "harmlessness";
    }
    return "unknown";
}

inline TaskFamily task_family_from_string(std::string_view s) {
    std::string v = text::lower_ascii(text::trim(s));
    if (v == "summarization") return TaskFamily::Summarization;
    if (v == "retrieval") return TaskFamily::Retrieval;
    if (v == "helpfulness") return TaskFamily::Helpfulness;
    if (v == "harmlessness") return TaskFamily::Harmlessness;
    throw ValidationError("unknown task family: " + std::string(s));
}

/// Task identity: which prompt family applies, plus a free-form name
/// ("tldr-reddit", "trec-news", ...). The name must be non-empty.
struct TaskKind {
    TaskFamily family = TaskFamily::Summarization;
    std::string name;

    static TaskKind make(TaskFamily family, std::string name) {
        if (name.empty()) throw ValidationError("task name must be non-empty");
        return TaskKind{family, std::move(name)};
    }
};

/// Binary text preference. Serialized as "A" (Left) / "B" (Right) in prompts
/// and datasets; there is deliberately no Tie value.
enum class PreferenceLabel { Left, Right };

inline char to_side_letter(PreferenceLabel label) {
    return label == PreferenceLabel::Left ? 'A' : 'B';
}

inline PreferenceLabel label_from_letter(char c) {
    if (c == 'A' || c == 'a') return PreferenceLabel::Left;
    if (c == 'B' || c == 'b') return PreferenceLabel::Right;
    throw ParseError(std::string("preference letter must be A or B, got '") + c + "'");
}

inline PreferenceLabel flip(PreferenceLabel label) {
    return label == PreferenceLabel::Left ? PreferenceLabel::Right : PreferenceLabel::Left;
}

/// A query plus two candidate texts; the unit of evaluation.
struct TextPairTask {
    std::string id;
    TaskKind kind;
    std::string query;
    std::string left;
    std::string right;
    std::optional<PreferenceLabel> gold;
};

inline void validate_task(const TextPairTask& task) {
    if (task.left.empty() || task.right.empty())
        throw ValidationError("task '" + task.id + "': both candidate texts must be non-empty");
    if (task.kind.name.empty())
        throw ValidationError("task '" + task.id + "': task name must be non-empty");
}

enum class AspectProvenance { Online, Offline, Manual };

inline const char* to_string(AspectProvenance p) {
    switch (p) {
        case AspectProvenance::Online: return "online";
        case AspectProvenance::Offline: return "offline";
        case AspectProvenance::Manual: return "manual";
    }
    return "unknown";
}

/// Ordered list of short phrases guiding the comparison. At most 16 entries,
/// no two of which share a canonical form.
struct AspectSet {
    std::vector<std::string> aspects;
    AspectProvenance provenance = AspectProvenance::Manual;

    static AspectSet make(std::vector<std::string> phrases, AspectProvenance provenance) {
        if (phrases.empty() || phrases.size() > 16)
            throw ValidationError("aspect set must hold between 1 and 16 phrases, got " +
                                  std::to_string(phrases.size()));
        std::vector<std::string> seen;
        for (const std::string& p : phrases) {
            std::string canon = text::canonical_phrase(p);
            if (canon.empty())
                throw ValidationError("aspect phrase '" + p + "' is empty after canonicalization");
            for (const std::string& prev : seen) {
                if (prev == canon)
                    throw ValidationError("duplicate canonical aspect '" + canon + "'");
            }
            seen.push_back(std::move(canon));
        }
        return AspectSet{std::move(phrases), provenance};
    }

    size_t size() const { return aspects.size(); }
};

/// One aspect-level comparison. Cells may be empty, meaning "nothing noted";
/// cell text is single-line and trimmed.
struct ComparisonRow {
    std::string aspect;
    std::string left_unique;
    std::string right_unique;
    std::string shared;

    bool operator==(const ComparisonRow&) const = default;
};

/// The structured intermediate representation: one row per aspect, in the
/// same order as the governing AspectSet.
struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    int source_sample_index = 0;

    bool operator==(const ComparisonTable&) const = default;
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Structural check of a table against its aspect set. Violations are data,
/// not failures: an empty report means rows align one-to-one, in order.
inline ValidationReport validate_table(const ComparisonTable& table, const AspectSet& aspects) {
    ValidationReport report;
    if (table.rows.size() != aspects.size()) {
        report.violations.push_back("row count " + std::to_string(table.rows.size()) +
                                    " != aspect count " + std::to_string(aspects.size()));
    }
    std::vector<std::string> canon_aspects;
    canon_aspects.reserve(aspects.size());
    for (const std::string& a : aspects.aspects) canon_aspects.push_back(text::canonical_phrase(a));

    for (size_t i = 0; i < table.rows.size(); ++i) {
        std::string canon = text::canonical_phrase(table.rows[i].aspect);
        bool in_set = false;
        for (const std::string& a : canon_aspects) {
            if (a == canon) {
                in_set = true;
                break;
            }
        }
        if (!in_set) {
            report.violations.push_back("row " + std::to_string(i) + ": unknown aspect '" +
                                        table.rows[i].aspect + "'");
        } else if (i < canon_aspects.size() && canon != canon_aspects[i]) {
            report.violations.push_back("row " + std::to_string(i) + ": aspect '" +
                                        table.rows[i].aspect + "' out of order (expected '" +
                                        aspects.aspects[i] + "')");
        }
    }
    return report;
}

/// Exchange the two sides; the gold label flips with them. An involution.
inline TextPairTask swap_sides(const TextPairTask& task) {
    TextPairTask out = task;
    std::swap(out.left, out.right);
    if (out.gold) out.gold = flip(*out.gold);
    return out;
}

inline ComparisonTable swap_sides(const ComparisonTable& table) {
    ComparisonTable out = table;
    for (ComparisonRow& row : out.rows) std::swap(row.left_unique, row.right_unique);
    return out;
}

} // namespace sc2
