#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sc2/core.hpp"
#include "sc2/errors.hpp"
#include "sc2/text.hpp"

namespace sc2 {

/// Prediction strategies. SelfCon shares CoT0's template; the difference is
/// sampling and voting, not the prompt.
enum class Method { DP, DPAspects, CoT0, CoT1, SelfCon, SC2 };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::DP: return "DP";
        case Method::DPAspects: return "DPAspects";
        case Method::CoT0: return "CoT0";
        case Method::CoT1: return "CoT1";
        case Method::SelfCon: return "SelfCon";
        case Method::SC2: return "SC2";
    }
    return "unknown";
}

inline Method method_from_string(std::string_view s) {
    std::string v = text::lower_ascii(text::trim(s));
    if (v == "dp") return Method::DP;
    if (v == "dpaspects" || v == "dp_aspects" || v == "dp-aspects") return Method::DPAspects;
    if (v == "cot0" || v == "cot-0-shot") return Method::CoT0;
    if (v == "cot1" || v == "cot-1-shot") return Method::CoT1;
    if (v == "selfcon" || v == "cot-selfcon") return Method::SelfCon;
    if (v == "sc2") return Method::SC2;
    throw ConfigError("unknown method: " + std::string(s));
}

/// One user-supplied exemplar. `answer` is the full model-style response;
/// `table` (markdown) is only needed when the exemplar feeds SC2 prompts.
struct FewshotExample {
    std::string query;
    std::string left;
    std::string right;
    std::string answer;
    std::string table;
};

struct ParsedPreference {
    PreferenceLabel label;
    std::string rationale;
};

struct TableParse {
    ComparisonTable table;
    std::vector<std::string> repairs;
};

// ---------------------------------------------------------------------------
// Canonical table grammar
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::string_view kEmDash = "—";

inline bool starts_with_at(std::string_view s, size_t pos, std::string_view prefix) {
    return s.size() - pos >= prefix.size() && s.substr(pos, prefix.size()) == prefix;
}

} // namespace detail

/// Escape a cell for the canonical grammar: backslash, pipe and em-dash get
/// a backslash prefix; an empty cell renders as a bare em-dash.
inline std::string escape_table_cell(std::string_view cell) {
    if (cell.empty()) return std::string(detail::kEmDash);
    std::string out;
    out.reserve(cell.size());
    size_t i = 0;
    while (i < cell.size()) {
        if (cell[i] == '\\' || cell[i] == '|') {
            out.push_back('\\');
            out.push_back(cell[i]);
            ++i;
        } else if (detail::starts_with_at(cell, i, detail::kEmDash)) {
            out.push_back('\\');
            out += detail::kEmDash;
            i += detail::kEmDash.size();
        } else {
            out.push_back(cell[i]);
            ++i;
        }
    }
    return out;
}

inline std::string unescape_table_cell(std::string_view cell) {
    if (cell == detail::kEmDash) return "";  // bare em-dash means empty
    std::string out;
    out.reserve(cell.size());
    size_t i = 0;
    while (i < cell.size()) {
        if (cell[i] == '\\' && i + 1 < cell.size()) {
            if (cell[i + 1] == '\\' || cell[i + 1] == '|') {
                out.push_back(cell[i + 1]);
                i += 2;
                continue;
            }
            if (detail::starts_with_at(cell, i + 1, detail::kEmDash)) {
                out += detail::kEmDash;
                i += 1 + detail::kEmDash.size();
                continue;
            }
        }
        out.push_back(cell[i]);
        ++i;
    }
    return out;
}

/// Deterministic canonical markdown for a table. parse_table inverts this
/// exactly for any valid table (cells single-line and trimmed).
inline std::string render_table(const ComparisonTable& table) {
    std::ostringstream out;
    out << "| Aspect | Unique to A | Unique to B | Shared |\n";
    out << "| --- | --- | --- | --- |\n";
    for (const ComparisonRow& row : table.rows) {
        out << "| " << escape_table_cell(row.aspect) << " | " << escape_table_cell(row.left_unique)
            << " | " << escape_table_cell(row.right_unique) << " | "
            << escape_table_cell(row.shared) << " |\n";
    }
    return out.str();
}

namespace detail {

inline bool line_has_unescaped_pipe(std::string_view line) {
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\') {
            ++i;
            continue;
        }
        if (line[i] == '|') return true;
    }
    return false;
}

/// Split a row into raw (still escaped) cells on unescaped pipes; outer
/// empty cells from leading/trailing pipes are dropped.
inline std::vector<std::string> split_table_row(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && i + 1 < line.size()) {
            cur.push_back(line[i]);
            cur.push_back(line[i + 1]);
            ++i;
            continue;
        }
        if (line[i] == '|') {
            cells.push_back(text::trim(cur));
            cur.clear();
            continue;
        }
        cur.push_back(line[i]);
    }
    cells.push_back(text::trim(cur));
    if (!cells.empty() && cells.front().empty()) cells.erase(cells.begin());
    if (!cells.empty() && cells.back().empty()) cells.pop_back();
    return cells;
}

inline bool is_separator_cell(std::string_view cell) {
    if (cell.empty()) return false;
    size_t i = 0;
    size_t dashes = 0;
    if (cell[i] == ':') ++i;
    while (i < cell.size() && cell[i] == '-') {
        ++i;
        ++dashes;
    }
    if (i < cell.size() && cell[i] == ':') ++i;
    return i == cell.size() && dashes >= 1;
}

inline bool is_separator_row(const std::vector<std::string>& cells) {
    if (cells.empty()) return false;
    for (const std::string& c : cells) {
        if (!is_separator_cell(c)) return false;
    }
    return true;
}

inline bool is_canonical_header(const std::vector<std::string>& cells) {
    if (cells.size() != 4) return false;
    return text::canonical_phrase(cells[0]) == "aspect" &&
           text::canonical_phrase(cells[1]) == "unique to a" &&
           text::canonical_phrase(cells[2]) == "unique to b" &&
           text::canonical_phrase(cells[3]) == "shared";
}

} // namespace detail

/// Extract the first well-formed 4-column markdown table and align its rows
/// with the given aspects. Format drift is repaired and recorded rather than
/// rejected: missing rows become empty rows, unknown or duplicate rows are
/// dropped. Fails only when no 4-column table exists or fewer than half of
/// the aspects can be matched.
inline TableParse parse_table(std::string_view raw, const AspectSet& aspects) {
    std::vector<std::string> lines = text::split_lines(raw);

    std::vector<std::string> canon_aspects;
    canon_aspects.reserve(aspects.size());
    for (const std::string& a : aspects.aspects) canon_aspects.push_back(text::canonical_phrase(a));

    bool saw_four_column_run = false;
    size_t i = 0;
    while (i < lines.size()) {
        if (!detail::line_has_unescaped_pipe(lines[i])) {
            ++i;
            continue;
        }
        size_t run_end = i;
        while (run_end < lines.size() && detail::line_has_unescaped_pipe(lines[run_end])) ++run_end;

        std::vector<std::vector<std::string>> rows;
        for (size_t k = i; k < run_end; ++k) {
            std::vector<std::string> cells = detail::split_table_row(lines[k]);
            if (cells.empty() || detail::is_separator_row(cells)) continue;
            rows.push_back(std::move(cells));
        }
        bool has_four = false;
        for (const auto& r : rows) {
            if (r.size() == 4) has_four = true;
        }
        if (has_four) {
            saw_four_column_run = true;
            TableParse parse;
            std::vector<std::optional<ComparisonRow>> matched(aspects.size());
            bool header_skipped = false;
            for (const auto& cells : rows) {
                if (!header_skipped && detail::is_canonical_header(cells)) {
                    header_skipped = true;
                    continue;
                }
                if (cells.size() != 4) {
                    parse.repairs.push_back("dropped row with " + std::to_string(cells.size()) +
                                            " cells");
                    continue;
                }
                std::string aspect_raw = unescape_table_cell(cells[0]);
                std::string canon = text::canonical_phrase(aspect_raw);
                size_t idx = canon_aspects.size();
                for (size_t a = 0; a < canon_aspects.size(); ++a) {
                    if (canon_aspects[a] == canon) {
                        idx = a;
                        break;
                    }
                }
                if (idx == canon_aspects.size()) {
                    parse.repairs.push_back("dropped row for unknown aspect '" + aspect_raw + "'");
                    continue;
                }
                if (matched[idx]) {
                    parse.repairs.push_back("dropped duplicate row for aspect '" +
                                            aspects.aspects[idx] + "'");
                    continue;
                }
                matched[idx] = ComparisonRow{aspects.aspects[idx], unescape_table_cell(cells[1]),
                                             unescape_table_cell(cells[2]),
                                             unescape_table_cell(cells[3])};
            }
            size_t matched_count = 0;
            for (const auto& m : matched) {
                if (m) ++matched_count;
            }
            if (matched_count * 2 >= aspects.size()) {
                for (size_t a = 0; a < matched.size(); ++a) {
                    if (matched[a]) {
                        parse.table.rows.push_back(std::move(*matched[a]));
                    } else {
                        parse.table.rows.push_back(ComparisonRow{aspects.aspects[a], "", "", ""});
                        parse.repairs.push_back("filled missing row for aspect '" +
                                                aspects.aspects[a] + "' with empty cells");
                    }
                }
                return parse;
            }
        }
        i = run_end;
    }
    if (saw_four_column_run)
        throw ParseError("table matched fewer than half of the expected aspects");
    throw ParseError("no 4-column markdown table found in model output");
}

// ---------------------------------------------------------------------------
// Scaffold parsers
// ---------------------------------------------------------------------------

namespace detail {

/// Find the last line containing `scaffold` (case-insensitive) followed by a
/// lone A or B. Returns the label plus the byte offset where that line
/// starts, or nullopt.
inline std::optional<std::pair<PreferenceLabel, size_t>> scan_letter_scaffold(
    std::string_view raw, std::string_view scaffold_lower) {
    std::string lower = text::lower_ascii(raw);
    std::optional<std::pair<PreferenceLabel, size_t>> found;
    size_t line_start = 0;
    while (line_start <= lower.size()) {
        size_t line_end = lower.find('\n', line_start);
        if (line_end == std::string::npos) line_end = lower.size();
        std::string_view line(lower.data() + line_start, line_end - line_start);

        size_t pos = 0;
        while ((pos = line.find(scaffold_lower, pos)) != std::string_view::npos) {
            size_t p = pos + scaffold_lower.size();
            auto is_opener = [](char c) {
                return c == ' ' || c == '\t' || c == '"' || c == '\'' || c == '*' || c == '<' ||
                       c == '(' || c == '[';
            };
            while (p < line.size() && is_opener(line[p])) ++p;
            if (p < line.size() && (line[p] == 'a' || line[p] == 'b')) {
                char next = p + 1 < line.size() ? line[p + 1] : '\0';
                bool boundary = !((next >= 'a' && next <= 'z') || (next >= '0' && next <= '9'));
                if (boundary) {
                    found = {line[p] == 'a' ? PreferenceLabel::Left : PreferenceLabel::Right,
                             line_start};
                }
            }
            ++pos;
        }
        if (line_end == lower.size()) break;
        line_start = line_end + 1;
    }
    return found;
}

inline std::string rstrip(std::string_view s) {
    size_t e = s.size();
    while (e > 0 && static_cast<unsigned char>(s[e - 1]) <= ' ') --e;
    return std::string(s.substr(0, e));
}

} // namespace detail

/// Parse the final "Preferred:" line; the text before it is the rationale.
/// The last matching line wins, since chain-of-thought bodies often mention
/// both letters along the way.
inline ParsedPreference parse_preference(std::string_view raw) {
    auto hit = detail::scan_letter_scaffold(raw, "preferred:");
    if (!hit) throw ParseError("no 'Preferred: A|B' line found in model output");
    return ParsedPreference{hit->first, detail::rstrip(raw.substr(0, hit->second))};
}

/// Parse the comparator's "More consistent:" verdict. Left means the first
/// presented table, Right the second.
inline PreferenceLabel parse_comparator_verdict(std::string_view raw) {
    auto hit = detail::scan_letter_scaffold(raw, "more consistent:");
    if (!hit) throw ParseError("no 'More consistent: A|B' line found in model output");
    return hit->first;
}

/// Extract aspect phrases from an aspect-model response. Prefers the last
/// "Aspects:" line; otherwise treats the whole text as a list. Phrases come
/// back canonicalized, in order of appearance, duplicates included.
inline std::vector<std::string> parse_aspect_list(std::string_view raw) {
    std::string lower = text::lower_ascii(raw);
    std::vector<std::string> lines = text::split_lines(raw);
    std::vector<std::string> lower_lines = text::split_lines(lower);

    std::vector<std::string> pieces;
    size_t scaffold_line = lines.size();
    for (size_t i = lines.size(); i > 0; --i) {
        size_t pos = lower_lines[i - 1].find("aspects:");
        if (pos != std::string::npos) {
            scaffold_line = i - 1;
            std::string payload = lines[i - 1].substr(pos + std::string_view("aspects:").size());
            std::stringstream ss(payload);
            std::string piece;
            while (std::getline(ss, piece, ';')) pieces.push_back(piece);
            break;
        }
    }
    if (scaffold_line == lines.size()) {
        for (const std::string& line : lines) {
            std::string body = text::trim(line);
            // strip list markers: "- x", "* x", "3. x", "3) x"
            if (!body.empty() && (body[0] == '-' || body[0] == '*')) body = body.substr(1);
            else {
                size_t d = 0;
                while (d < body.size() && body[d] >= '0' && body[d] <= '9') ++d;
                if (d > 0 && d < body.size() && (body[d] == '.' || body[d] == ')'))
                    body = body.substr(d + 1);
            }
            std::stringstream ss(body);
            std::string piece;
            while (std::getline(ss, piece, ';')) pieces.push_back(piece);
        }
    }

    std::vector<std::string> out;
    for (const std::string& piece : pieces) {
        std::string canon = text::canonical_phrase(piece);
        if (!canon.empty()) out.push_back(std::move(canon));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Template catalog
// ---------------------------------------------------------------------------

/// One template body with {name} placeholders. Rendering binds every
/// placeholder present in the body; an unbound one is an error.
struct PromptTemplate {
    std::string name;
    std::string body;

    std::string render(const std::map<std::string, std::string>& bindings) const {
        std::string out;
        out.reserve(body.size());
        size_t i = 0;
        while (i < body.size()) {
            if (body[i] != '{') {
                out.push_back(body[i]);
                ++i;
                continue;
            }
            size_t end = body.find('}', i + 1);
            if (end == std::string::npos) {
                out.push_back(body[i]);
                ++i;
                continue;
            }
            std::string key = body.substr(i + 1, end - i - 1);
            auto it = bindings.find(key);
            if (it == bindings.end())
                throw TemplateError("template '" + name + "': placeholder {" + key +
                                    "} is not bound");
            out += it->second;
            i = end + 1;
        }
        return out;
    }
};

/// Loads the on-disk catalog: one UTF-8 file per (kind, name) under
/// <dir>/<kind>/<name>.txt. All files are loaded eagerly so a broken catalog
/// fails at startup, not mid-run.
class PromptCatalog {
public:
    explicit PromptCatalog(std::filesystem::path dir) : dir_(std::move(dir)) {
        static const char* kNames[] = {
            "preference_dp",      "preference_dp_aspects", "preference_cot0",
            "preference_cot1",    "preference_sc2",        "fewshot_example",
            "comparison",         "comparator",            "aspect_online",
            "aspect_extract",     "aspect_consolidate",
        };
        static const TaskFamily kFamilies[] = {TaskFamily::Summarization, TaskFamily::Retrieval,
                                               TaskFamily::Helpfulness, TaskFamily::Harmlessness};
        for (TaskFamily family : kFamilies) {
            for (const char* name : kNames) {
                std::filesystem::path p = dir_ / to_string(family) / (std::string(name) + ".txt");
                std::ifstream in(p, std::ios::binary);
                if (!in) throw ConfigError("template catalog: cannot open " + p.string());
                std::ostringstream buf;
                buf << in.rdbuf();
                std::string key = catalog_key(family, name);
                templates_[key] = PromptTemplate{key, buf.str()};
            }
        }
    }

    const PromptTemplate& get(TaskFamily family, std::string_view name) const {
        auto it = templates_.find(catalog_key(family, name));
        if (it == templates_.end())
            throw ConfigError("template catalog: no template " + catalog_key(family, name));
        return it->second;
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::string render_preference_prompt(const TextPairTask& task, Method method,
                                         const std::optional<AspectSet>& aspects = std::nullopt,
                                         const std::optional<ComparisonTable>& table = std::nullopt,
                                         const std::vector<FewshotExample>& fewshot = {}) const {
        TaskFamily family = task.kind.family;
        std::map<std::string, std::string> bindings = task_bindings(task);
        switch (method) {
            case Method::DP:
                return get(family, "preference_dp").render(bindings);
            case Method::CoT0:
            case Method::SelfCon:
                return get(family, "preference_cot0").render(bindings);
            case Method::DPAspects: {
                if (!aspects) throw TemplateError("DPAspects prompt requires an aspect set");
                bindings["aspects"] = aspect_lines(*aspects);
                return get(family, "preference_dp_aspects").render(bindings);
            }
            case Method::CoT1: {
                if (fewshot.size() != 1)
                    throw TemplateError("CoT1 prompt requires exactly one exemplar, got " +
                                        std::to_string(fewshot.size()));
                bindings["fewshot"] = render_fewshot_block(family, fewshot.front());
                return get(family, "preference_cot1").render(bindings);
            }
            case Method::SC2: {
                if (!table) throw TemplateError("SC2 prompt requires a comparison table");
                if (fewshot.size() > 5)
                    throw TemplateError("at most 5 few-shot exemplars are supported, got " +
                                        std::to_string(fewshot.size()));
                bindings["table"] = render_table(*table);
                std::string main = get(family, "preference_sc2").render(bindings);
                if (fewshot.empty()) return main;
                std::string out;
                for (const FewshotExample& ex : fewshot) {
                    std::map<std::string, std::string> eb{{"article", ex.query},
                                                          {"query", ex.query},
                                                          {"contextA", ex.left},
                                                          {"contextB", ex.right},
                                                          {"table", ex.table}};
                    out += get(family, "preference_sc2").render(eb);
                    out += "\nExample Answer:\n" + ex.answer + "\n\n";
                }
                out += "Now, based on the examples above, answer the following question.\n\n";
                return out + main;
            }
        }
        throw TemplateError("unhandled method");
    }

    std::string render_comparison_prompt(const TextPairTask& task, const AspectSet& aspects,
                                         const std::vector<FewshotExample>& fewshot = {}) const {
        if (aspects.aspects.empty())
            throw TemplateError("comparison prompt requires a non-empty aspect set");
        TaskFamily family = task.kind.family;
        std::map<std::string, std::string> bindings = task_bindings(task);
        bindings["aspects"] = aspect_lines(aspects);
        std::string main = get(family, "comparison").render(bindings);
        if (fewshot.empty()) return main;
        if (fewshot.size() > 5)
            throw TemplateError("at most 5 few-shot exemplars are supported, got " +
                                std::to_string(fewshot.size()));
        std::string out;
        for (const FewshotExample& ex : fewshot) {
            std::map<std::string, std::string> eb{{"article", ex.query},
                                                  {"query", ex.query},
                                                  {"contextA", ex.left},
                                                  {"contextB", ex.right},
                                                  {"aspects", bindings["aspects"]}};
            out += get(family, "comparison").render(eb);
            out += "\nExample Table:\n" + ex.table + "\n\n";
        }
        out += "Now, based on the examples above, answer the following question.\n\n";
        return out + main;
    }

    std::string render_comparator_prompt(const TextPairTask& task, const ComparisonTable& a,
                                         const ComparisonTable& b) const {
        if (a.rows.empty() || b.rows.empty())
            throw ValidationError("comparator prompt: tables must be non-empty");
        if (a.rows.size() != b.rows.size())
            throw ValidationError("comparator prompt: tables cover different aspect counts");
        std::vector<std::string> phrases;
        phrases.reserve(a.rows.size());
        for (const ComparisonRow& row : a.rows) phrases.push_back(row.aspect);
        AspectSet aspect_set = AspectSet::make(phrases, AspectProvenance::Manual);
        ValidationReport ra = validate_table(a, aspect_set);
        ValidationReport rb = validate_table(b, aspect_set);
        if (!ra.ok() || !rb.ok()) {
            const ValidationReport& bad = ra.ok() ? rb : ra;
            throw ValidationError("comparator prompt: " + bad.violations.front());
        }
        std::map<std::string, std::string> bindings = task_bindings(task);
        bindings["tableA"] = render_table(a);
        bindings["tableB"] = render_table(b);
        return get(task.kind.family, "comparator").render(bindings);
    }

    std::string render_aspect_online_prompt(const TextPairTask& task) const {
        return get(task.kind.family, "aspect_online").render(task_bindings(task));
    }

    std::string render_aspect_extract_prompt(TaskFamily family, std::string_view text_body) const {
        return get(family, "aspect_extract")
            .render({{"text", std::string(text_body)}});
    }

    std::string render_aspect_consolidate_prompt(TaskFamily family,
                                                 const std::vector<std::string>& phrases) const {
        std::string lines;
        for (const std::string& p : phrases) {
            lines += "- " + p + "\n";
        }
        if (!lines.empty()) lines.pop_back();
        return get(family, "aspect_consolidate").render({{"aspects", lines}});
    }

    /// Aspect phrases as bullet lines, escaped so they cannot break the table
    /// grammar they will be copied into.
    static std::string aspect_lines(const AspectSet& aspects) {
        std::string out;
        for (const std::string& a : aspects.aspects) {
            out += "- " + escape_table_cell(a) + "\n";
        }
        if (!out.empty()) out.pop_back();
        return out;
    }

private:
    static std::string catalog_key(TaskFamily family, std::string_view name) {
        return std::string(to_string(family)) + "/" + std::string(name);
    }

    static std::map<std::string, std::string> task_bindings(const TextPairTask& task) {
        return {{"article", task.query},
                {"query", task.query},
                {"contextA", task.left},
                {"contextB", task.right}};
    }

    std::string render_fewshot_block(TaskFamily family, const FewshotExample& ex) const {
        std::map<std::string, std::string> eb{{"article", ex.query},
                                              {"query", ex.query},
                                              {"contextA", ex.left},
                                              {"contextB", ex.right},
                                              {"answer", ex.answer}};
        return get(family, "fewshot_example").render(eb);
    }

    std::filesystem::path dir_;
    std::map<std::string, PromptTemplate> templates_;
};

} // namespace sc2
