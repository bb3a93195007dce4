#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sc2/bench.hpp"
#include "sc2/errors.hpp"
#include "sc2/text.hpp"

namespace sc2 {

// ---------------------------------------------------------------------------
// Minimal TOML reader
// ---------------------------------------------------------------------------
// Covers what run configs need: [section] headers, bare keys, basic strings
// with escapes, integers, floats, booleans, and single-line arrays of
// scalars. Keys flatten to "section.key".

struct TomlValue {
    std::variant<std::string, int64_t, double, bool, std::vector<TomlValue>> data;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_int() const { return std::holds_alternative<int64_t>(data); }
    bool is_float() const { return std::holds_alternative<double>(data); }
    bool is_bool() const { return std::holds_alternative<bool>(data); }
    bool is_array() const { return std::holds_alternative<std::vector<TomlValue>>(data); }
};

class Toml {
public:
    static Toml parse(std::string_view body) {
        Toml toml;
        std::string section;
        long line_no = 0;
        for (const std::string& raw : text::split_lines(body)) {
            ++line_no;
            std::string line = strip_comment(raw);
            std::string t = text::trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": unterminated section header");
                section = text::trim(t.substr(1, t.size() - 2));
                if (section.empty())
                    throw ConfigError("config line " + std::to_string(line_no) + ": empty section");
                continue;
            }
            size_t eq = find_unquoted(t, '=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            std::string key = text::trim(t.substr(0, eq));
            std::string value = text::trim(t.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            std::string full = section.empty() ? key : section + "." + key;
            toml.values_[full] = parse_value(value, line_no);
        }
        return toml;
    }

    static Toml load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const {
        const TomlValue& v = require(key);
        if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
        return std::get<std::string>(v.data);
    }
    std::string get_string_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    int64_t get_int(const std::string& key) const {
        const TomlValue& v = require(key);
        if (!v.is_int()) throw ConfigError("config key '" + key + "' must be an integer");
        return std::get<int64_t>(v.data);
    }
    int64_t get_int_or(const std::string& key, int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    double get_double(const std::string& key) const {
        const TomlValue& v = require(key);
        if (v.is_int()) return static_cast<double>(std::get<int64_t>(v.data));
        if (!v.is_float()) throw ConfigError("config key '" + key + "' must be a number");
        return std::get<double>(v.data);
    }

    bool get_bool(const std::string& key) const {
        const TomlValue& v = require(key);
        if (!v.is_bool()) throw ConfigError("config key '" + key + "' must be a boolean");
        return std::get<bool>(v.data);
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    std::vector<std::string> get_string_array(const std::string& key) const {
        const TomlValue& v = require(key);
        if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
        std::vector<std::string> out;
        for (const TomlValue& e : std::get<std::vector<TomlValue>>(v.data)) {
            if (!e.is_string())
                throw ConfigError("config key '" + key + "' must be an array of strings");
            out.push_back(std::get<std::string>(e.data));
        }
        return out;
    }

    std::vector<int64_t> get_int_array(const std::string& key) const {
        const TomlValue& v = require(key);
        if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
        std::vector<int64_t> out;
        for (const TomlValue& e : std::get<std::vector<TomlValue>>(v.data)) {
            if (!e.is_int())
                throw ConfigError("config key '" + key + "' must be an array of integers");
            out.push_back(std::get<int64_t>(e.data));
        }
        return out;
    }

private:
    const TomlValue& require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config key '" + key + "' is missing");
        return it->second;
    }

    static std::string strip_comment(const std::string& line) {
        bool in_string = false;
        for (size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
            if (c == '#' && !in_string) return line.substr(0, i);
        }
        return line;
    }

    static size_t find_unquoted(const std::string& s, char target) {
        bool in_string = false;
        for (size_t i = 0; i < s.size(); ++i) {
            char c = s[i];
            if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
            if (c == target && !in_string) return i;
        }
        return std::string::npos;
    }

    static TomlValue parse_value(const std::string& raw, long line_no) {
        std::string v = text::trim(raw);
        if (v.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty value");
        if (v.front() == '"') return TomlValue{parse_string(v, line_no)};
        if (v.front() == '[') return TomlValue{parse_array(v, line_no)};
        if (v == "true") return TomlValue{true};
        if (v == "false") return TomlValue{false};
        bool is_float = v.find('.') != std::string::npos || v.find('e') != std::string::npos ||
                        v.find('E') != std::string::npos;
        try {
            if (is_float) return TomlValue{std::stod(v)};
            return TomlValue{static_cast<int64_t>(std::stoll(v))};
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(line_no) + ": bad value '" + v + "'");
        }
    }

    static std::string parse_string(const std::string& v, long line_no) {
        if (v.size() < 2 || v.back() != '"')
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated string");
        std::string out;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            char c = v[i];
            if (c == '\\' && i + 1 < v.size()) {
                char n = v[i + 1];
                switch (n) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case 'r': out.push_back('\r'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default:
                        throw ConfigError("config line " + std::to_string(line_no) +
                                          ": unknown escape \\" + std::string(1, n));
                }
                ++i;
                continue;
            }
            out.push_back(c);
        }
        return out;
    }

    static std::vector<TomlValue> parse_array(const std::string& v, long line_no) {
        if (v.size() < 2 || v.back() != ']')
            throw ConfigError("config line " + std::to_string(line_no) + ": unterminated array");
        std::vector<TomlValue> out;
        std::string body = v.substr(1, v.size() - 2);
        std::string cur;
        bool in_string = false;
        for (size_t i = 0; i < body.size(); ++i) {
            char c = body[i];
            if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
            if (c == ',' && !in_string) {
                if (!text::trim(cur).empty()) out.push_back(parse_value(text::trim(cur), line_no));
                cur.clear();
                continue;
            }
            cur.push_back(c);
        }
        if (!text::trim(cur).empty()) out.push_back(parse_value(text::trim(cur), line_no));
        return out;
    }

    std::map<std::string, TomlValue> values_;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class BackendMode { Mock, Live };

struct RunConfig {
    DatasetSpec dataset;
    EvalConfig eval;

    BackendMode backend_mode = BackendMode::Mock;
    std::filesystem::path mock_script;
    std::string model_id = "mock";

    std::filesystem::path output_dir = "out";
    std::filesystem::path templates_dir = "templates";
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> fewshot_file;

    // offline aspect building
    std::filesystem::path aspect_corpus;  // defaults to the dataset path
    long aspect_corpus_size = 50;
    std::filesystem::path aspect_out;

    std::vector<int> sweep_c_values;
};

/// Command-line overrides applied on top of a config file.
struct ConfigOverrides {
    std::optional<uint64_t> seed;
    std::optional<int> parallelism;
    std::optional<std::string> cache_dir;
    std::optional<std::string> templates_dir;
    std::vector<int> c_values;
};

inline std::vector<FewshotExample> load_fewshot_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open few-shot file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("few-shot file " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw ConfigError("few-shot file must be a JSON array");
    std::vector<FewshotExample> out;
    for (const nlohmann::json& e : j) {
        FewshotExample ex;
        ex.query = e.at("query").get<std::string>();
        ex.left = e.at("left").get<std::string>();
        ex.right = e.at("right").get<std::string>();
        ex.answer = e.value("answer", "");
        ex.table = e.value("table", "");
        out.push_back(std::move(ex));
    }
    return out;
}

/// Input paths in a config resolve relative to the config file's directory;
/// output_dir and cache_dir stay relative to the working directory.
inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const ConfigOverrides& overrides = {}) {
    Toml toml = Toml::load(path);
    RunConfig cfg;
    std::filesystem::path base = path.parent_path();
    auto resolve = [&base](const std::filesystem::path& p) {
        return p.empty() || p.is_absolute() ? p : base / p;
    };

    cfg.dataset.name = toml.get_string("dataset.name");
    cfg.dataset.kind =
        TaskKind::make(task_family_from_string(toml.get_string("dataset.kind")), cfg.dataset.name);
    cfg.dataset.path = resolve(toml.get_string("dataset.path"));
    if (toml.has("dataset.expected_count"))
        cfg.dataset.expected_count = toml.get_int("dataset.expected_count");

    MethodTag method;
    method.method = method_from_string(toml.get_string("method.tag"));
    if (toml.has("method.selection"))
        method.selection_opt = selection_from_string(toml.get_string("method.selection"));
    if (toml.has("method.sample_count"))
        method.sample_count_opt = static_cast<int>(toml.get_int("method.sample_count"));
    if (toml.has("method.selfcon_k"))
        method.selfcon_k_opt = static_cast<int>(toml.get_int("method.selfcon_k"));
    if (toml.has("method.fewshot_k"))
        method.fewshot_k_opt = static_cast<int>(toml.get_int("method.fewshot_k"));
    cfg.eval.method = method;

    cfg.eval.aspect_source =
        aspect_source_from_string(toml.get_string_or("aspects.source", "none"));
    if (toml.has("aspects.list")) cfg.eval.manual_aspects = toml.get_string_array("aspects.list");
    if (toml.has("aspects.file")) cfg.eval.aspect_file = resolve(toml.get_string("aspects.file"));
    cfg.eval.online_aspect_samples =
        static_cast<int>(toml.get_int_or("aspects.online_samples", 8));
    cfg.aspect_corpus = resolve(toml.get_string_or("aspects.corpus", ""));
    cfg.aspect_corpus_size = toml.get_int_or("aspects.corpus_size", 50);
    cfg.aspect_out = resolve(toml.get_string_or("aspects.file", ""));

    std::string mode = text::lower_ascii(toml.get_string_or("backend.mode", "mock"));
    if (mode == "mock") {
        cfg.backend_mode = BackendMode::Mock;
        cfg.mock_script = resolve(toml.get_string("backend.mock_script"));
    } else if (mode == "live") {
        cfg.backend_mode = BackendMode::Live;
    } else {
        throw ConfigError("backend.mode must be \"mock\" or \"live\"");
    }
    cfg.model_id = toml.get_string_or("backend.model_id", mode == "mock" ? "mock" : "");
    if (cfg.backend_mode == BackendMode::Live && cfg.model_id.empty())
        throw ConfigError("live backend needs backend.model_id");

    cfg.eval.seed = static_cast<uint64_t>(toml.get_int_or("run.seed", 0));
    cfg.eval.rounds = static_cast<int>(toml.get_int_or("run.rounds", 1));
    long sample_n = toml.get_int_or("run.sample_n", 0);
    if (sample_n > 0) cfg.eval.sample_n = static_cast<size_t>(sample_n);
    cfg.eval.parallelism = static_cast<int>(toml.get_int_or("run.parallelism", 1));
    cfg.output_dir = toml.get_string_or("run.output_dir", "out");
    cfg.templates_dir = resolve(toml.get_string_or("run.templates", "templates"));
    std::string cache = toml.get_string_or("run.cache_dir", "");
    if (cache.empty()) {
        const char* env = std::getenv("CACHE_DIR");
        if (env != nullptr && *env != '\0') cache = env;
    }
    if (!cache.empty()) cfg.cache_dir = cache;
    std::string fewshot = toml.get_string_or("run.fewshot_file", "");
    if (!fewshot.empty()) cfg.fewshot_file = resolve(fewshot);
    if (toml.has("run.c_values")) {
        for (int64_t v : toml.get_int_array("run.c_values"))
            cfg.sweep_c_values.push_back(static_cast<int>(v));
    }

    if (overrides.seed) cfg.eval.seed = *overrides.seed;
    if (overrides.parallelism) cfg.eval.parallelism = *overrides.parallelism;
    if (overrides.cache_dir) cfg.cache_dir = *overrides.cache_dir;
    if (overrides.templates_dir) cfg.templates_dir = *overrides.templates_dir;
    if (!overrides.c_values.empty()) cfg.sweep_c_values = overrides.c_values;

    if (cfg.fewshot_file) cfg.eval.fewshot = load_fewshot_file(*cfg.fewshot_file);
    return cfg;
}

} // namespace sc2
