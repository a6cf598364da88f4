#include "chatnet/config.hpp"

#include "chatnet/error.hpp"
#include "chatnet/rng.hpp"
#include "chatnet/sentiment.hpp"
#include "chatnet/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace chatnet {

namespace toml {
namespace {

[[noreturn]] void syntax_error(std::size_t line, const std::string& what) {
    fail(Errc::config_error, "config line " + std::to_string(line) + ": " + what);
}

bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    Document document() {
        Document doc;
        doc[""];
        std::string current;
        std::set<std::string> declared;
        for (;;) {
            skip_blank();
            if (eof()) break;
            const char c = s_[i_];
            if (c == '#') {
                skip_comment();
            } else if (c == '\n') {
                advance();
            } else if (c == '[') {
                advance();
                const auto close = s_.find(']', i_);
                if (close == std::string_view::npos) syntax_error(line_, "unterminated table header");
                std::string name = trim(s_.substr(i_, close - i_));
                if (name.empty()) syntax_error(line_, "empty table name");
                for (char ch : name)
                    if (!bare_key_char(ch) && ch != '.') syntax_error(line_, "bad table name '" + name + "'");
                if (!declared.insert(name).second) syntax_error(line_, "table [" + name + "] declared twice");
                i_ = close + 1;
                current = name;
                doc[current];
                end_of_line();
            } else {
                const std::string key = parse_key();
                skip_blank();
                if (eof() || s_[i_] != '=') syntax_error(line_, "expected '=' after key '" + key + "'");
                advance();
                skip_blank();
                Value v = value();
                if (!doc[current].emplace(key, std::move(v)).second)
                    syntax_error(line_, "key '" + key + "' defined twice");
                end_of_line();
            }
        }
        return doc;
    }

    // A single value spanning the whole input.
    std::optional<Value> sole_value() {
        try {
            skip_blank();
            Value v = value();
            skip_blank();
            if (!eof()) return std::nullopt;
            return v;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

private:
    bool eof() const { return i_ >= s_.size(); }

    void advance() {
        if (s_[i_] == '\n') ++line_;
        ++i_;
    }

    void skip_blank() {
        while (!eof() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
    }

    void skip_comment() {
        while (!eof() && s_[i_] != '\n') ++i_;
    }

    void end_of_line() {
        skip_blank();
        if (!eof() && s_[i_] == '#') skip_comment();
        if (eof()) return;
        if (s_[i_] != '\n') syntax_error(line_, "unexpected text after value");
        advance();
    }

    static std::string trim(std::string_view v) {
        const auto b = v.find_first_not_of(" \t");
        if (b == std::string_view::npos) return {};
        return std::string(v.substr(b, v.find_last_not_of(" \t") - b + 1));
    }

    std::string parse_key() {
        if (s_[i_] == '"') return basic_string();
        const std::size_t start = i_;
        while (!eof() && bare_key_char(s_[i_])) ++i_;
        if (start == i_) syntax_error(line_, "expected a key");
        return std::string(s_.substr(start, i_ - start));
    }

    Value value() {
        if (eof()) syntax_error(line_, "missing value");
        const char c = s_[i_];
        if (c == '"') {
            if (s_.substr(i_, 3) == "\"\"\"") return {multiline_string()};
            return {basic_string()};
        }
        if (c == '\'') return {literal_string()};
        if (c == '[') return {array()};
        if (s_.substr(i_, 4) == "true") {
            i_ += 4;
            return {true};
        }
        if (s_.substr(i_, 5) == "false") {
            i_ += 5;
            return {false};
        }
        return number();
    }

    char escape() {
        if (eof()) syntax_error(line_, "unterminated escape");
        const char e = s_[i_++];
        switch (e) {
        case 'n': return '\n';
        case 't': return '\t';
        case 'r': return '\r';
        case '"': return '"';
        case '\\': return '\\';
        default: syntax_error(line_, std::string("unsupported escape \\") + e);
        }
    }

    std::string basic_string() {
        ++i_;  // opening quote
        std::string out;
        for (;;) {
            if (eof() || s_[i_] == '\n') syntax_error(line_, "unterminated string");
            const char c = s_[i_++];
            if (c == '"') return out;
            out += c == '\\' ? escape() : c;
        }
    }

    // 'text' with no escapes.
    std::string literal_string() {
        const std::size_t start = ++i_;
        while (!eof() && s_[i_] != '\'' && s_[i_] != '\n') ++i_;
        if (eof() || s_[i_] != '\'') syntax_error(line_, "unterminated literal string");
        return std::string(s_.substr(start, i_++ - start));
    }

    std::string multiline_string() {
        i_ += 3;
        if (!eof() && s_[i_] == '\n') advance();
        std::string out;
        for (;;) {
            if (eof()) syntax_error(line_, "unterminated multi-line string");
            if (s_.substr(i_, 3) == "\"\"\"") {
                i_ += 3;
                return out;
            }
            const char c = s_[i_];
            if (c == '\\') {
                ++i_;
                out += escape();
                continue;
            }
            if (c == '\r' && i_ + 1 < s_.size() && s_[i_ + 1] == '\n') {
                ++i_;
                continue;
            }
            out += c;
            advance();
        }
    }

    void skip_array_space() {
        for (;;) {
            while (!eof() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r' || s_[i_] == '\n')) advance();
            if (!eof() && s_[i_] == '#') {
                skip_comment();
                continue;
            }
            return;
        }
    }

    Array array() {
        ++i_;
        Array out;
        for (;;) {
            skip_array_space();
            if (eof()) syntax_error(line_, "unterminated array");
            if (s_[i_] == ']') {
                ++i_;
                return out;
            }
            out.push_back(value());
            skip_array_space();
            if (eof()) syntax_error(line_, "unterminated array");
            if (s_[i_] == ',') {
                ++i_;
            } else if (s_[i_] != ']') {
                syntax_error(line_, "expected ',' or ']' in array");
            }
        }
    }

    Value number() {
        const std::size_t start = i_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '+' || s_[i_] == '-' ||
                          s_[i_] == '.' || s_[i_] == '_'))
            ++i_;
        std::string text(s_.substr(start, i_ - start));
        text.erase(std::remove(text.begin(), text.end(), '_'), text.end());
        if (text.empty()) syntax_error(line_, "expected a value");
        const char* first = text.data();
        const char* last = text.data() + text.size();
        if (*first == '+') ++first;
        const bool is_float = text.find_first_of(".eE") != std::string::npos;
        if (is_float) {
            double d = 0;
            auto [p, ec] = std::from_chars(first, last, d);
            if (ec != std::errc() || p != last) syntax_error(line_, "bad number '" + text + "'");
            return {d};
        }
        std::int64_t n = 0;
        auto [p, ec] = std::from_chars(first, last, n);
        if (ec != std::errc() || p != last) syntax_error(line_, "bad value '" + text + "'");
        return {n};
    }

    std::string_view s_;
    std::size_t i_ = 0;
    std::size_t line_ = 1;
};

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
        }
    }
    return out + "\"";
}

} // namespace

Document parse(std::string_view text) {
    return Parser(text).document();
}

Value parse_value_lenient(std::string_view text) {
    if (auto v = Parser(text).sole_value()) return *v;
    const auto b = text.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {std::string()};
    return {std::string(text.substr(b, text.find_last_not_of(" \t") - b + 1))};
}

std::string format_value(const Value& value) {
    struct Visitor {
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(std::int64_t n) const { return std::to_string(n); }
        std::string operator()(double d) const {
            char buf[64];
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
            std::string out(buf, p);
            if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
            return out;
        }
        std::string operator()(const std::string& s) const { return quote(s); }
        std::string operator()(const Array& a) const {
            std::string out = "[";
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (i) out += ", ";
                out += format_value(a[i]);
            }
            return out + "]";
        }
    };
    return std::visit(Visitor{}, value.data);
}

void apply_override(Document& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0)
        fail(Errc::config_error, "override '" + std::string(assignment) + "' is not of the form key=value");
    std::string path(assignment.substr(0, eq));
    path.erase(std::remove_if(path.begin(), path.end(), [](char c) { return c == ' ' || c == '\t'; }), path.end());
    const auto dot = path.rfind('.');
    const std::string table = dot == std::string::npos ? std::string() : path.substr(0, dot);
    const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    if (key.empty()) fail(Errc::config_error, "override '" + std::string(assignment) + "' has an empty key");
    doc[table][key] = parse_value_lenient(assignment.substr(eq + 1));
}

} // namespace toml

std::string_view task_name(TaskKind kind) {
    return kind == TaskKind::dmc ? "dmc" : "sentiment";
}

namespace {

using toml::Array;
using toml::Document;
using toml::Table;
using toml::Value;

[[noreturn]] void config_error(const std::string& what) {
    fail(Errc::config_error, what);
}

std::string qualified(std::string_view table, std::string_view key) {
    return table.empty() ? std::string(key) : std::string(table) + "." + std::string(key);
}

// Reads typed keys from one table and rejects keys nobody asked for.
class TableReader {
public:
    TableReader(const Document& doc, std::string name) : name_(std::move(name)) {
        if (auto it = doc.find(name_); it != doc.end()) table_ = &it->second;
    }
    TableReader(const TableReader&) = delete;
    TableReader& operator=(const TableReader&) = delete;

    ~TableReader() noexcept(false) {
        if (std::uncaught_exceptions() > 0 || table_ == nullptr) return;
        for (const auto& [key, _] : *table_)
            if (!used_.count(key)) config_error("unknown config key '" + qualified(name_, key) + "'");
    }

    bool has(std::string_view key) const { return table_ && table_->find(key) != table_->end(); }

    const Value* find(std::string_view key) {
        if (!table_) return nullptr;
        auto it = table_->find(key);
        if (it == table_->end()) return nullptr;
        used_.insert(std::string(key));
        return &it->second;
    }

    void read(std::string_view key, std::string& out) {
        if (const Value* v = find(key)) out = as_string(key, *v);
    }
    void read(std::string_view key, bool& out) {
        if (const Value* v = find(key)) {
            if (auto* b = std::get_if<bool>(&v->data)) out = *b;
            else type_error(key, "a boolean");
        }
    }
    void read(std::string_view key, double& out) {
        if (const Value* v = find(key)) out = as_double(key, *v);
    }
    void read(std::string_view key, int& out) {
        if (const Value* v = find(key)) out = static_cast<int>(as_int(key, *v, INT32_MIN, INT32_MAX));
    }
    void read(std::string_view key, std::size_t& out) {
        if (const Value* v = find(key)) out = static_cast<std::size_t>(as_int(key, *v, 0, INT64_MAX));
    }
    void read_u64(std::string_view key, std::uint64_t& out) {
        if (const Value* v = find(key)) out = static_cast<std::uint64_t>(as_int(key, *v, 0, INT64_MAX));
    }
    // 0 means "none".
    template <class T>
    void read_optional(std::string_view key, std::optional<T>& out) {
        if (const Value* v = find(key)) {
            const auto n = as_int(key, *v, 0, INT32_MAX);
            out = n == 0 ? std::nullopt : std::optional<T>(static_cast<T>(n));
        }
    }
    void read(std::string_view key, std::vector<std::string>& out) {
        if (const Value* v = find(key)) {
            const auto* a = std::get_if<Array>(&v->data);
            if (!a) type_error(key, "an array of strings");
            out.clear();
            for (const auto& e : *a) out.push_back(as_string(key, e));
        }
    }
    void read(std::string_view key, std::vector<int>& out) {
        if (const Value* v = find(key)) {
            const auto* a = std::get_if<Array>(&v->data);
            if (!a) type_error(key, "an array of integers");
            out.clear();
            for (const auto& e : *a) out.push_back(static_cast<int>(as_int(key, e, INT32_MIN, INT32_MAX)));
        }
    }

    const Table* table() const { return table_; }
    void mark_used(const std::string& key) { used_.insert(key); }

private:
    [[noreturn]] void type_error(std::string_view key, std::string_view expected) const {
        config_error("config key '" + qualified(name_, key) + "' must be " + std::string(expected));
    }
    std::string as_string(std::string_view key, const Value& v) const {
        if (auto* s = std::get_if<std::string>(&v.data)) return *s;
        type_error(key, "a string");
    }
    double as_double(std::string_view key, const Value& v) const {
        if (auto* d = std::get_if<double>(&v.data)) return *d;
        if (auto* n = std::get_if<std::int64_t>(&v.data)) return static_cast<double>(*n);
        type_error(key, "a number");
    }
    std::int64_t as_int(std::string_view key, const Value& v, std::int64_t lo, std::int64_t hi) const {
        auto* n = std::get_if<std::int64_t>(&v.data);
        if (!n) type_error(key, "an integer");
        if (*n < lo || *n > hi)
            config_error("config key '" + qualified(name_, key) + "' is out of range: " + std::to_string(*n));
        return *n;
    }

    std::string name_;
    const Table* table_ = nullptr;
    std::set<std::string> used_;
};

constexpr std::string_view template_fields[] = {"forward_header", "reference_block", "answer_block", "right_prompt",
                                                "wrong_prompt",   "leader_block",    "separator"};

BackendConfig read_backend(const Document& doc, const std::string& table_name) {
    TableReader r(doc, table_name);
    if (r.has("api_key"))
        config_error("[" + table_name + "] must not contain api_key; set the environment variable named by api_key_env");
    std::string kind = "scripted";
    r.read("kind", kind);
    BackendConfig cfg;
    if (kind == "http") {
        HttpSettings h;
        r.read("endpoint", h.endpoint);
        r.read("model", h.model);
        r.read("temperature", h.temperature);
        r.read("timeout_s", h.timeout_s);
        r.read("max_retries", h.max_retries);
        r.read("backoff_s", h.backoff_s);
        r.read("api_key_env", h.api_key_env);
        if (h.endpoint.empty()) config_error("[" + table_name + "] needs an endpoint");
        cfg.binding.settings = std::move(h);
        return cfg;
    }
    if (kind != "scripted") config_error("[" + table_name + "] kind must be \"scripted\" or \"http\"");
    ScriptedSettings s;
    s.policy = parse_policy(*r.table());
    for (std::string_view key : {"policy", "category", "error_rate", "level", "jitter", "replies"})
        if (r.has(key)) r.mark_used(std::string(key));
    if (r.has("seed")) {
        r.read_u64("seed", s.seed);
        cfg.explicit_seed = true;
    }
    cfg.binding.settings = std::move(s);
    return cfg;
}

void write_backend(Table& t, const BackendConfig& cfg) {
    if (const auto* h = std::get_if<HttpSettings>(&cfg.binding.settings)) {
        t["kind"] = {std::string("http")};
        t["endpoint"] = {h->endpoint};
        t["model"] = {h->model};
        t["temperature"] = {h->temperature};
        t["timeout_s"] = {h->timeout_s};
        t["max_retries"] = {std::int64_t{h->max_retries}};
        t["backoff_s"] = {h->backoff_s};
        t["api_key_env"] = {h->api_key_env};
        return;
    }
    const auto& s = std::get<ScriptedSettings>(cfg.binding.settings);
    t["kind"] = {std::string("scripted")};
    t["policy"] = {std::string(policy_name(s.policy))};
    if (cfg.explicit_seed) t["seed"] = {static_cast<std::int64_t>(s.seed)};
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, policy::FixedDimClassifier>) {
                t["category"] = {std::int64_t{p.category}};
            } else if constexpr (std::is_same_v<P, policy::NoisyClassifier>) {
                t["error_rate"] = {p.error_rate};
            } else if constexpr (std::is_same_v<P, policy::LexiconRewriter>) {
                t["level"] = {std::int64_t{p.level}};
                t["jitter"] = {std::int64_t{p.jitter}};
            } else if constexpr (std::is_same_v<P, policy::ReplayList>) {
                Array a;
                for (const auto& r : p.replies) a.push_back({r});
                t["replies"] = {std::move(a)};
            }
        },
        s.policy);
}

bool valid_backend_key(std::string_view key) {
    static const std::set<std::string, std::less<>> roles = {"default", "baseline", "single", "judge"};
    if (roles.count(key)) return true;
    if (key.rfind("layer-", 0) == 0) {
        const auto rest = key.substr(6);
        return !rest.empty() && std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    }
    const auto dash = key.find('-');
    if (dash == std::string_view::npos || dash == 0 || dash + 1 >= key.size()) return false;
    return std::all_of(key.begin(), key.end(),
                       [](char c) { return c == '-' || std::isdigit(static_cast<unsigned char>(c)); }) &&
           key.find('-', dash + 1) == std::string_view::npos;
}

} // namespace

ScriptedPolicy parse_policy(const toml::Table& table) {
    auto get = [&](std::string_view key) -> const Value* {
        auto it = table.find(key);
        return it == table.end() ? nullptr : &it->second;
    };
    auto get_int = [&](std::string_view key, int fallback) {
        const Value* v = get(key);
        if (!v) return fallback;
        if (auto* n = std::get_if<std::int64_t>(&v->data)) return static_cast<int>(*n);
        config_error("backend key '" + std::string(key) + "' must be an integer");
    };
    const Value* name_value = get("policy");
    if (!name_value) config_error("scripted backend needs a policy");
    const auto* name = std::get_if<std::string>(&name_value->data);
    if (!name) config_error("backend policy must be a string");

    if (*name == "argmax") return policy::ArgmaxClassifier{};
    if (*name == "fixed") return policy::FixedDimClassifier{get_int("category", 1)};
    if (*name == "majority") return policy::MajorityAggregator{};
    if (*name == "noisy") {
        double rate = 0.0;
        if (const Value* v = get("error_rate")) {
            if (auto* d = std::get_if<double>(&v->data)) rate = *d;
            else if (auto* n = std::get_if<std::int64_t>(&v->data)) rate = static_cast<double>(*n);
            else config_error("backend key 'error_rate' must be a number");
        }
        if (!(rate >= 0.0 && rate <= 1.0)) config_error("error_rate must lie in [0, 1]");
        return policy::NoisyClassifier{rate};
    }
    if (*name == "replay") {
        policy::ReplayList p;
        if (const Value* v = get("replies")) {
            const auto* a = std::get_if<Array>(&v->data);
            if (!a) config_error("backend key 'replies' must be an array of strings");
            for (const auto& e : *a) {
                const auto* s = std::get_if<std::string>(&e.data);
                if (!s) config_error("backend key 'replies' must be an array of strings");
                p.replies.push_back(*s);
            }
        }
        return p;
    }
    if (*name == "lexicon_rewriter") {
        policy::LexiconRewriter p{get_int("level", 2), get_int("jitter", 0)};
        if (p.level < 0 || p.level > sentiment::max_level || p.jitter < 0)
            config_error("lexicon_rewriter needs 0 <= level <= 5 and jitter >= 0");
        return p;
    }
    if (*name == "lexicon_aggregator") return policy::LexiconAggregator{};
    if (*name == "lexicon_judge") return policy::LexiconJudge{};
    if (*name == "first_slot_judge") return policy::FirstSlotJudge{};
    config_error("unknown scripted policy '" + *name + "'");
}

RunConfig from_document(const Document& doc) {
    for (const auto& [name, _] : doc) {
        static const std::set<std::string, std::less<>> known = {"",          "topology", "schedule", "dmc",
                                                                 "sentiment", "templates", "runtime"};
        if (known.count(name)) continue;
        if (name.rfind("backend.", 0) == 0 && valid_backend_key(name.substr(8))) continue;
        config_error("unknown config table [" + name + "]");
    }

    RunConfig c;
    {
        TableReader r(doc, "");
        std::string task = "dmc";
        r.read("task", task);
        if (task == "dmc") c.task = TaskKind::dmc;
        else if (task == "sentiment") c.task = TaskKind::sentiment;
        else config_error("task must be \"dmc\" or \"sentiment\"");
        r.read_u64("seed", c.seed);
        r.read("repeats", c.repeats);
        r.read("output_dir", c.output_dir);
    }
    {
        TableReader r(doc, "topology");
        r.read("layers", c.topology.layers);
        r.read("dropout_rate", c.topology.dropout_rate);
        std::string mode(dropout_mode_name(c.topology.dropout_mode));
        r.read("dropout_mode", mode);
        c.topology.dropout_mode = parse_dropout_mode(mode);
        std::string fan_in(fan_in_name(c.topology.fan_in));
        r.read("feedback_fan_in", fan_in);
        c.topology.fan_in = parse_fan_in(fan_in);
    }
    {
        TableReader r(doc, "schedule");
        r.read("samples_per_stage", c.schedule.samples_per_stage);
        r.read("num_stages", c.schedule.num_stages);
        r.read("max_iterations", c.schedule.max_iterations);
        r.read_optional("patience", c.schedule.patience);
    }
    {
        TableReader r(doc, "dmc");
        r.read("dims", c.dmc.dims);
        r.read("low", c.dmc.range.low);
        r.read("high", c.dmc.range.high);
        r.read("train_count", c.dmc.train_count);
        r.read("test_count", c.dmc.test_count);
        r.read_optional("challenge_gap", c.dmc.challenge_gap);
        if (r.has("baselines")) {
            std::vector<std::string> names;
            r.read("baselines", names);
            c.dmc.baselines.clear();
            for (const auto& n : names) c.dmc.baselines.push_back(dmc::parse_baseline(n));
        }
        r.read("instruction", c.dmc.instruction);
    }
    {
        TableReader r(doc, "sentiment");
        r.read("dataset", c.sentiment.dataset);
        r.read_optional("limit", c.sentiment.limit);
        r.read("instruction", c.sentiment.instruction);
    }
    {
        TableReader r(doc, "templates");
        r.read("preset", c.templates.preset);
        for (std::string_view field : template_fields) {
            std::string body;
            if (!r.has(field)) continue;
            r.read(field, body);
            c.templates.overrides[std::string(field)] = body;
        }
    }
    {
        TableReader r(doc, "runtime");
        r.read("concurrent_layers", c.runtime.concurrent_layers);
        r.read("parallel_repeats", c.runtime.parallel_repeats);
        r.read_optional("keep_pairs", c.runtime.keep_pairs);
    }
    for (const auto& [name, _] : doc)
        if (name.rfind("backend.", 0) == 0) c.backends[name.substr(8)] = read_backend(doc, name);
    return c;
}

Document to_document(const RunConfig& c) {
    Document doc;
    auto& top = doc[""];
    top["task"] = {std::string(task_name(c.task))};
    top["seed"] = {static_cast<std::int64_t>(c.seed)};
    top["repeats"] = {std::int64_t{c.repeats}};
    top["output_dir"] = {c.output_dir};

    auto& topo = doc["topology"];
    Array layers;
    for (int w : c.topology.layers) layers.push_back({std::int64_t{w}});
    topo["layers"] = {std::move(layers)};
    topo["dropout_rate"] = {c.topology.dropout_rate};
    topo["dropout_mode"] = {std::string(dropout_mode_name(c.topology.dropout_mode))};
    topo["feedback_fan_in"] = {std::string(fan_in_name(c.topology.fan_in))};

    auto& sched = doc["schedule"];
    sched["samples_per_stage"] = {static_cast<std::int64_t>(c.schedule.samples_per_stage)};
    sched["num_stages"] = {static_cast<std::int64_t>(c.schedule.num_stages)};
    sched["max_iterations"] = {static_cast<std::int64_t>(c.schedule.max_iterations)};
    sched["patience"] = {static_cast<std::int64_t>(c.schedule.patience.value_or(0))};

    auto& d = doc["dmc"];
    d["dims"] = {std::int64_t{c.dmc.dims}};
    d["low"] = {std::int64_t{c.dmc.range.low}};
    d["high"] = {std::int64_t{c.dmc.range.high}};
    d["train_count"] = {static_cast<std::int64_t>(c.dmc.train_count)};
    d["test_count"] = {static_cast<std::int64_t>(c.dmc.test_count)};
    d["challenge_gap"] = {std::int64_t{c.dmc.challenge_gap.value_or(0)}};
    Array baselines;
    for (auto b : c.dmc.baselines) baselines.push_back({std::string(dmc::baseline_name(b))});
    d["baselines"] = {std::move(baselines)};
    d["instruction"] = {c.dmc.instruction};

    auto& s = doc["sentiment"];
    s["dataset"] = {c.sentiment.dataset};
    s["limit"] = {static_cast<std::int64_t>(c.sentiment.limit.value_or(0))};
    s["instruction"] = {c.sentiment.instruction};

    auto& t = doc["templates"];
    t["preset"] = {c.templates.preset};
    for (const auto& [field, body] : c.templates.overrides) t[field] = {body};

    auto& rt = doc["runtime"];
    rt["concurrent_layers"] = {c.runtime.concurrent_layers};
    rt["parallel_repeats"] = {c.runtime.parallel_repeats};
    rt["keep_pairs"] = {static_cast<std::int64_t>(c.runtime.keep_pairs.value_or(0))};

    for (const auto& [key, cfg] : c.backends) write_backend(doc["backend." + key], cfg);
    return doc;
}

RunConfig parse_config(std::string_view text) {
    return from_document(toml::parse(text));
}

std::string serialize_config(const RunConfig& config) {
    const Document doc = to_document(config);
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, table] : doc) {
        if (!name.empty()) out << (first ? "" : "\n") << '[' << name << "]\n";
        for (const auto& [key, value] : table) out << key << " = " << toml::format_value(value) << '\n';
        first = false;
    }
    return out.str();
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::config_error, "cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    Document doc = toml::parse(text.str());
    for (const auto& o : overrides) toml::apply_override(doc, o);
    RunConfig c = from_document(doc);
    c.validate();
    return c;
}

void RunConfig::validate() const {
    const auto topo = NetworkTopology::build(topology.layers, topology.dropout_rate);
    if (repeats < 1) config_error("repeats must be >= 1");
    if (seed > static_cast<std::uint64_t>(INT64_MAX)) config_error("seed must lie in [0, 2^63 - 1]");
    if (schedule.samples_per_stage == 0 || schedule.num_stages == 0 || schedule.max_iterations == 0)
        config_error("schedule values must be positive");
    if (!backends.count("default")) config_error("config needs a [backend.default] table");
    for (const auto& [key, cfg] : backends) {
        if (!valid_backend_key(key)) config_error("bad backend key '" + key + "'");
        if (const auto* s = std::get_if<ScriptedSettings>(&cfg.binding.settings);
            s && cfg.explicit_seed && s->seed > static_cast<std::uint64_t>(INT64_MAX))
            config_error("[backend." + key + "] seed must lie in [0, 2^63 - 1]");
        const auto dash = key.find('-');
        if (key.rfind("layer-", 0) == 0) {
            const int layer = std::stoi(key.substr(6));
            if (layer < 1 || layer > topo.depth()) config_error("[backend." + key + "] names a layer outside the topology");
        } else if (dash != std::string::npos) {
            const NodeRef node{std::stoi(key.substr(0, dash)), std::stoi(key.substr(dash + 1))};
            if (!topo.contains(node)) config_error("[backend." + key + "] names a node outside the topology");
        }
    }
    if (task == TaskKind::dmc) {
        if (dmc.dims < 2) config_error("dmc.dims must be >= 2");
        if (dmc.range.high <= dmc.range.low) config_error("dmc.high must exceed dmc.low");
        if (dmc.test_count == 0) config_error("dmc.test_count must be >= 1");
        if (dmc.train_count < schedule.samples_needed())
            config_error("dmc.train_count (" + std::to_string(dmc.train_count) + ") is below the " +
                         std::to_string(schedule.samples_needed()) + " samples the schedule needs");
    }
    (void)template_set();
}

TemplateSet RunConfig::template_set() const {
    TemplateSet t = task == TaskKind::sentiment ? sentiment::templates() : TemplateSet::preset(templates.preset);
    for (const auto& [field, body] : templates.overrides) {
        if (field == "forward_header") t.forward_header = PromptTemplate(field, body);
        else if (field == "reference_block") t.reference_block = PromptTemplate(field, body);
        else if (field == "answer_block") t.answer_block = PromptTemplate(field, body);
        else if (field == "right_prompt") t.right_prompt = PromptTemplate(field, body);
        else if (field == "wrong_prompt") t.wrong_prompt = PromptTemplate(field, body);
        else if (field == "leader_block") t.leader_block = PromptTemplate(field, body);
        else if (field == "separator") t.separator = body;
        else config_error("unknown template '" + field + "'");
    }
    return t;
}

const BackendConfig& RunConfig::backend_for(NodeRef node) const {
    if (auto it = backends.find(std::to_string(node.layer) + "-" + std::to_string(node.index)); it != backends.end())
        return it->second;
    if (auto it = backends.find("layer-" + std::to_string(node.layer)); it != backends.end()) return it->second;
    return backend_for("default");
}

const BackendConfig& RunConfig::backend_for(std::string_view role) const {
    if (auto it = backends.find(role); it != backends.end()) return it->second;
    auto it = backends.find("default");
    if (it == backends.end()) config_error("config needs a [backend.default] table");
    return it->second;
}

BackendBinding RunConfig::resolve(const BackendConfig& cfg, std::string_view session_id, std::uint64_t master) const {
    BackendBinding b = cfg.binding;
    if (auto* s = std::get_if<ScriptedSettings>(&b.settings)) {
        if (!cfg.explicit_seed) s->seed = derive_seed(master, "backend/" + std::string(session_id));
    } else if (auto* h = std::get_if<HttpSettings>(&b.settings)) {
        h->keep_pairs = runtime.keep_pairs;
    }
    return b;
}

} // namespace chatnet
