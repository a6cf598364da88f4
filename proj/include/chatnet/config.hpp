#pragma once

// Run configuration: a small TOML subset (tables, key = value, strings,
// integers, floats, booleans, single-line arrays, """multi-line""" strings).

#include "chatnet/backend.hpp"
#include "chatnet/dmc.hpp"
#include "chatnet/feedback.hpp"
#include "chatnet/forward.hpp"
#include "chatnet/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chatnet {

namespace toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<bool, std::int64_t, double, std::string, Array> data;

    bool operator==(const Value&) const = default;
};

// Table name ("" for top level, dotted otherwise) -> key -> value.
using Table = std::map<std::string, Value, std::less<>>;
using Document = std::map<std::string, Table, std::less<>>;

Document parse(std::string_view text);
// Parses the right-hand side of `key = value`. Text that is not a valid
// literal is taken as a bare string, so "--set task=dmc" works unquoted.
Value parse_value_lenient(std::string_view text);
std::string format_value(const Value& value);

// "schedule.patience=2" sets key "patience" of table "schedule".
void apply_override(Document& doc, std::string_view assignment);

} // namespace toml

enum class TaskKind { dmc, sentiment };

std::string_view task_name(TaskKind kind);

struct TopologyConfig {
    std::vector<int> layers{3, 1};
    double dropout_rate = 0.5;
    DropoutMode dropout_mode = DropoutMode::resample;
    FanIn fan_in = FanIn::mirror_mask;
};

struct DmcConfig {
    int dims = 3;
    dmc::ValueRange range{};
    std::size_t train_count = 24;
    std::size_t test_count = 30;
    std::optional<int> challenge_gap = 5;  // nullopt: unconstrained test vectors
    std::vector<dmc::BaselineKind> baselines{dmc::BaselineKind::no_feedback, dmc::BaselineKind::refine,
                                             dmc::BaselineKind::ensemble};
    std::string instruction{dmc::default_instruction};
};

struct SentimentConfig {
    std::string dataset = "data/sentiment_60.tsv";
    std::optional<std::size_t> limit;                // use only the first N sentences
    std::string instruction = "You rewrite sentences so that they express the opposite sentiment.";
};

struct TemplatesConfig {
    std::string preset = "transcript";
    std::map<std::string, std::string, std::less<>> overrides;  // template field -> body
};

struct RuntimeConfig {
    bool concurrent_layers = true;
    bool parallel_repeats = false;
    std::optional<std::size_t> keep_pairs;  // http backends only
};

struct BackendConfig {
    BackendBinding binding{ScriptedSettings{}};
    bool explicit_seed = false;  // otherwise derived from the master seed and session id
};

struct RunConfig {
    TaskKind task = TaskKind::dmc;
    std::uint64_t seed = 0;
    int repeats = 1;
    std::string output_dir = "runs";

    TopologyConfig topology;
    TrainingSchedule schedule{3, 8, 24, std::nullopt};
    DmcConfig dmc;
    SentimentConfig sentiment;
    TemplatesConfig templates;
    RuntimeConfig runtime;
    // Keys: "default", "L-I" for one node, "layer-L", "baseline", "single", "judge".
    std::map<std::string, BackendConfig, std::less<>> backends;

    // Throws ConfigError (or InvalidWidths/InvalidRate for the topology).
    void validate() const;
    // The preset (dmc) or the sentiment wording, with overrides applied.
    TemplateSet template_set() const;

    // Binding for a node, falling back to its layer and then the default.
    const BackendConfig& backend_for(NodeRef node) const;
    // Binding for a role ("baseline", "single", "judge"), else the default.
    const BackendConfig& backend_for(std::string_view role) const;

    // Concrete binding for one session: derives the scripted seed from the
    // master seed and the session id unless one was configured, and applies
    // runtime.keep_pairs to http bindings.
    BackendBinding resolve(const BackendConfig& cfg, std::string_view session_id, std::uint64_t master) const;
};

RunConfig from_document(const toml::Document& doc);
toml::Document to_document(const RunConfig& config);

RunConfig parse_config(std::string_view text);
// Canonical text: fixed table and key order, so serialize -> parse ->
// serialize is byte-identical.
std::string serialize_config(const RunConfig& config);

// Reads the file, applies "table.key=value" overrides and validates.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

ScriptedPolicy parse_policy(const toml::Table& table);

} // namespace chatnet
