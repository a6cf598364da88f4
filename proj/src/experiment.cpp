#include "chatnet/experiment.hpp"

#include "chatnet/dmc.hpp"
#include "chatnet/journal.hpp"
#include "chatnet/rng.hpp"
#include "chatnet/topology.hpp"
#include "chatnet/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace chatnet {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(Errc code) {
    switch (code) {
    case Errc::config_error:
    case Errc::invalid_widths:
    case Errc::invalid_rate:
    case Errc::invalid_node:
    case Errc::no_leaders:
    case Errc::no_employees:
    case Errc::template_error:
    case Errc::invalid_combination:
    case Errc::range_too_narrow:
        return exit_code::usage;
    case Errc::backend_unavailable:
    case Errc::malformed_response:
        return exit_code::backend;
    case Errc::divergence_detected:
    case Errc::replay_exhausted:
        return exit_code::divergence;
    case Errc::dataset_not_found:
    case Errc::io_error:
        return exit_code::data;
    case Errc::refused_incomplete:
        return exit_code::incomplete;
    default:
        return exit_code::failure;
    }
}

BackendMaker configured_backends(const RunConfig& cfg, std::uint64_t master) {
    return [cfg, master](const std::string& session_id, const BackendConfig& bc) {
        return make_backend(cfg.resolve(bc, session_id, master));
    };
}

std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat) {
    return derive_seed(master, "repeat", repeat);
}

namespace {

constexpr std::uint64_t fnv_offset = 0xcbf29ce484222325ULL;

std::uint64_t fnv_update(std::uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

std::string dump(const json& j) {
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string fixed3(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << v;
    return out.str();
}

// Streams events to a sink while keeping the running checksum.
class RecordWriter {
public:
    explicit RecordWriter(const LineSink& sink) : sink_(sink) {}

    void write(const json& event) {
        const std::string line = dump(event);
        hash_ = fnv_update(fnv_update(hash_, line), "\n");
        ++count_;
        if (sink_) sink_(line);
    }

    void finish(bool ok, const std::string& failure) {
        json e = {{"event", "complete"}, {"ok", ok}, {"lines", count_}, {"checksum", hex64(hash_)}};
        e["failure"] = failure.empty() ? json(nullptr) : json(failure);
        write(e);
    }

private:
    const LineSink& sink_;
    std::uint64_t hash_ = fnv_offset;
    std::size_t count_ = 0;
};

json exchange_event(const Exchange& e) {
    return {{"event", "exchange"}, {"seq", e.seq},       {"session", e.session},
            {"kind", e.kind},      {"prompt", e.prompt}, {"reply", e.reply}};
}

json forward_event(const std::string& system, const SampleRecord& r) {
    json nodes = json::array();
    for (const auto& io : r.forward.per_node) nodes.push_back({{"node", io.node.to_string()}, {"seq", io.seq}});
    json masks = json::array();
    for (const auto& m : r.forward.masks) {
        json selected = json::array();
        for (NodeRef s : m.selected()) selected.push_back(s.to_string());
        masks.push_back({{"receiver", m.receiver.to_string()}, {"selected", selected}});
    }
    return {{"event", "forward"}, {"system", system}, {"stage", r.stage}, {"index", r.index},
            {"nodes", nodes},     {"masks", masks},   {"final_output", r.forward.final_output}};
}

json feedback_event(const std::string& system, const SampleRecord& r) {
    json nodes = json::array();
    for (const auto& f : r.feedback.per_node) {
        json heard = json::array();
        for (NodeRef n : f.heard_from) heard.push_back(n.to_string());
        json extracted = f.judgment.extracted_answer ? json(*f.judgment.extracted_answer) : json(nullptr);
        nodes.push_back({{"node", f.node.to_string()},
                         {"correct", f.judgment.correct},
                         {"reason", std::string(judge_reason_name(f.judgment.reason))},
                         {"extracted", extracted},
                         {"heard_from", heard},
                         {"seq", f.seq}});
    }
    return {{"event", "feedback"}, {"system", system}, {"stage", r.stage}, {"index", r.index}, {"nodes", nodes}};
}

json stage_event(const std::string& system, const StageMetrics& m) {
    json per_node = json::object();
    for (const auto& [node, acc] : m.per_node_accuracy) per_node[node.to_string()] = acc;
    return {{"event", "stage"},           {"system", system},       {"stage", m.stage},
            {"accuracy", m.accuracy},     {"member_mean", m.member_mean}, {"per_node", per_node},
            {"timestamp", m.timestamp},   {"samples_consumed", m.samples_consumed}};
}

void add_rows(std::vector<MetricRow>& rows, const std::string& system, const StageMetrics& m) {
    rows.push_back({system, m.stage, "final", m.accuracy});
    rows.push_back({system, m.stage, "member_mean", m.member_mean});
    for (const auto& [node, acc] : m.per_node_accuracy) rows.push_back({system, m.stage, node.to_string(), acc});
}

json vectors_json(std::span<const dmc::DigitalVector> vs) {
    json out = json::array();
    for (const auto& v : vs) {
        json row = v.components;
        row.push_back(v.label);
        out.push_back(row);
    }
    return out;
}

// The config as stored in a record. The output location is left out so
// that identical runs written to different places have identical records.
std::string record_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    copy.output_dir.clear();
    return serialize_config(copy);
}

bool is_backend_failure(Errc code) {
    return code == Errc::backend_unavailable || code == Errc::malformed_response || code == Errc::replay_exhausted;
}

} // namespace

std::uint64_t record_checksum(std::span<const std::string> lines) {
    std::uint64_t h = fnv_offset;
    for (const auto& l : lines) h = fnv_update(fnv_update(h, l), "\n");
    return h;
}

DmcRunOutput run_dmc(const RunConfig& cfg, std::uint64_t seed, std::size_t repeat, const BackendMaker& make,
                     const LineSink& sink) {
    RecordWriter rec(sink);
    DmcRunOutput out;
    rec.write({{"event", "header"}, {"format", "chatnet-record"}, {"version", 1}, {"task", "dmc"},
               {"repeat", repeat}, {"seed", seed}});
    rec.write({{"event", "config"}, {"toml", record_config(cfg)}});

    const int dims = cfg.dmc.dims;
    const auto train_set = dmc::generate_dataset(cfg.dmc.train_count, dims, cfg.dmc.range, derive_seed(seed, "dmc/train"));
    const auto test_set = dmc::generate_dataset(cfg.dmc.test_count, dims, cfg.dmc.range, derive_seed(seed, "dmc/test"),
                                                cfg.dmc.challenge_gap);
    rec.write({{"event", "dataset"}, {"train", vectors_json(train_set)}, {"test", vectors_json(test_set)}});

    Journal journal;
    journal.set_listener([&](const Exchange& e) { rec.write(exchange_event(e)); });

    auto finish_failed = [&](Errc code, const std::string& what) {
        out.failure = what;
        out.failure_code = code;
        rec.finish(false, what);
        return out;
    };

    auto topo = build_network(cfg.topology.layers, cfg.topology.dropout_rate);
    std::vector<Session> sessions;
    for (NodeRef node : topo.nodes()) {
        const std::string id = "network/" + node.to_string();
        sessions.emplace_back(id, make(id, cfg.backend_for(node)), cfg.dmc.instruction);
    }
    Network network(std::move(topo), std::move(sessions));

    const TemplateSet templates = cfg.template_set();
    const AnswerMatcher matcher = dmc::matcher(dims);
    ForwardOptions fwd;
    fwd.dropout_mode = cfg.topology.dropout_mode;
    fwd.concurrent = cfg.runtime.concurrent_layers;
    FeedbackOptions fb;
    fb.fan_in = cfg.topology.fan_in;
    fb.concurrent = cfg.runtime.concurrent_layers;
    TrainerContext ctx{templates, matcher, journal, fwd, fb, {}, {}};
    ctx.on_sample = [&](const SampleRecord& r) {
        rec.write(forward_event("network", r));
        rec.write(feedback_event("network", r));
    };
    ctx.on_stage = [&](const StageMetrics& m) {
        rec.write(stage_event("network", m));
        add_rows(out.metrics, "network", m);
    };

    Rng mask_rng(derive_seed(seed, "mask"));
    const auto train_samples = dmc::to_samples(train_set);
    const auto test_samples = dmc::to_samples(test_set);
    const TrainingRun run = train(network, train_samples, test_samples, cfg.schedule, mask_rng, ctx);
    if (!run.complete) return finish_failed(run.failure_code.value_or(Errc::backend_unavailable), run.failure);

    for (dmc::BaselineKind kind : cfg.dmc.baselines) {
        const std::string system(dmc::baseline_name(kind));
        dmc::SessionFactory factory = [&](const std::string& id) {
            return Session(id, make(id, cfg.backend_for(std::string_view("baseline"))), cfg.dmc.instruction);
        };
        try {
            const auto b = dmc::run_baseline(kind, train_set, test_set, factory, cfg.schedule, journal, dims);
            for (const auto& m : b.stages) {
                rec.write(stage_event(system, m));
                add_rows(out.metrics, system, m);
            }
            rec.write({{"event", "baseline"}, {"system", system}, {"refine_turns", b.refine_turns},
                       {"stages", b.stages.size()}});
        } catch (const Error& e) {
            if (!is_backend_failure(e.code())) throw;
            return finish_failed(e.code(), e.what());
        }
    }

    rec.finish(true, "");
    out.complete = true;
    return out;
}

SentimentRunOutput run_sentiment(const RunConfig& cfg, std::span<const sentiment::SentimentSample> samples,
                                 std::uint64_t seed, std::size_t repeat, const BackendMaker& make,
                                 const LineSink& sink) {
    using namespace sentiment;
    require(!samples.empty(), "sentiment run needs at least one sample");
    RecordWriter rec(sink);
    SentimentRunOutput out;
    rec.write({{"event", "header"}, {"format", "chatnet-record"}, {"version", 1}, {"task", "sentiment"},
               {"repeat", repeat}, {"seed", seed}});
    rec.write({{"event", "config"}, {"toml", record_config(cfg)}});
    json data = json::array();
    for (const auto& s : samples) data.push_back({{"sentence", s.sentence}, {"sentiment", polarity_name(s.sentiment)}});
    rec.write({{"event", "dataset"}, {"samples", data}});

    Journal journal;
    journal.set_listener([&](const Exchange& e) { rec.write(exchange_event(e)); });

    const std::string& instruction = cfg.sentiment.instruction;
    ReversalSystem single = ReversalSystem::single(
        Session("single", make("single", cfg.backend_for(std::string_view("single"))), instruction));

    auto topo = build_network(cfg.topology.layers, cfg.topology.dropout_rate);
    std::vector<Session> sessions;
    for (NodeRef node : topo.nodes()) {
        const std::string id = "network/" + node.to_string();
        sessions.emplace_back(id, make(id, cfg.backend_for(node)), instruction);
    }
    ForwardOptions fwd;
    fwd.concurrent = cfg.runtime.concurrent_layers;
    ReversalSystem network =
        ReversalSystem::network(Network(std::move(topo), std::move(sessions)), cfg.template_set(), fwd);

    auto judge = make("judge", cfg.backend_for(std::string_view("judge")));
    Rng judge_rng(derive_seed(seed, "judge"));

    std::vector<JudgeVerdict> without, with;
    auto judge_and_log = [&](const std::string& phase, std::size_t index, const SentimentSample& sample,
                             const std::string& a, const std::string& b) {
        SentimentPair pair{phase, index, sample.sentence, a, b, judge_pair(*judge, a, b, judge_rng, &journal, "judge")};
        rec.write({{"event", "verdict"},
                   {"phase", phase},
                   {"index", index},
                   {"sentence", sample.sentence},
                   {"a", a},
                   {"b", b},
                   {"a_system", "single"},
                   {"b_system", "network"},
                   {"a_first", pair.verdict.a_first},
                   {"winner", winner_name(pair.verdict.winner)},
                   {"rationale", pair.verdict.rationale}});
        (phase == "without_feedback" ? without : with).push_back(pair.verdict);
        out.pairs.push_back(std::move(pair));
    };

    try {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& sample = samples[i];
            single.reset();
            network.reset();
            const std::string s1 = reverse_sentiment(single, sample, journal);
            const std::string n1 = reverse_sentiment(network, sample, journal);
            judge_and_log("without_feedback", i, sample, s1, n1);
            const std::string s2 = intensify(single, journal);
            const std::string n2 = intensify(network, journal);
            judge_and_log("with_feedback", i, sample, s2, n2);
        }
    } catch (const Error& e) {
        if (!is_backend_failure(e.code())) throw;
        out.failure = e.what();
        out.failure_code = e.code();
        out.without_feedback = tally(without);
        out.with_feedback = tally(with);
        rec.finish(false, out.failure);
        return out;
    }
    out.without_feedback = tally(without);
    out.with_feedback = tally(with);
    for (const auto& [phase, t] : {std::pair{"without_feedback", out.without_feedback}, std::pair{"with_feedback", out.with_feedback}})
        rec.write({{"event", "tally"}, {"phase", phase}, {"win", t.win}, {"loss", t.loss}, {"tie", t.tie}});
    rec.finish(true, "");
    out.complete = true;
    return out;
}

double spread_pct(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo == *hi) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (mean == 0.0) return 0.0;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1)) / mean * 100.0;
}

// ---------------------------------------------------------------------------
// Record files

namespace {

std::vector<std::string> read_lines(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot read " + file.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
    return lines;
}

class FileSink {
public:
    explicit FileSink(const fs::path& file) : out_(file, std::ios::binary | std::ios::trunc) {
        if (!out_) fail(Errc::io_error, "cannot write " + file.string());
    }
    LineSink sink() {
        return [this](const std::string& line) {
            out_ << line << '\n';
            out_.flush();
        };
    }

private:
    std::ofstream out_;
};

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_error, "cannot write " + file.string());
    out << text;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "system,stage,node,accuracy\n";
    for (const auto& r : rows)
        out += r.system + "," + std::to_string(r.stage) + "," + r.node + "," + fmt_double(r.accuracy) + "\n";
    return out;
}

fs::path record_file_of(const fs::path& p) {
    return fs::is_directory(p) ? p / "record.jsonl" : p;
}

std::size_t first_difference(std::string_view a, std::string_view b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i)
        if (a[i] != b[i]) return i;
    return n;
}

struct ParsedRecord {
    std::vector<std::string> lines;
    std::vector<json> events;
};

ParsedRecord parse_record(const fs::path& file, std::optional<Divergence>* bad_line = nullptr) {
    ParsedRecord r;
    r.lines = read_lines(file);
    if (r.lines.empty()) fail(Errc::refused_incomplete, file.string() + " is empty");
    r.events.reserve(r.lines.size());
    for (std::size_t i = 0; i < r.lines.size(); ++i) {
        json j = json::parse(r.lines[i], nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("event")) {
            if (i + 1 == r.lines.size()) fail(Errc::refused_incomplete, file.string() + " ends with a partial line");
            if (bad_line) {
                Divergence d;
                d.line = i + 1;
                d.detail = "line is not a valid record event";
                *bad_line = d;
                r.events.emplace_back(json::object({{"event", "unreadable"}}));
                continue;
            }
            fail(Errc::io_error, file.string() + " line " + std::to_string(i + 1) + " is not a valid record event");
        }
        r.events.push_back(std::move(j));
    }
    return r;
}

struct ExchangeLine {
    std::size_t line = 0;
    std::string session;
    std::string kind;
    std::string prompt;
    std::string reply;
};

std::vector<ExchangeLine> exchanges_of(const std::vector<json>& events) {
    std::vector<ExchangeLine> out;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.value("event", "") != "exchange") continue;
        out.push_back({i + 1, e.value("session", ""), e.value("kind", ""), e.value("prompt", ""), e.value("reply", "")});
    }
    return out;
}

} // namespace

ReplayReport replay_record(const fs::path& record_file) {
    std::optional<Divergence> bad_line;
    const ParsedRecord recorded = parse_record(record_file, &bad_line);
    const json& last = recorded.events.back();
    if (last.value("event", "") != "complete" || !last.value("ok", false))
        fail(Errc::refused_incomplete, record_file.string() + " does not record a completed run");

    ReplayReport report;
    report.lines = recorded.lines.size();
    if (bad_line) {
        report.divergence = bad_line;
        return report;
    }

    const json& header = recorded.events.front();
    if (header.value("event", "") != "header" || header.value("format", "") != "chatnet-record")
        fail(Errc::io_error, record_file.string() + " lacks a record header");
    const std::string task = header.value("task", "");
    const auto seed = header.value("seed", std::uint64_t{0});
    const auto repeat = header.value("repeat", std::size_t{1});

    const json* config_event = nullptr;
    const json* dataset_event = nullptr;
    for (const auto& e : recorded.events) {
        const auto kind = e.value("event", "");
        if (kind == "config" && !config_event) config_event = &e;
        if (kind == "dataset" && !dataset_event) dataset_event = &e;
    }
    if (!config_event || !dataset_event) fail(Errc::io_error, record_file.string() + " lacks its config or dataset");
    const RunConfig cfg = parse_config(config_event->value("toml", ""));
    cfg.validate();

    const auto recorded_exchanges = exchanges_of(recorded.events);
    report.exchanges = recorded_exchanges.size();
    std::map<std::string, std::vector<std::string>> replies;
    for (const auto& x : recorded_exchanges) replies[x.session].push_back(x.reply);
    const BackendMaker replay_maker = [&](const std::string& id, const BackendConfig&) {
        auto it = replies.find(id);
        policy::ReplayList list;
        if (it != replies.end()) list.replies = it->second;
        return make_backend(BackendBinding{ScriptedSettings{list, 0}});
    };

    std::vector<std::string> regenerated;
    const LineSink sink = [&](const std::string& line) { regenerated.push_back(line); };
    std::string rerun_failure;
    if (task == "dmc") {
        const auto out = run_dmc(cfg, seed, repeat, replay_maker, sink);
        if (!out.complete) rerun_failure = out.failure;
    } else if (task == "sentiment") {
        std::vector<sentiment::SentimentSample> samples;
        for (const auto& s : dataset_event->at("samples"))
            samples.push_back({s.value("sentence", ""), sentiment::parse_polarity(s.value("sentiment", ""))});
        const auto out = run_sentiment(cfg, samples, seed, repeat, replay_maker, sink);
        if (!out.complete) rerun_failure = out.failure;
    } else {
        fail(Errc::io_error, record_file.string() + " has unknown task '" + task + "'");
    }

    std::vector<json> regenerated_events;
    for (const auto& l : regenerated) regenerated_events.push_back(json::parse(l));
    const auto rerun_exchanges = exchanges_of(regenerated_events);

    // Per-session turn numbers of the recorded exchanges.
    std::map<std::string, std::size_t> turns;
    for (std::size_t k = 0; k < recorded_exchanges.size(); ++k) {
        const auto& want = recorded_exchanges[k];
        const std::size_t turn = ++turns[want.session];
        if (k >= rerun_exchanges.size()) {
            report.divergence = Divergence{want.line, want.session, turn, 0,
                                           "re-execution stopped before this exchange" +
                                               (rerun_failure.empty() ? std::string() : ": " + rerun_failure)};
            return report;
        }
        const auto& got = rerun_exchanges[k];
        if (got.session != want.session || got.kind != want.kind) {
            report.divergence = Divergence{want.line, want.session, turn, 0,
                                           "re-execution asked " + got.session + " (" + got.kind + ") instead"};
            return report;
        }
        if (got.prompt != want.prompt) {
            report.divergence = Divergence{want.line, want.session, turn, first_difference(want.prompt, got.prompt),
                                           "assembled prompt differs from the recorded prompt"};
            return report;
        }
    }
    if (rerun_exchanges.size() > recorded_exchanges.size()) {
        const auto& extra = rerun_exchanges[recorded_exchanges.size()];
        report.divergence = Divergence{recorded.lines.size(), extra.session, 0, 0,
                                       "re-execution made more exchanges than recorded"};
        return report;
    }
    if (!rerun_failure.empty()) {
        report.divergence = Divergence{recorded.lines.size(), "", 0, 0, "re-execution failed: " + rerun_failure};
        return report;
    }

    for (std::size_t i = 0; i < std::max(recorded.lines.size(), regenerated.size()); ++i) {
        if (i >= recorded.lines.size() || i >= regenerated.size()) {
            report.divergence = Divergence{i + 1, "", 0, 0, "record length differs from re-execution"};
            return report;
        }
        if (recorded.lines[i] != regenerated[i]) {
            const auto& e = recorded.events[i];
            Divergence d{i + 1, "", 0, first_difference(recorded.lines[i], regenerated[i]),
                         "record line differs from re-execution (" + e.value("event", std::string("?")) + " event)"};
            if (e.value("event", "") == "complete") d.detail = "record checksum does not match its contents";
            report.divergence = d;
            return report;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

int report_error(const Error& e, CommandIO io) {
    io.err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
}

fs::path run_dir_for(const RunConfig& cfg, std::size_t repeat) {
    return fs::path(cfg.output_dir) / ("run-" + std::to_string(repeat));
}

// Runs `body` for every repeat, sequentially or concurrently.
template <class Result, class Body>
std::vector<Result> for_each_repeat(const RunConfig& cfg, Body body) {
    std::vector<Result> results(static_cast<std::size_t>(cfg.repeats));
    if (cfg.runtime.parallel_repeats && cfg.repeats > 1) {
        std::vector<std::future<Result>> pending;
        for (std::size_t r = 1; r <= results.size(); ++r) pending.push_back(std::async(std::launch::async, body, r));
        for (std::size_t i = 0; i < pending.size(); ++i) results[i] = pending[i].get();
    } else {
        for (std::size_t r = 1; r <= results.size(); ++r) results[r - 1] = body(r);
    }
    return results;
}

struct CurveTable {
    std::vector<std::string> systems;  // display order
    std::map<std::string, std::map<std::size_t, std::vector<double>>> values;

    void add(const std::string& system, std::size_t stage, double v) {
        if (std::find(systems.begin(), systems.end(), system) == systems.end()) systems.push_back(system);
        values[system][stage].push_back(v);
    }

    std::size_t max_stage() const {
        std::size_t n = 0;
        for (const auto& [_, stages] : values)
            if (!stages.empty()) n = std::max(n, stages.rbegin()->first);
        return n;
    }

    std::string long_csv() const {
        std::string out = "system,stage,mean,spread_pct\n";
        for (const auto& system : systems)
            for (const auto& [stage, vs] : values.at(system)) {
                double mean = 0.0;
                for (double v : vs) mean += v;
                mean /= static_cast<double>(vs.size());
                out += system + "," + std::to_string(stage) + "," + fmt_double(mean) + "," + fmt_double(spread_pct(vs)) + "\n";
            }
        return out;
    }

    std::string wide_csv() const {
        std::string out = "system";
        const std::size_t n = max_stage();
        for (std::size_t s = 1; s <= n; ++s) out += ",stage_" + std::to_string(s);
        out += "\n";
        for (const auto& system : systems) {
            out += system;
            const auto& stages = values.at(system);
            for (std::size_t s = 1; s <= n; ++s) {
                out += ",";
                auto it = stages.find(s);
                if (it == stages.end()) continue;
                double mean = 0.0;
                for (double v : it->second) mean += v;
                mean /= static_cast<double>(it->second.size());
                out += fixed3(mean) + " (+-" + fixed3(spread_pct(it->second)) + "%)";
            }
            out += "\n";
        }
        return out;
    }
};

void add_stage_rows(CurveTable& table, const std::vector<MetricRow>& rows) {
    for (const auto& r : rows) {
        if (r.node == "final") table.add(r.system, r.stage, r.accuracy);
        else if (r.node == "member_mean" && r.system == "network") table.add("network_members", r.stage, r.accuracy);
    }
}

std::string tally_csv(const sentiment::Tally& without, const sentiment::Tally& with) {
    auto row = [](const std::string& phase, const std::string& system, int win, int loss, int tie) {
        return phase + "," + system + "," + std::to_string(win) + "," + std::to_string(loss) + "," +
               std::to_string(tie) + "," + std::to_string(win + loss + tie) + "\n";
    };
    std::string out = "phase,system,win,loss,tie,total\n";
    out += row("without_feedback", "single", without.win, without.loss, without.tie);
    out += row("without_feedback", "network", without.loss, without.win, without.tie);
    out += row("with_feedback", "single", with.win, with.loss, with.tie);
    out += row("with_feedback", "network", with.loss, with.win, with.tie);
    return out;
}

} // namespace

int cmd_run_dmc(const RunConfig& cfg, CommandIO io) {
    try {
        cfg.validate();
        if (cfg.task != TaskKind::dmc) fail(Errc::config_error, "config task is not dmc");
        fs::create_directories(cfg.output_dir);
        struct Result {
            DmcRunOutput out;
            std::optional<Error> error;
        };
        auto results = for_each_repeat<Result>(cfg, [&cfg](std::size_t r) {
            Result res;
            try {
                const fs::path dir = run_dir_for(cfg, r);
                fs::create_directories(dir);
                write_text(dir / "config.toml", serialize_config(cfg));
                const std::uint64_t seed = repeat_seed(cfg.seed, r);
                FileSink file(dir / "record.jsonl");
                res.out = run_dmc(cfg, seed, r, configured_backends(cfg, seed), file.sink());
                write_text(dir / "metrics.csv", metrics_csv(res.out.metrics));
            } catch (const Error& e) {
                res.error = e;
            }
            return res;
        });

        CurveTable table;
        int status = exit_code::ok;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& res = results[i];
            if (res.error) {
                status = status ? status : report_error(*res.error, io);
                continue;
            }
            add_stage_rows(table, res.out.metrics);
            io.out << run_dir_for(cfg, i + 1).string() << ": " << (res.out.complete ? "complete" : "INCOMPLETE") << '\n';
            if (!res.out.complete) {
                io.err << "error: " << res.out.failure << '\n';
                if (!status) status = exit_code_for(res.out.failure_code);
            }
        }
        write_text(fs::path(cfg.output_dir) / "summary.csv", table.long_csv());
        io.out << table.wide_csv();
        return status;
    } catch (const Error& e) {
        return report_error(e, io);
    }
}

int cmd_run_sentiment(const RunConfig& cfg, const fs::path& dataset, CommandIO io) {
    try {
        cfg.validate();
        if (cfg.task != TaskKind::sentiment) fail(Errc::config_error, "config task is not sentiment");
        auto samples = sentiment::load_dataset(dataset);
        if (cfg.sentiment.limit && *cfg.sentiment.limit < samples.size()) samples.resize(*cfg.sentiment.limit);
        fs::create_directories(cfg.output_dir);

        struct Result {
            SentimentRunOutput out;
            std::optional<Error> error;
        };
        auto results = for_each_repeat<Result>(cfg, [&](std::size_t r) {
            Result res;
            try {
                const fs::path dir = run_dir_for(cfg, r);
                fs::create_directories(dir);
                write_text(dir / "config.toml", serialize_config(cfg));
                const std::uint64_t seed = repeat_seed(cfg.seed, r);
                FileSink file(dir / "record.jsonl");
                res.out = run_sentiment(cfg, samples, seed, r, configured_backends(cfg, seed), file.sink());
                std::string results_jsonl;
                for (const auto& p : res.out.pairs) {
                    results_jsonl += dump({{"phase", p.phase},
                                           {"index", p.index},
                                           {"sentence", p.sentence},
                                           {"single", p.single_output},
                                           {"network", p.network_output},
                                           {"position_a", p.verdict.a_first ? "single" : "network"},
                                           {"position_b", p.verdict.a_first ? "network" : "single"},
                                           {"winner", p.verdict.winner == sentiment::Winner::a   ? "single"
                                                      : p.verdict.winner == sentiment::Winner::b ? "network"
                                                                                                 : "tie"},
                                           {"rationale", p.verdict.rationale}}) +
                                     "\n";
                }
                write_text(dir / "results.jsonl", results_jsonl);
                write_text(dir / "tallies.csv", tally_csv(res.out.without_feedback, res.out.with_feedback));
            } catch (const Error& e) {
                res.error = e;
            }
            return res;
        });

        int status = exit_code::ok;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& res = results[i];
            if (res.error) {
                status = status ? status : report_error(*res.error, io);
                continue;
            }
            io.out << run_dir_for(cfg, i + 1).string() << ": " << (res.out.complete ? "complete" : "INCOMPLETE") << '\n'
                   << tally_csv(res.out.without_feedback, res.out.with_feedback);
            if (!res.out.complete) {
                io.err << "error: " << res.out.failure << '\n';
                if (!status) status = exit_code_for(res.out.failure_code);
            }
        }
        return status;
    } catch (const Error& e) {
        return report_error(e, io);
    }
}

int cmd_replay(const fs::path& run_dir, CommandIO io) {
    try {
        const fs::path file = record_file_of(run_dir);
        if (!fs::exists(file)) fail(Errc::io_error, "no record at " + file.string());
        const ReplayReport report = replay_record(file);
        if (report.divergence) {
            const auto& d = *report.divergence;
            io.err << "error: DivergenceDetected: line " << d.line;
            if (!d.session.empty()) io.err << ", session " << d.session << ", turn " << d.turn;
            io.err << ", byte " << d.offset << ": " << d.detail << '\n';
            return exit_code::divergence;
        }
        io.out << "replay ok: " << report.exchanges << " exchanges, " << report.lines
               << " record lines, 0 divergences\n";
        return exit_code::ok;
    } catch (const Error& e) {
        return report_error(e, io);
    }
}

int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& out_dir, CommandIO io) {
    try {
        if (run_dirs.empty()) fail(Errc::config_error, "report needs at least one run directory");
        std::vector<fs::path> files;
        for (const auto& p : run_dirs) {
            if (fs::is_regular_file(p) || fs::exists(p / "record.jsonl")) {
                files.push_back(record_file_of(p));
                continue;
            }
            if (!fs::is_directory(p)) fail(Errc::io_error, "no run record at " + p.string());
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p))
                if (entry.is_directory() && fs::exists(entry.path() / "record.jsonl"))
                    found.push_back(entry.path() / "record.jsonl");
            if (found.empty()) fail(Errc::io_error, "no run record under " + p.string());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        }

        std::string task;
        CurveTable table;
        std::map<std::string, sentiment::Tally> tallies;
        for (const auto& file : files) {
            const ParsedRecord rec = parse_record(file);
            const auto& last = rec.events.back();
            if (last.value("event", "") != "complete" || !last.value("ok", false))
                io.err << "warning: " << file.string() << " is incomplete\n";
            const std::string this_task = rec.events.front().value("task", "");
            if (task.empty()) task = this_task;
            if (task != this_task) fail(Errc::config_error, "cannot report dmc and sentiment runs together");
            for (const auto& e : rec.events) {
                const auto kind = e.value("event", "");
                if (kind == "stage") {
                    const std::string system = e.value("system", "");
                    const auto stage = e.value("stage", std::size_t{0});
                    table.add(system, stage, e.value("accuracy", 0.0));
                    if (system == "network") table.add("network_members", stage, e.value("member_mean", 0.0));
                } else if (kind == "verdict") {
                    auto& t = tallies[e.value("phase", "")];
                    const auto w = sentiment::parse_winner(e.value("winner", "tie"));
                    (w == sentiment::Winner::a ? t.win : w == sentiment::Winner::b ? t.loss : t.tie)++;
                }
            }
        }

        if (task == "sentiment") {
            const std::string csv = tally_csv(tallies["without_feedback"], tallies["with_feedback"]);
            io.out << csv;
            if (out_dir) {
                fs::create_directories(*out_dir);
                write_text(*out_dir / "report_tallies.csv", csv);
            }
        } else {
            io.out << table.wide_csv() << '\n' << table.long_csv();
            if (out_dir) {
                fs::create_directories(*out_dir);
                write_text(*out_dir / "report_stages.csv", table.wide_csv());
                write_text(*out_dir / "report_long.csv", table.long_csv());
            }
        }
        return exit_code::ok;
    } catch (const Error& e) {
        return report_error(e, io);
    } catch (const fs::filesystem_error& e) {
        io.err << "error: " << e.what() << '\n';
        return exit_code::data;
    }
}

} // namespace chatnet
