#pragma once

// Experiment drivers, run records, replay and reports.
//
// A run record is a JSON-lines file. Every line is one event:
//   header     format, version, task, repeat, seed
//   config     canonical config text
//   dataset    the vectors or sentences used
//   exchange   one prompt/reply round trip (seq, session, kind, prompt, reply)
//   forward    masks and per-node sequence numbers of one forward pass
//   feedback   per-node judgments and reflection sources of one backward pass
//   stage      accuracies of one system after one stage
//   baseline   summary of one baseline run
//   verdict    one judged sentiment pair
//   complete   ok flag, line count and FNV-1a checksum of all earlier lines
// Nothing in a record depends on wall-clock time, so a scripted run is
// reproduced byte for byte from its config and seed.

#include "chatnet/config.hpp"
#include "chatnet/error.hpp"
#include "chatnet/sentiment.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chatnet {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;  // bad config or arguments
inline constexpr int backend = 3;
inline constexpr int divergence = 4;
inline constexpr int data = 5;  // dataset or record unreadable
inline constexpr int incomplete = 6;
} // namespace exit_code

int exit_code_for(Errc code);

using LineSink = std::function<void(const std::string& line)>;
using BackendMaker = std::function<std::unique_ptr<ChatBackend>(const std::string& session_id, const BackendConfig& cfg)>;

// Backends as configured; scripted seeds derive from `master`.
BackendMaker configured_backends(const RunConfig& cfg, std::uint64_t master);

// Seed of repeat r (1-based) of a run with the given master seed.
std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat);

std::uint64_t record_checksum(std::span<const std::string> lines);

struct MetricRow {
    std::string system;
    std::size_t stage = 0;
    std::string node;  // "final", "member_mean" or a node such as "1.2"
    double accuracy = 0.0;
};

struct DmcRunOutput {
    bool complete = false;
    std::string failure;
    Errc failure_code = Errc::precondition;
    std::vector<MetricRow> metrics;
};

DmcRunOutput run_dmc(const RunConfig& cfg, std::uint64_t seed, std::size_t repeat, const BackendMaker& make,
                     const LineSink& sink);

struct SentimentPair {
    std::string phase;  // "without_feedback" or "with_feedback"
    std::size_t index = 0;
    std::string sentence;
    std::string single_output;   // candidate a
    std::string network_output;  // candidate b
    sentiment::JudgeVerdict verdict;
};

struct SentimentRunOutput {
    bool complete = false;
    std::string failure;
    Errc failure_code = Errc::precondition;
    std::vector<SentimentPair> pairs;
    sentiment::Tally without_feedback;  // counted for the single model
    sentiment::Tally with_feedback;
};

SentimentRunOutput run_sentiment(const RunConfig& cfg, std::span<const sentiment::SentimentSample> samples,
                                 std::uint64_t seed, std::size_t repeat, const BackendMaker& make,
                                 const LineSink& sink);

struct Divergence {
    std::size_t line = 0;    // 1-based line of the record
    std::string session;     // empty for non-exchange lines
    std::size_t turn = 0;    // 1-based exchange index within the session
    std::size_t offset = 0;  // first differing byte
    std::string detail;
};

struct ReplayReport {
    std::size_t lines = 0;
    std::size_t exchanges = 0;
    std::optional<Divergence> divergence;
};

// Re-executes a recorded run against replay backends and compares the
// regenerated record with the stored one. Throws RefusedIncomplete when
// the record did not finish.
ReplayReport replay_record(const std::filesystem::path& record_file);

struct CommandIO {
    std::ostream& out;
    std::ostream& err;
};

// Each command returns an exit status and reports errors on io.err.
int cmd_run_dmc(const RunConfig& cfg, CommandIO io);
int cmd_run_sentiment(const RunConfig& cfg, const std::filesystem::path& dataset, CommandIO io);
int cmd_replay(const std::filesystem::path& run_dir, CommandIO io);
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::optional<std::filesystem::path>& out_dir,
               CommandIO io);

// Spread used in summaries: sample standard deviation as a percentage of
// the mean (0 for fewer than two values or a zero mean).
double spread_pct(std::span<const double> values);

} // namespace chatnet
