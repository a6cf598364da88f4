#pragma once

// Digital mode classification: a vector of integers belongs to the category
// given by the 1-based position of its unique largest component.

#include "chatnet/backend.hpp"
#include "chatnet/journal.hpp"
#include "chatnet/task.hpp"
#include "chatnet/trainer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chatnet::dmc {

struct DigitalVector {
    std::vector<int> components;
    int label = 1;

    bool operator==(const DigitalVector&) const = default;
};

struct ValueRange {
    int low = 1;
    int high = 99;
};

// 1-based argmax. Throws AmbiguousMax when the maximum is shared.
int oracle_label(std::span<const int> components);

// Seeded generator. Labels are balanced across categories (within one) and
// every vector has a unique maximum. With max_gap set, the largest
// component exceeds the runner-up by at most max_gap ("challenging" split).
std::vector<DigitalVector> generate_dataset(std::size_t count, int dims, ValueRange range,
                                            std::uint64_t seed, std::optional<int> max_gap = std::nullopt);

// Category named in free text: "<ordinal> category|class", "category|class N",
// or a bare trailing number. The last mention wins. Values outside 1..dims
// are ignored.
std::optional<int> parse_category(std::string_view text, int dims);

// Labels from an enumerated reply ("1: category 2" per line). Positions that
// are missing or unparseable are nullopt.
std::vector<std::optional<int>> parse_batch(std::string_view text, std::size_t n, int dims);

// Most frequent answer; ties go to the tied answer given by the lowest-index
// voter. nullopt when nobody answered.
std::optional<int> majority_vote(std::span<const std::optional<int>> votes);

std::string format_components(std::span<const int> components);  // "48, 68, 49"
// Every comma-separated integer list in the text, in order of appearance.
std::vector<std::vector<int>> find_vectors(std::string_view text);
std::string category_phrase(int category);  // "the second category"

std::string batch_question(std::span<const DigitalVector> vectors);
std::string batch_question(std::span<const TaskSample> samples);
// Enumerated reply in the format parse_batch reads.
std::string batch_reply(std::span<const std::optional<int>> labels);

TaskSample to_sample(const DigitalVector& v);
std::vector<TaskSample> to_samples(std::span<const DigitalVector> vectors);
AnswerMatcher matcher(int dims);

constexpr std::string_view default_instruction =
    "Each input is a vector of integers that belongs to one category under a hidden rule. "
    "Guess the category of each vector, state it as \"the N-th category\", and explain your "
    "reasoning. You will receive feedback on your guesses.";

// Dataset file: one vector per line, "c1,c2,...,cD,label".
void write_dataset(std::ostream& out, std::span<const DigitalVector> vectors);
std::vector<DigitalVector> read_dataset(std::istream& in);

enum class BaselineKind { no_feedback, refine, ensemble };

std::string_view baseline_name(BaselineKind kind);
BaselineKind parse_baseline(std::string_view name);

inline constexpr std::string_view refine_instruction = "refine your answer";

using SessionFactory = std::function<Session(const std::string& id)>;

struct BaselineRun {
    BaselineKind kind = BaselineKind::no_feedback;
    std::vector<StageMetrics> stages;
    std::size_t refine_turns = 0;
    bool complete = false;
};

// Single models (or a three-member ensemble) shown each training vector with
// its label; evaluated on the same staged schedule as the network.
BaselineRun run_baseline(BaselineKind kind, std::span<const DigitalVector> train,
                         std::span<const DigitalVector> test, const SessionFactory& sessions,
                         const TrainingSchedule& schedule, Journal& journal, int dims);

} // namespace chatnet::dmc
