#pragma once

#include "chatnet/error.hpp"
#include "chatnet/feedback.hpp"
#include "chatnet/forward.hpp"
#include "chatnet/task.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chatnet {

struct TrainingSchedule {
    std::size_t samples_per_stage = 3;
    std::size_t num_stages = 8;
    std::size_t max_iterations = 24;        // cap on training samples consumed
    std::optional<std::size_t> patience;    // stages without strict improvement; nullopt = never

    // Training samples a full run may consume.
    std::size_t samples_needed() const;
};

struct StageMetrics {
    std::size_t stage = 0;
    double accuracy = 0.0;                       // final output
    std::map<NodeRef, double> per_node_accuracy;
    double member_mean = 0.0;                    // mean over non-aggregator members
    std::uint64_t timestamp = 0;                 // logical clock
    std::size_t samples_consumed = 0;
};

struct SampleRecord {
    std::size_t stage = 0;
    std::size_t index = 0;  // position in the training stream
    ForwardResult forward;
    FeedbackResult feedback;
};

struct TrainingRun {
    std::vector<SampleRecord> samples;
    std::vector<StageMetrics> stages;
    bool complete = false;
    std::string failure;
    std::optional<Errc> failure_code;
};

struct TrainerContext {
    const TemplateSet& templates;
    const AnswerMatcher& matcher;
    Journal& journal;
    ForwardOptions forward;
    FeedbackOptions feedback;
    std::function<void(const SampleRecord&)> on_sample;
    std::function<void(const StageMetrics&)> on_stage;
};

double accuracy(std::span<const std::optional<std::string>> predictions, std::span<const TaskSample> gold);

// Forward pass with dropout then feedback, per sample, in order.
std::vector<SampleRecord> run_stage(Network& network, std::span<const TaskSample> samples, Rng& rng,
                                    TrainerContext& ctx, std::size_t stage = 1, std::size_t first_index = 0);

// One full-network pass over all test questions in a single prompt, with no
// feedback. Transcripts are restored afterwards.
StageMetrics evaluate(Network& network, std::span<const TaskSample> test, TrainerContext& ctx,
                      std::size_t stage = 0);

bool early_stop_check(std::span<const StageMetrics> history, const TrainingSchedule& schedule);

// Alternates run_stage and evaluate until early_stop_check fires. Backend
// failures end the run with complete = false and the partial history.
TrainingRun train(Network& network, std::span<const TaskSample> train_stream, std::span<const TaskSample> test,
                  const TrainingSchedule& schedule, Rng& rng, TrainerContext& ctx);

} // namespace chatnet
