#include "chatnet/trainer.hpp"

#include "chatnet/error.hpp"

#include <algorithm>

namespace chatnet {

std::size_t TrainingSchedule::samples_needed() const {
    const std::size_t full = num_stages * samples_per_stage;
    if (max_iterations >= full || samples_per_stage == 0) return full;
    // The cap is checked after each stage, so a partial stage still runs whole.
    const std::size_t stages = (max_iterations + samples_per_stage - 1) / samples_per_stage;
    return stages * samples_per_stage;
}

double accuracy(std::span<const std::optional<std::string>> predictions, std::span<const TaskSample> gold) {
    if (gold.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        if (i < predictions.size() && predictions[i] && *predictions[i] == gold[i].answer) ++hits;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

std::vector<SampleRecord> run_stage(Network& network, std::span<const TaskSample> samples, Rng& rng,
                                    TrainerContext& ctx, std::size_t stage, std::size_t first_index) {
    require(!samples.empty(), "a stage needs at least one training sample");
    std::vector<SampleRecord> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const TaskSample& sample = samples[i];
        SampleRecord rec;
        rec.stage = stage;
        rec.index = first_index + i;

        ForwardOptions fwd = ctx.forward;
        fwd.eval_mode = false;
        rec.forward = forward_pass(network, sample.question, rng, ctx.templates, ctx.journal, fwd);

        const auto& extract = ctx.matcher.extract;
        NodeJudge judge = [&](NodeRef node, std::string_view output) {
            return judge_correct(output, sample.answer, extract, node);
        };
        rec.feedback = backward_pass(network, sample.answer_text, rec.forward, judge, ctx.templates, ctx.journal,
                                     ctx.feedback);
        if (ctx.on_sample) ctx.on_sample(rec);
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

// Restores every transcript when evaluation ends, including by exception.
class SnapshotGuard {
public:
    explicit SnapshotGuard(Network& network) : network_(network), saved_(network.snapshot()) {}
    ~SnapshotGuard() { network_.restore(saved_); }
    SnapshotGuard(const SnapshotGuard&) = delete;
    SnapshotGuard& operator=(const SnapshotGuard&) = delete;

private:
    Network& network_;
    std::vector<Transcript> saved_;
};

} // namespace

StageMetrics evaluate(Network& network, std::span<const TaskSample> test, TrainerContext& ctx, std::size_t stage) {
    require(!test.empty(), "test set must be non-empty");
    require(static_cast<bool>(ctx.matcher.batch_question) && static_cast<bool>(ctx.matcher.extract_batch),
            "task matcher lacks batch support");

    SnapshotGuard guard(network);
    ForwardOptions fwd = ctx.forward;
    fwd.eval_mode = true;
    fwd.kind = "eval";
    Rng unused(0);
    const ForwardResult result =
        forward_pass(network, ctx.matcher.batch_question(test), unused, ctx.templates, ctx.journal, fwd);

    StageMetrics m;
    m.stage = stage;
    const auto& topo = network.topology();
    double member_sum = 0.0;
    std::size_t members = 0;
    for (const auto& io : result.per_node) {
        const auto predictions = ctx.matcher.extract_batch(io.output, test.size());
        const double acc = accuracy(predictions, test);
        m.per_node_accuracy[io.node] = acc;
        if (io.node.layer < topo.depth()) {
            member_sum += acc;
            ++members;
        }
    }
    m.accuracy = m.per_node_accuracy.at(topo.aggregator());
    m.member_mean = members ? member_sum / static_cast<double>(members) : 0.0;
    m.timestamp = ctx.journal.tick();
    return m;
}

bool early_stop_check(std::span<const StageMetrics> history, const TrainingSchedule& schedule) {
    require(!history.empty(), "early stopping needs at least one stage");
    if (history.size() >= schedule.num_stages) return true;
    if (history.size() * schedule.samples_per_stage >= schedule.max_iterations) return true;
    if (schedule.patience) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < history.size(); ++i)
            if (history[i].accuracy > history[best].accuracy) best = i;
        if (history.size() - 1 - best >= *schedule.patience) return true;
    }
    return false;
}

TrainingRun train(Network& network, std::span<const TaskSample> train_stream, std::span<const TaskSample> test,
                  const TrainingSchedule& schedule, Rng& rng, TrainerContext& ctx) {
    require(!train_stream.empty(), "training stream is empty");
    require(!test.empty(), "test set is empty");
    require(schedule.samples_per_stage > 0 && schedule.num_stages > 0 && schedule.max_iterations > 0,
            "schedule values must be positive");
    require(!schedule.patience || *schedule.patience > 0, "patience must be positive");
    require(train_stream.size() >= schedule.samples_needed(),
            "training stream has " + std::to_string(train_stream.size()) + " samples, schedule needs " +
                std::to_string(schedule.samples_needed()));

    TrainingRun run;
    std::size_t consumed = 0;

    // Collect samples as they finish so a failed stage keeps its completed samples.
    auto user_hook = std::move(ctx.on_sample);
    ctx.on_sample = [&](const SampleRecord& r) {
        run.samples.push_back(r);
        if (user_hook) user_hook(r);
    };
    struct HookRestore {
        TrainerContext& ctx;
        std::function<void(const SampleRecord&)>& hook;
        ~HookRestore() { ctx.on_sample = std::move(hook); }
    } restore{ctx, user_hook};

    try {
        for (std::size_t stage = 1;; ++stage) {
            auto batch = train_stream.subspan(consumed, schedule.samples_per_stage);
            run_stage(network, batch, rng, ctx, stage, consumed);
            consumed += batch.size();

            StageMetrics m = evaluate(network, test, ctx, stage);
            m.samples_consumed = consumed;
            if (ctx.on_stage) ctx.on_stage(m);
            run.stages.push_back(std::move(m));
            if (early_stop_check(run.stages, schedule)) break;
        }
        run.complete = true;
    } catch (const Error& e) {
        if (e.code() == Errc::precondition || e.code() == Errc::template_error) throw;
        run.failure = e.what();
        run.failure_code = e.code();
    }
    return run;
}

} // namespace chatnet
