#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "chatnet/trainer.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

using namespace chatnet;
using namespace chatnet::testing;

namespace {

struct Fixture {
    TemplateSet templates = TemplateSet::transcript();
    AnswerMatcher matcher = dmc::matcher(3);
    Journal journal;
    TrainerContext ctx{templates, matcher, journal, {}, {}, {}, {}};
    std::vector<TaskSample> train = dmc::to_samples(dmc::generate_dataset(30, 3, {1, 99}, 17));
    std::vector<TaskSample> test = dmc::to_samples(dmc::generate_dataset(30, 3, {1, 99}, 18, 5));
};

Network argmax_network() {
    return scripted_network({3, 1}, 0.5,
                            {policy::ArgmaxClassifier{}, policy::ArgmaxClassifier{}, policy::ArgmaxClassifier{},
                             policy::MajorityAggregator{}});
}

std::vector<StageMetrics> history(std::initializer_list<double> accs) {
    std::vector<StageMetrics> out;
    std::size_t stage = 1;
    for (double a : accs) {
        StageMetrics m;
        m.stage = stage++;
        m.accuracy = a;
        out.push_back(m);
    }
    return out;
}

} // namespace

TEST_CASE("accuracy counts exact matches over the gold set") {
    const std::vector<TaskSample> gold{{"", "1", ""}, {"", "2", ""}, {"", "2", ""}};
    const std::vector<std::optional<std::string>> pred{"1", "2", "3"};
    CHECK(accuracy(pred, gold) == doctest::Approx(2.0 / 3.0));

    std::vector<TaskSample> thirty(30, TaskSample{"", "1", ""});
    std::vector<std::optional<std::string>> all(30, std::string("1"));
    CHECK(accuracy(all, thirty) == 1.0);
    all[29] = std::nullopt;
    CHECK(accuracy(all, thirty) == doctest::Approx(29.0 / 30.0));
}

TEST_CASE("a leader reply missing one of thirty labels scores that item wrong") {
    Fixture f;
    std::vector<std::optional<int>> labels;
    for (const auto& s : f.test) labels.push_back(std::stoi(s.answer));
    labels[12] = std::nullopt;
    const std::string reply = dmc::batch_reply(labels);
    const auto preds = f.matcher.extract_batch(reply, f.test.size());
    CHECK(accuracy(preds, f.test) == doctest::Approx(29.0 / 30.0));
}

TEST_CASE("run_stage interleaves forward and feedback per sample") {
    Fixture f;
    auto net = argmax_network();
    Rng rng(1);
    const auto records = run_stage(net, std::span(f.train).first(3), rng, f.ctx);
    REQUIRE(records.size() == 3);
    std::vector<std::string> kinds;
    for (const auto& e : f.journal.exchanges())
        if (kinds.empty() || kinds.back() != e.kind) kinds.push_back(e.kind);
    CHECK(kinds == std::vector<std::string>{"forward", "feedback", "forward", "feedback", "forward", "feedback"});
    for (const auto& r : records)
        for (const auto& n : r.feedback.per_node) {
            CHECK(n.judgment.correct);
            CHECK(n.input.find("You guessed it right") != std::string::npos);
        }
    CHECK_THROWS_AS(run_stage(net, std::span<const TaskSample>{}, rng, f.ctx), Error);
}

TEST_CASE("evaluation leaves training transcripts untouched") {
    Fixture f;
    auto net = argmax_network();
    Rng rng(1);
    run_stage(net, std::span(f.train).first(3), rng, f.ctx);
    std::vector<std::uint64_t> before;
    for (const auto& s : net.sessions()) before.push_back(s.transcript().digest());
    const auto m = evaluate(net, f.test, f.ctx, 1);
    CHECK(m.accuracy == 1.0);
    CHECK(m.member_mean == 1.0);
    CHECK(m.per_node_accuracy.size() == 4);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(net.sessions()[i].transcript().digest() == before[i]);
    CHECK(f.journal.exchanges().back().kind == "eval");
}

TEST_CASE("early stopping") {
    TrainingSchedule s{3, 8, 24, 2};
    CHECK(early_stop_check(history({0.3, 0.4, 0.4, 0.38}), s));
    CHECK_FALSE(early_stop_check(history({0.3, 0.4}), s));
    CHECK_FALSE(early_stop_check(history({0.3, 0.4, 0.4}), s));
    CHECK_FALSE(early_stop_check(history({0.3, 0.4, 0.4, 0.5}), s));

    TrainingSchedule unlimited{3, 8, 24, std::nullopt};
    CHECK(early_stop_check(history({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}), unlimited));
    CHECK_FALSE(early_stop_check(history({0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}), unlimited));

    TrainingSchedule capped{3, 8, 6, std::nullopt};
    CHECK(early_stop_check(history({0.1, 0.2}), capped));
    CHECK(capped.samples_needed() == 6);
    CHECK(TrainingSchedule{3, 8, 7, std::nullopt}.samples_needed() == 9);
}

TEST_CASE("a noiseless network is perfect from stage one and stops by patience") {
    Fixture f;
    auto net = scripted_network({3, 1}, 0.5,
                                {policy::NoisyClassifier{0.0}, policy::NoisyClassifier{0.0},
                                 policy::NoisyClassifier{0.0}, policy::MajorityAggregator{}});
    Rng rng(2);
    const auto run = train(net, f.train, f.test, TrainingSchedule{3, 8, 24, 2}, rng, f.ctx);
    CHECK(run.complete);
    REQUIRE(run.stages.size() == 3);
    CHECK(run.stages.front().accuracy == 1.0);
    CHECK(run.samples.size() == 9);
}

TEST_CASE("without patience a run has exactly num_stages metrics") {
    Fixture f;
    auto net = argmax_network();
    Rng rng(2);
    std::size_t stage_calls = 0;
    f.ctx.on_stage = [&](const StageMetrics&) { ++stage_calls; };
    const auto run = train(net, f.train, f.test, TrainingSchedule{3, 8, 24, std::nullopt}, rng, f.ctx);
    REQUIRE(run.stages.size() == 8);
    CHECK(stage_calls == 8);
    for (std::size_t i = 0; i < run.stages.size(); ++i) {
        CHECK(run.stages[i].stage == i + 1);
        CHECK(run.stages[i].samples_consumed == (i + 1) * 3);
        if (i) CHECK(run.stages[i - 1].timestamp < run.stages[i].timestamp);
    }
    CHECK(run.samples.size() == 24);
}

TEST_CASE("train preconditions") {
    Fixture f;
    auto net = argmax_network();
    Rng rng(2);
    const TrainingSchedule s{3, 8, 24, std::nullopt};
    CHECK_THROWS_AS(train(net, std::span<const TaskSample>{}, f.test, s, rng, f.ctx), Error);
    CHECK_THROWS_AS(train(net, std::span(f.train).first(10), f.test, s, rng, f.ctx), Error);
    CHECK_THROWS_AS(train(net, f.train, f.test, TrainingSchedule{3, 8, 24, 0}, rng, f.ctx), Error);
}

TEST_CASE("a backend failure ends training with the partial history") {
    Fixture f;
    // Enough replies for the first stage and its evaluation, then nothing.
    std::vector<std::string> replies(3 * 2 + 1, "Based on my guess, this data point belongs to the first category.");
    auto net = scripted_network({1, 1}, 1.0, {policy::ReplayList{replies}, policy::MajorityAggregator{}});
    Rng rng(2);
    const auto run = train(net, f.train, f.test, TrainingSchedule{3, 8, 24, std::nullopt}, rng, f.ctx);
    CHECK_FALSE(run.complete);
    CHECK(run.failure_code == Errc::replay_exhausted);
    CHECK(run.stages.size() == 1);
    CHECK(run.samples.size() == 3);
}
