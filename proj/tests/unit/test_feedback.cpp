#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "chatnet/feedback.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

using namespace chatnet;
using namespace chatnet::testing;

namespace {

const AnswerExtractor extract = dmc::matcher(3).extract;

NodeJudge judge_against(const std::string& answer) {
    return [answer](NodeRef node, std::string_view out) { return judge_correct(out, answer, extract, node); };
}

// Judges by a fixed verdict per node regardless of the output text.
NodeJudge fixed_judge(std::map<NodeRef, bool> verdicts) {
    return [verdicts](NodeRef node, std::string_view) {
        CorrectnessJudgment j;
        j.node = node;
        j.correct = verdicts.at(node);
        j.reason = j.correct ? JudgeReason::matched : JudgeReason::mismatched;
        return j;
    };
}

} // namespace

TEST_CASE("judge_correct") {
    auto a = judge_correct("Taking into account all the responses, I would lean towards classifying it into the second "
                           "category because the second feature value is large.",
                           "2", extract);
    CHECK(a.correct);
    CHECK(a.reason == JudgeReason::matched);
    CHECK(a.extracted_answer == "2");

    auto b = judge_correct("belongs to the first category", "2", extract);
    CHECK_FALSE(b.correct);
    CHECK(b.reason == JudgeReason::mismatched);

    auto c = judge_correct("I need more data to decide.", "2", extract);
    CHECK_FALSE(c.correct);
    CHECK(c.reason == JudgeReason::unparseable);
    CHECK_FALSE(c.extracted_answer.has_value());
}

TEST_CASE("one wrong employee hears the leader reflection") {
    auto net = scripted_network({3, 1}, 1.0,
                                {policy::FixedDimClassifier{1}, policy::ArgmaxClassifier{}, policy::ArgmaxClassifier{},
                                 policy::ReplayList{{"Based on my guess, this data point belongs to the second category.",
                                                     "LEADER REFLECTION: the second feature is what matters."}}});
    Rng rng(0);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "48, 68, 49", rng, t, journal);
    const auto fb = backward_pass(net, "the second category", fwd, judge_against("2"), t, journal);

    CHECK(fb.per_node.front().node == NodeRef{2, 1});
    const auto& leader = fb.at({2, 1});
    CHECK(leader.judgment.correct);
    CHECK(leader.reflection == "LEADER REFLECTION: the second feature is what matters.");

    const auto& wrong = fb.at({1, 1});
    CHECK_FALSE(wrong.judgment.correct);
    CHECK(wrong.heard_from == std::vector<NodeRef>{{2, 1}});
    CHECK(wrong.input == "The correct answer is the second category.\n"
                         "You guessed wrong. Please speculate a possible reason and update your classification criteria.\n"
                         "Here is one person's thinking for your reference:\n"
                         "LEADER REFLECTION: the second feature is what matters.");

    for (NodeRef n : {NodeRef{1, 2}, NodeRef{1, 3}}) {
        const auto& ok = fb.at(n);
        CHECK(ok.judgment.correct);
        CHECK(ok.heard_from.empty());
        CHECK(ok.input.find("You guessed it right") != std::string::npos);
        CHECK(ok.input.find("LEADER") == std::string::npos);
    }
    for (NodeRef n : {NodeRef{1, 1}, NodeRef{1, 2}, NodeRef{1, 3}}) CHECK(leader.seq < fb.at(n).seq);
}

TEST_CASE("all correct nodes get only the right prompt") {
    auto net = scripted_network({3, 1}, 1.0,
                                {policy::ArgmaxClassifier{}, policy::ArgmaxClassifier{}, policy::ArgmaxClassifier{},
                                 policy::MajorityAggregator{}});
    Rng rng(0);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "48, 68, 49", rng, t, journal);
    const auto fb = backward_pass(net, "the second category", fwd, judge_against("2"), t, journal);
    const std::string expected = assemble_feedback_input("the second category", true, {}, t);
    for (const auto& n : fb.per_node) {
        CHECK(n.judgment.correct);
        CHECK(n.input == expected);
    }
}

TEST_CASE("a wrong employee receives the reflection, not the forward output") {
    auto net = scripted_network({1, 1}, 1.0,
                                {policy::ReplayList{{"EMPLOYEE-FORWARD", "EMPLOYEE-REFLECTION"}},
                                 policy::ReplayList{{"LEADER-FORWARD", "LEADER-REFLECTION"}}});
    Rng rng(0);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "Q", rng, t, journal);
    const auto fb = backward_pass(net, "2", fwd, fixed_judge({{{1, 1}, false}, {{2, 1}, false}}), t, journal);
    const auto& employee = fb.at({1, 1});
    CHECK(employee.input.find("LEADER-REFLECTION") != std::string::npos);
    CHECK(employee.input.find("LEADER-FORWARD") == std::string::npos);
    CHECK(fb.at({2, 1}).input.find("Please speculate a possible reason") != std::string::npos);
    CHECK(fb.at({2, 1}).heard_from.empty());
    CHECK(fb.at({2, 1}).seq < employee.seq);
}

TEST_CASE("fan-in follows the forward mask unless configured otherwise") {
    // Find a seed whose mask drops the first employee.
    std::uint64_t seed = 0;
    for (;; ++seed) {
        Rng probe(seed);
        if (!sample_dropout_mask(probe, {2, 1}, std::vector<NodeRef>{{1, 1}, {1, 2}, {1, 3}}, 0.5).includes({1, 1}))
            break;
    }
    const auto t = TemplateSet::transcript();
    const auto all_wrong = fixed_judge({{{1, 1}, false}, {{1, 2}, false}, {{1, 3}, false}, {{2, 1}, false}});
    for (FanIn mode : {FanIn::mirror_mask, FanIn::all_leaders}) {
        auto net = scripted_network({3, 1}, 0.5,
                                    {policy::ReplayList{{"e1", "r1"}}, policy::ReplayList{{"e2", "r2"}},
                                     policy::ReplayList{{"e3", "r3"}}, policy::ReplayList{{"lead", "lead-reflect"}}});
        Rng rng(seed);
        Journal journal;
        const auto fwd = forward_pass(net, "Q", rng, t, journal);
        REQUIRE_FALSE(fwd.mask_for({2, 1})->includes({1, 1}));
        FeedbackOptions opts;
        opts.fan_in = mode;
        const auto fb = backward_pass(net, "2", fwd, all_wrong, t, journal, opts);
        const bool heard = fb.at({1, 1}).input.find("lead-reflect") != std::string::npos;
        CHECK(heard == (mode == FanIn::all_leaders));
        for (NodeRef n : {NodeRef{1, 2}, NodeRef{1, 3}}) {
            const bool informed = fwd.mask_for({2, 1})->includes(n);
            CHECK((fb.at(n).input.find("lead-reflect") != std::string::npos) == (informed || mode == FanIn::all_leaders));
        }
    }
}

TEST_CASE("all-ancestors fan-in reaches every higher layer") {
    auto net = scripted_network({1, 1, 1}, 1.0,
                                {policy::ReplayList{{"a", "a2"}}, policy::ReplayList{{"b", "MID-REFLECT"}},
                                 policy::ReplayList{{"c", "TOP-REFLECT"}}});
    Rng rng(0);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "Q", rng, t, journal);
    FeedbackOptions opts;
    opts.fan_in = FanIn::all_ancestors;
    const auto fb =
        backward_pass(net, "2", fwd, fixed_judge({{{1, 1}, false}, {{2, 1}, false}, {{3, 1}, false}}), t, journal, opts);
    CHECK(fb.at({1, 1}).heard_from == std::vector<NodeRef>{{2, 1}, {3, 1}});
    CHECK(fb.at({1, 1}).input.find("MID-REFLECT") != std::string::npos);
    CHECK(fb.at({1, 1}).input.find("TOP-REFLECT") != std::string::npos);
    CHECK(fb.at({2, 1}).heard_from == std::vector<NodeRef>{{3, 1}});
    CHECK(parse_fan_in("all_ancestors") == FanIn::all_ancestors);
    CHECK_THROWS_AS(parse_fan_in("sideways"), Error);
}

TEST_CASE("each backward pass appends exactly one turn pair per node") {
    auto net = scripted_network({3, 1}, 0.5,
                                {policy::NoisyClassifier{0.5}, policy::NoisyClassifier{0.5},
                                 policy::NoisyClassifier{0.5}, policy::MajorityAggregator{}});
    Rng rng(4);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "5, 90, 7", rng, t, journal);
    const auto before = net.marks();
    backward_pass(net, "the second category", fwd, judge_against("2"), t, journal);
    const auto after = net.marks();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i] + 2);
}

TEST_CASE("backward pass failures roll back") {
    auto net = scripted_network({1, 1}, 1.0,
                                {policy::ReplayList{{"e"}}, policy::ReplayList{{"l", "l2"}}});
    Rng rng(0);
    Journal journal;
    const auto t = TemplateSet::transcript();
    const auto fwd = forward_pass(net, "Q", rng, t, journal);
    const auto before = net.marks();
    CHECK_THROWS_AS(backward_pass(net, "2", fwd, fixed_judge({{{1, 1}, false}, {{2, 1}, true}}), t, journal), Error);
    CHECK(net.marks() == before);
}
