#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace chatnet;
using namespace chatnet::testing;

TEST_CASE("oracle label") {
    CHECK(dmc::oracle_label(std::vector<int>{1, 2, 4}) == 3);
    CHECK(dmc::oracle_label(std::vector<int>{48, 68, 49}) == 2);
    try {
        dmc::oracle_label(std::vector<int>{7, 7, 3});
        FAIL("expected AmbiguousMax");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ambiguous_max);
    }
    CHECK_THROWS_AS(dmc::oracle_label(std::vector<int>{5}), Error);
}

TEST_CASE("generated datasets are balanced, unique-max and seeded") {
    const auto a = dmc::generate_dataset(24, 3, {1, 99}, 42);
    REQUIRE(a.size() == 24);
    std::array<int, 3> per{};
    for (const auto& v : a) {
        CHECK(v.components.size() == 3);
        CHECK(v.label == dmc::oracle_label(v.components));
        for (int c : v.components) CHECK((c >= 1 && c <= 99));
        ++per[static_cast<std::size_t>(v.label - 1)];
    }
    CHECK(per == std::array<int, 3>{8, 8, 8});
    CHECK(dmc::generate_dataset(24, 3, {1, 99}, 42) == a);
    CHECK(dmc::generate_dataset(24, 3, {1, 99}, 43) != a);
}

TEST_CASE("challenging split keeps the max-to-runner-up gap small") {
    const auto t = dmc::generate_dataset(30, 3, {1, 99}, 9, 5);
    REQUIRE(t.size() == 30);
    for (const auto& v : t) {
        auto sorted = v.components;
        std::sort(sorted.rbegin(), sorted.rend());
        CHECK(sorted[0] > sorted[1]);
        CHECK(sorted[0] - sorted[1] <= 5);
    }
    CHECK_THROWS_AS(dmc::generate_dataset(3, 3, {5, 5}, 1), Error);
    CHECK_THROWS_AS(dmc::generate_dataset(3, 3, {1, 99}, 1, 0), Error);
}

TEST_CASE("parse_category") {
    CHECK(dmc::parse_category("belongs to the second category", 3) == 2);
    CHECK(dmc::parse_category("maybe the first… combining explanations, I guess the second category", 3) == 2);
    CHECK(dmc::parse_category("I cannot decide", 3) == std::nullopt);
    CHECK(dmc::parse_category("Category 3.", 3) == 3);
    CHECK(dmc::parse_category("the answer is 1", 3) == 1);
    CHECK(dmc::parse_category("the fourth category", 3) == std::nullopt);
    CHECK(dmc::parse_category("the fourth category", 4) == 4);
}

TEST_CASE("parse_batch") {
    using V = std::vector<std::optional<int>>;
    CHECK(dmc::parse_batch("1: category 2\n2: category 1\n3: category 3", 3, 3) == V{2, 1, 3});
    CHECK(dmc::parse_batch("1: category 2\n2: category 1", 3, 3) == V{2, 1, std::nullopt});
    CHECK(dmc::parse_batch("", 3, 3) == V{std::nullopt, std::nullopt, std::nullopt});
    CHECK(dmc::parse_batch("3. the first category\n1) the third category", 3, 3) == V{3, std::nullopt, 1});
    CHECK(dmc::parse_batch("first category\nsecond category", 2, 3) == V{1, 2});
}

TEST_CASE("majority vote") {
    using V = std::vector<std::optional<int>>;
    CHECK(dmc::majority_vote(V{2, 2, 3}) == 2);
    CHECK(dmc::majority_vote(V{1, 2, 3}) == 1);
    CHECK(dmc::majority_vote(V{3, 1, 1, 3}) == 3);
    CHECK(dmc::majority_vote(V{std::nullopt, 2, std::nullopt}) == 2);
    CHECK(dmc::majority_vote(V{std::nullopt, std::nullopt}) == std::nullopt);
    CHECK(dmc::majority_vote(V{}) == std::nullopt);
}

TEST_CASE("scripted argmax replies round-trip through the parser") {
    auto b = scripted(policy::ArgmaxClassifier{});
    for (const auto& v : dmc::generate_dataset(60, 3, {1, 99}, 77))
        CHECK(dmc::parse_category(b->send(user_turn(dmc::format_components(v.components))), 3) == v.label);
}

TEST_CASE("formatting helpers") {
    CHECK(dmc::format_components(std::vector<int>{48, 68, 49}) == "48, 68, 49");
    CHECK(dmc::category_phrase(2) == "the second category");
    CHECK(dmc::find_vectors("first 1, 2, 3 then -4,5 and 6") ==
          std::vector<std::vector<int>>{{1, 2, 3}, {-4, 5}});
    const auto s = dmc::to_sample({{48, 68, 49}, 2});
    CHECK(s.question == "48, 68, 49");
    CHECK(s.answer == "2");
    CHECK(s.answer_text == "the second category");
    const std::vector<dmc::DigitalVector> vs{{{1, 2, 4}, 3}, {{9, 1, 1}, 1}};
    const std::string q = dmc::batch_question(vs);
    CHECK(q.find("1: 1, 2, 4\n2: 9, 1, 1") != std::string::npos);
    CHECK(dmc::batch_reply(std::vector<std::optional<int>>{3, std::nullopt, 1}) == "1: category 3\n3: category 1");
}

TEST_CASE("dataset files round-trip and are validated") {
    const auto data = dmc::generate_dataset(12, 4, {1, 50}, 3);
    std::stringstream buf;
    dmc::write_dataset(buf, data);
    CHECK(dmc::read_dataset(buf) == data);

    std::istringstream bad("1,2,3,1\n");
    CHECK_THROWS_AS(dmc::read_dataset(bad), Error);
}

TEST_CASE("refine baseline with a perfect model never refines") {
    const auto train = dmc::generate_dataset(24, 3, {1, 99}, 5);
    const auto test = dmc::generate_dataset(30, 3, {1, 99}, 6, 5);
    Journal journal;
    const auto factory = [](const std::string& id) { return Session(id, scripted(policy::ArgmaxClassifier{})); };
    const auto run = dmc::run_baseline(dmc::BaselineKind::refine, train, test, factory,
                                       TrainingSchedule{3, 8, 24, std::nullopt}, journal, 3);
    CHECK(run.complete);
    CHECK(run.refine_turns == 0);
    REQUIRE(run.stages.size() == 8);
    for (const auto& s : run.stages) CHECK(s.accuracy == 1.0);
    for (const auto& e : journal.exchanges()) CHECK(e.kind != "refine");
}

TEST_CASE("refine baseline asks again after a wrong reply") {
    const auto train = dmc::generate_dataset(24, 3, {1, 99}, 5);
    const auto test = dmc::generate_dataset(30, 3, {1, 99}, 6, 5);
    Journal journal;
    const auto factory = [](const std::string& id) { return Session(id, scripted(policy::FixedDimClassifier{1})); };
    const auto run = dmc::run_baseline(dmc::BaselineKind::refine, train, test, factory,
                                       TrainingSchedule{3, 8, 24, std::nullopt}, journal, 3);
    CHECK(run.refine_turns == 16);
    std::size_t refine_exchanges = 0;
    for (const auto& e : journal.exchanges())
        if (e.kind == "refine") {
            ++refine_exchanges;
            CHECK(e.prompt == dmc::refine_instruction);
        }
    CHECK(refine_exchanges == 16);
}

TEST_CASE("ensemble baseline votes per item") {
    const auto train = dmc::generate_dataset(6, 3, {1, 99}, 5);
    const auto test = dmc::generate_dataset(30, 3, {1, 99}, 6, 5);
    Journal journal;
    const auto factory = [](const std::string& id) {
        if (id == "ensemble/1") return Session(id, scripted(policy::ArgmaxClassifier{}));
        if (id == "ensemble/2") return Session(id, scripted(policy::FixedDimClassifier{1}));
        return Session(id, scripted(policy::FixedDimClassifier{2}));
    };
    const auto run = dmc::run_baseline(dmc::BaselineKind::ensemble, train, test, factory,
                                       TrainingSchedule{3, 2, 6, std::nullopt}, journal, 3);
    REQUIRE(run.stages.size() == 2);
    // Votes {argmax, 1, 2}: the argmax wins whenever it is 1 or 2, else the tie goes to the first voter.
    std::size_t expected = 0;
    for (const auto& v : test) {
        const std::vector<std::optional<int>> votes{v.label, 1, 2};
        if (dmc::majority_vote(votes) == v.label) ++expected;
    }
    CHECK(run.stages.front().accuracy == doctest::Approx(static_cast<double>(expected) / 30.0));
    CHECK(run.stages.front().accuracy == 1.0);
}

TEST_CASE("baseline names") {
    for (auto k : {dmc::BaselineKind::no_feedback, dmc::BaselineKind::refine, dmc::BaselineKind::ensemble})
        CHECK(dmc::parse_baseline(dmc::baseline_name(k)) == k);
    CHECK_THROWS_AS(dmc::parse_baseline("bogus"), Error);
}

TEST_CASE("category parser matches the golden corpus") {
    std::ifstream in(std::string(CHATNET_SOURCE_DIR) + "/tests/data/parse_golden.tsv");
    REQUIRE(in);
    std::size_t cases = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.empty() || line.front() == '#') continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = line.find('\t', tab1 + 1);
        REQUIRE(tab2 != std::string::npos);
        const std::string expected = line.substr(0, tab1);
        const int dims = std::stoi(line.substr(tab1 + 1, tab2 - tab1 - 1));
        const std::string text = line.substr(tab2 + 1);
        CAPTURE(text);
        const auto got = dmc::parse_category(text, dims);
        if (expected == "none") CHECK_FALSE(got.has_value());
        else CHECK(got == std::optional<int>(std::stoi(expected)));
        ++cases;
    }
    CHECK(cases == 50);
}
