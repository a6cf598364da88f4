#include "chatnet/conversation.hpp"
#include "chatnet/error.hpp"

#include <doctest.h>

using namespace chatnet;

TEST_CASE("transcript alternation") {
    Transcript t("n");
    t.append(Role::user, "Q");
    CHECK(t.size() == 1);
    t.append(Role::assistant, "A");
    CHECK(t.size() == 2);
    CHECK(t.messages()[1].turn_index == 1);

    Transcript u("n");
    u.append(Role::user, "Q");
    try {
        u.append(Role::user, "Q2");
        FAIL("expected AlternationViolation");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::alternation_violation);
    }
    CHECK(u.size() == 1);
}

TEST_CASE("transcript rejects misplaced system turns and empty text") {
    Transcript t;
    t.append(Role::system, "sys");
    CHECK_THROWS_AS(t.append(Role::system, "again"), Error);
    CHECK_THROWS_AS(t.append(Role::assistant, "early"), Error);
    CHECK_THROWS_AS(t.append(Role::user, ""), Error);
    t.append(Role::user, "Q");
    CHECK(t.awaiting_reply());
}

TEST_CASE("transcript truncate, digest and window") {
    Transcript t;
    t.append(Role::system, "sys");
    for (int i = 0; i < 4; ++i) {
        t.append(Role::user, "q" + std::to_string(i));
        t.append(Role::assistant, "a" + std::to_string(i));
    }
    t.append(Role::user, "pending");
    const auto before = t.digest();

    const auto w = t.window(1);
    REQUIRE(w.size() == 4);
    CHECK(w[0].text == "sys");
    CHECK(w[1].text == "q3");
    CHECK(w[3].text == "pending");
    CHECK(t.window(std::nullopt).size() == t.size());
    CHECK(t.digest() == before);

    t.truncate(3);
    CHECK(t.size() == 3);
    CHECK(t.digest() != before);
    CHECK(t.last(Role::assistant)->text == "a0");
}

TEST_CASE("forward input with no references is the question") {
    const auto t = TemplateSet::transcript();
    CHECK(assemble_forward_input("48, 68, 49", {}, t) == "48, 68, 49");
}

TEST_CASE("forward input with three references") {
    const std::vector<ReferencedOutput> refs{{1, "o1"}, {2, "o2"}, {3, "o3"}};
    CHECK(assemble_forward_input("48, 68, 49", refs, TemplateSet::transcript()) ==
          "You need to guess (48, 68, 49), and here are three responses for your reference:\n"
          "The first person: o1\nThe second person: o2\nThe third person: o3");
}

TEST_CASE("forward input with one reference") {
    const std::vector<ReferencedOutput> refs{{1, "x"}};
    const std::string out = assemble_forward_input("Q", refs, TemplateSet::transcript());
    CHECK(out == "You need to guess (Q), and here is one response for your reference:\nThe first person: x");
}

TEST_CASE("feedback input forms") {
    const auto t = TemplateSet::transcript();
    const std::string right = assemble_feedback_input("2", true, {}, t);
    CHECK(right == "The correct answer is 2.\nYou guessed it right, remember your reasoning and wait for the next input.");

    const std::vector<std::string> leaders{"LEADER THOUGHTS"};
    const std::string wrong = assemble_feedback_input("2", false, leaders, t);
    CHECK(wrong.find("Please speculate a possible reason") != std::string::npos);
    CHECK(wrong.find("Here is one person's thinking for your reference:\nLEADER THOUGHTS") != std::string::npos);

    try {
        assemble_feedback_input("2", true, leaders, t);
        FAIL("expected InvalidCombination");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::invalid_combination);
    }
}

TEST_CASE("template placeholders") {
    PromptTemplate p("t", "{{literal}} {answer}!");
    CHECK(p.render({{"answer", "42"}}) == "{literal} 42!");
    CHECK(p.placeholders() == std::vector<std::string>{"answer"});
    CHECK_THROWS_AS(PromptTemplate("bad", "{nonsense}"), Error);
    CHECK_THROWS_AS(PromptTemplate("bad", "{answer"), Error);
    CHECK_THROWS_AS(p.render({}), Error);
}

TEST_CASE("concatenation is associative at the block level") {
    std::vector<std::string> blocks;
    for (int k = 1; k <= 8; ++k) {
        blocks.push_back("block " + std::to_string(k) + (k % 2 ? "\nwith a second line" : ""));
        const std::vector<std::string> head(blocks.begin(), blocks.end() - 1);
        const std::string expected = k == 1 ? blocks.back() : concat_blocks(head, "\n") + "\n" + blocks.back();
        CHECK(concat_blocks(blocks, "\n") == expected);
    }
}

TEST_CASE("referenced outputs appear verbatim and rendering is pure") {
    const auto t = TemplateSet::transcript();
    std::vector<ReferencedOutput> refs;
    for (std::size_t i = 1; i <= 5; ++i) refs.push_back({i, "sentinel-" + std::to_string(i * 7919) + " {braces} ok"});
    const std::string a = assemble_forward_input("Q", refs, t);
    const std::string b = assemble_forward_input("Q", refs, t);
    CHECK(a == b);
    for (const auto& r : refs) CHECK(a.find(r.text) != std::string::npos);
}

TEST_CASE("number words") {
    CHECK(ordinal_word(1) == "first");
    CHECK(ordinal_word(10) == "tenth");
    CHECK(ordinal_word(11) == "11th");
    CHECK(ordinal_word(22) == "22nd");
    CHECK(cardinal_word(3) == "three");
    CHECK(cardinal_word(12) == "12");
    CHECK(count_phrase(1) == "is one response");
    CHECK(count_phrase(3) == "are three responses");
}

TEST_CASE("template presets") {
    CHECK(TemplateSet::preset("transcript").name == "transcript");
    CHECK(TemplateSet::preset("narrative").wrong_prompt.body().find("You guessed it wrong") == 0);
    CHECK_THROWS_AS(TemplateSet::preset("missing"), Error);
}
