#include "chatnet/error.hpp"
#include "chatnet/topology.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace chatnet;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::precondition;
}

} // namespace

TEST_CASE("build_network accepts legal widths") {
    const auto net = build_network({3, 1}, 0.5);
    CHECK(net.depth() == 2);
    CHECK(net.node_count() == 4);
    CHECK(net.width(1) == 3);
    CHECK(net.aggregator() == NodeRef{2, 1});
    CHECK(net.dropout_rate() == 0.5);

    const auto minimal = build_network({1, 1}, 1.0);
    CHECK(minimal.node_count() == 2);
}

TEST_CASE("build_network rejects bad widths and rates") {
    CHECK(code_of([] { build_network({3, 2}, 0.5); }) == Errc::invalid_widths);
    CHECK(code_of([] { build_network({}, 0.5); }) == Errc::invalid_widths);
    CHECK(code_of([] { build_network({1}, 0.5); }) == Errc::invalid_widths);
    CHECK(code_of([] { build_network({3, 0, 1}, 0.5); }) == Errc::invalid_widths);
    CHECK(code_of([] { build_network({3, 1}, -0.1); }) == Errc::invalid_rate);
    CHECK(code_of([] { build_network({3, 1}, 1.5); }) == Errc::invalid_rate);
}

TEST_CASE("invalid widths message names the problem") {
    try {
        build_network({3, 2}, 0.5);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).rfind("InvalidWidths", 0) == 0);
    }
}

TEST_CASE("leaders_of and employees_of") {
    const auto a = build_network({3, 1}, 0.5);
    CHECK(a.leaders_of({1, 2}) == std::vector<NodeRef>{{2, 1}});
    CHECK(a.employees_of({2, 1}) == std::vector<NodeRef>{{1, 1}, {1, 2}, {1, 3}});
    CHECK(code_of([&] { a.leaders_of({2, 1}); }) == Errc::no_leaders);
    CHECK(code_of([&] { a.employees_of({1, 1}); }) == Errc::no_employees);
    CHECK(code_of([&] { a.leaders_of({1, 4}); }) == Errc::invalid_node);

    const auto b = build_network({2, 2, 1}, 0.5);
    CHECK(b.leaders_of({1, 1}) == std::vector<NodeRef>{{2, 1}, {2, 2}});
    CHECK(b.employees_of({3, 1}) == std::vector<NodeRef>{{2, 1}, {2, 2}});
}

TEST_CASE("node order is layer-major and node count is the width sum") {
    for (const auto& widths : std::vector<std::vector<int>>{{3, 1}, {2, 2, 1}, {4, 3, 2, 1}, {1, 1}, {5, 1}}) {
        const auto net = build_network(widths, 0.5);
        CHECK(net.node_count() == static_cast<std::size_t>(std::accumulate(widths.begin(), widths.end(), 0)));
        CHECK(std::is_sorted(net.nodes().begin(), net.nodes().end()));
        for (std::size_t i = 0; i < net.node_count(); ++i) CHECK(net.flat_index(net.nodes()[i]) == i);
    }
}

TEST_CASE("leader and employee relations are mutually consistent") {
    for (const auto& widths : std::vector<std::vector<int>>{{3, 1}, {2, 2, 1}, {4, 3, 2, 1}, {1, 3, 1}}) {
        const auto net = build_network(widths, 0.5);
        for (NodeRef a : net.nodes()) {
            for (NodeRef b : net.nodes()) {
                const bool up = a.layer < net.depth() && [&] {
                    auto l = net.leaders_of(a);
                    return std::find(l.begin(), l.end(), b) != l.end();
                }();
                const bool down = b.layer > 1 && [&] {
                    auto e = net.employees_of(b);
                    return std::find(e.begin(), e.end(), a) != e.end();
                }();
                CHECK(up == down);
            }
        }
    }
}

TEST_CASE("every width list not ending in one is rejected") {
    for (int first = 1; first <= 4; ++first)
        for (int last = 0; last <= 4; ++last)
            if (last != 1) CHECK(code_of([&] { build_network({first, last}, 0.5); }) == Errc::invalid_widths);
}

TEST_CASE("NodeRef text form") {
    CHECK(NodeRef{1, 2}.to_string() == "1.2");
    CHECK(NodeRef::parse("3.1") == NodeRef{3, 1});
    CHECK_THROWS_AS(NodeRef::parse("x"), Error);
}
