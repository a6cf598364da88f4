#include "chatnet/backend.hpp"
#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "support/helpers.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace chatnet;
using namespace chatnet::testing;
using json = nlohmann::json;

namespace {

Errc send_error(ChatBackend& b, const Transcript& t) {
    try {
        b.send(t);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::precondition;
}

std::string completion(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

// A chat-completions stand-in on a free local port.
class LocalServer {
public:
    explicit LocalServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

HttpSettings fast_settings(const std::string& endpoint) {
    HttpSettings s;
    s.endpoint = endpoint;
    s.model = "test-model";
    s.timeout_s = 2.0;
    s.max_retries = 3;
    s.backoff_s = 0.001;
    s.api_key_env = "CHATNET_TEST_KEY";
    return s;
}

// A port that was free a moment ago and has no listener now.
int closed_port() {
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    probe.stop();
    return port;
}

} // namespace

TEST_CASE("scripted backends are always healthy") {
    const BackendBinding binding{ScriptedSettings{policy::ArgmaxClassifier{}, 1}};
    const auto report = probe(binding);
    CHECK(report.healthy);
    CHECK(report.latency.count() == 0.0);
}

TEST_CASE("argmax classifier names the argmax category") {
    auto b = scripted(policy::ArgmaxClassifier{});
    const std::string reply = b->send(user_turn("48, 68, 49"));
    CHECK(reply.find("the second category") != std::string::npos);
    CHECK(dmc::parse_category(reply, 3) == 2);
}

TEST_CASE("argmax classifier acknowledges text without vectors") {
    auto b = scripted(policy::ArgmaxClassifier{});
    CHECK(dmc::parse_category(b->send(user_turn("The correct answer is 2.\nYou guessed it right.")), 3) == std::nullopt);
}

TEST_CASE("fixed classifier ignores the vector") {
    auto b = scripted(policy::FixedDimClassifier{3});
    CHECK(dmc::parse_category(b->send(user_turn("48, 68, 49")), 3) == 3);
}

TEST_CASE("majority aggregator follows the majority of referenced outputs") {
    auto b = scripted(policy::MajorityAggregator{});
    const std::string prompt =
        "You need to guess (48, 68, 49), and here are three responses for your reference:\n"
        "The first person: Based on my guess, this data point belongs to the first category.\n"
        "The second person: Based on my guess, this data point belongs to the second category.\n"
        "The third person: Based on my guess, this data point belongs to the second category.";
    CHECK(dmc::parse_category(b->send(user_turn(prompt)), 3) == 2);
}

TEST_CASE("majority aggregator answers per item for batch questions") {
    auto b = scripted(policy::MajorityAggregator{});
    const std::string prompt = "You need to guess (1: 1, 2, 9\n2: 9, 1, 2), and here are two responses for your reference:\n"
                               "The first person: 1: category 3\n2: category 1\n"
                               "The second person: 1: category 3\n2: category 2";
    CHECK(dmc::parse_batch(b->send(user_turn(prompt)), 2, 3) == std::vector<std::optional<int>>{3, 1});
}

TEST_CASE("replay list returns replies in order then fails") {
    auto b = scripted(policy::ReplayList{{"a", "b"}});
    CHECK(b->send(user_turn("x")) == "a");
    CHECK(b->send(user_turn("y")) == "b");
    CHECK(send_error(*b, user_turn("z")) == Errc::replay_exhausted);
}

TEST_CASE("send requires a pending user turn") {
    auto b = scripted(policy::ArgmaxClassifier{});
    Transcript t;
    CHECK(send_error(*b, t) == Errc::precondition);
    t.append(Role::user, "1, 2, 3");
    t.append(Role::assistant, "ok");
    CHECK(send_error(*b, t) == Errc::precondition);
}

TEST_CASE("noisy classifier error rate is within two points over 10000 calls") {
    for (double p : {0.0, 0.1, 0.3, 0.5, 1.0}) {
        auto b = scripted(policy::NoisyClassifier{p}, derive_seed(99, "noisy", static_cast<std::uint64_t>(p * 100)));
        const auto data = dmc::generate_dataset(200, 3, {1, 99}, 5);
        int wrong = 0;
        constexpr int calls = 10000;
        for (int i = 0; i < calls; ++i) {
            const auto& v = data[static_cast<std::size_t>(i) % data.size()];
            if (dmc::parse_category(b->send(user_turn(dmc::format_components(v.components))), 3) != v.label) ++wrong;
        }
        const double rate = static_cast<double>(wrong) / calls;
        CAPTURE(p);
        CHECK(std::abs(rate - p) <= 0.02);
    }
}

TEST_CASE("scripted replies are a pure function of policy, seed and call sequence") {
    auto run = [](std::uint64_t seed) {
        auto b = scripted(policy::NoisyClassifier{0.5}, seed);
        std::string all;
        for (int i = 0; i < 200; ++i) all += b->send(user_turn("10, 20, 30")) + "\n";
        return all;
    };
    CHECK(run(7) == run(7));
    CHECK(run(7) != run(8));
}

TEST_CASE("sessions append turns and roll back on failure") {
    Session s("node", scripted(policy::ReplayList{{"only"}}), "system text");
    CHECK(s.ask("first") == "only");
    CHECK(s.transcript().size() == 3);
    CHECK_THROWS_AS(s.ask("second"), Error);
    CHECK(s.transcript().size() == 3);
}

TEST_CASE("http backend against a reachable server") {
    std::atomic<int> calls = 0;
    json seen;
    std::string auth;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(completion("pong"), "application/json");
    });
    ::setenv("CHATNET_TEST_KEY", "secret-value", 1);

    const BackendBinding binding{fast_settings(server.endpoint())};
    const auto report = probe(binding);
    CHECK(report.healthy);
    CHECK(report.latency.count() > 0.0);
    CHECK(auth == "Bearer secret-value");

    auto b = make_backend(binding);
    Transcript t("n");
    t.append(Role::system, "sys");
    t.append(Role::user, "hello");
    const auto before = t.digest();
    CHECK(b->send(t) == "pong");
    CHECK(t.digest() == before);
    CHECK(seen["model"] == "test-model");
    CHECK(seen["temperature"] == 1.0);
    REQUIRE(seen["messages"].size() == 2);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["content"] == "hello");
    ::unsetenv("CHATNET_TEST_KEY");
}

TEST_CASE("http backend trims history when keep_pairs is set") {
    json seen;
    LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(completion("ok"), "application/json");
    });
    HttpSettings s = fast_settings(server.endpoint());
    s.keep_pairs = 1;
    auto b = make_backend(BackendBinding{s});
    Transcript t;
    t.append(Role::system, "sys");
    for (int i = 0; i < 3; ++i) {
        t.append(Role::user, "q" + std::to_string(i));
        t.append(Role::assistant, "a" + std::to_string(i));
    }
    t.append(Role::user, "now");
    b->send(t);
    REQUIRE(seen["messages"].size() == 4);
    CHECK(seen["messages"][1]["content"] == "q2");
}

TEST_CASE("http backend retries transient statuses") {
    for (int status : {500, 503, 429}) {
        std::atomic<int> calls = 0;
        LocalServer server([&](const httplib::Request&, httplib::Response& res) {
            if (++calls < 3) {
                res.status = status;
                return;
            }
            res.set_content(completion("finally"), "application/json");
        });
        auto b = make_backend(BackendBinding{fast_settings(server.endpoint())});
        CHECK(b->send(user_turn("q")) == "finally");
        CHECK(calls == 3);
    }
}

TEST_CASE("http backend gives up after max_retries") {
    std::atomic<int> calls = 0;
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 503;
    });
    HttpSettings s = fast_settings(server.endpoint());
    s.max_retries = 2;
    auto b = make_backend(BackendBinding{s});
    CHECK(send_error(*b, user_turn("q")) == Errc::backend_unavailable);
    CHECK(calls == 3);
}

TEST_CASE("http backend does not retry client errors") {
    std::atomic<int> calls = 0;
    LocalServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    auto b = make_backend(BackendBinding{fast_settings(server.endpoint())});
    CHECK(send_error(*b, user_turn("q")) == Errc::backend_unavailable);
    CHECK(calls == 1);
}

TEST_CASE("http backend rejects malformed responses") {
    for (std::string body : {std::string("not json"), std::string(R"({"choices": []})"),
                             std::string(R"({"choices": [{"message": {"content": ""}}]})"),
                             std::string(R"({"choices": [{"message": {"content": 7}}]})")}) {
        LocalServer server([&](const httplib::Request&, httplib::Response& res) {
            res.set_content(body, "application/json");
        });
        auto b = make_backend(BackendBinding{fast_settings(server.endpoint())});
        CAPTURE(body);
        CHECK(send_error(*b, user_turn("q")) == Errc::malformed_response);
    }
}

TEST_CASE("unreachable endpoint is reported as unavailable") {
    HttpSettings s = fast_settings("http://127.0.0.1:" + std::to_string(closed_port()) + "/v1/chat/completions");
    s.max_retries = 1;
    auto b = make_backend(BackendBinding{s});
    CHECK(send_error(*b, user_turn("q")) == Errc::backend_unavailable);
    try {
        probe(BackendBinding{s});
        FAIL("probe should fail");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::backend_unavailable);
    }
}

TEST_CASE("unsupported endpoint URLs are configuration errors") {
    HttpSettings s = fast_settings("ftp://example.com/x");
    CHECK_THROWS_AS(make_backend(BackendBinding{s}), Error);
}
