#include "backend_impl.hpp"
#include "chatnet/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <regex>
#include <thread>

namespace chatnet::detail {
namespace {

using json = nlohmann::json;

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) fail(Errc::config_error, "unsupported endpoint URL '" + url + "'");
    ParsedUrl out;
    out.origin = m[1].str() + "://" + m[2].str();
    if (m[3].matched) out.origin += ":" + m[3].str();
    out.path = m[4].matched ? m[4].str() : "/";
    return out;
}

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpSettings settings) : settings_(std::move(settings)), url_(parse_url(settings_.endpoint)) {}

    HealthReport probe() override {
        Transcript ping("probe");
        ping.append(Role::user, "Reply with the single word: pong");
        const auto start = std::chrono::steady_clock::now();
        std::string reply = send(ping);
        HealthReport report;
        report.healthy = true;
        report.latency = std::chrono::steady_clock::now() - start;
        report.detail = reply;
        return report;
    }

protected:
    std::string complete(const Transcript& transcript) override {
        const std::string body = request_body(transcript).dump();
        std::string last_error;
        for (int attempt = 0; attempt <= settings_.max_retries; ++attempt) {
            if (attempt > 0) {
                const double delay = settings_.backoff_s * static_cast<double>(1 << std::min(attempt - 1, 16));
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            httplib::Client client(url_.origin);
            const auto timeout = std::chrono::duration<double>(settings_.timeout_s);
            client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
            client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

            httplib::Headers headers;
            if (const char* key = std::getenv(settings_.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);

            auto res = client.Post(url_.path, headers, body, "application/json");
            if (!res) {
                last_error = "connection failed: " + httplib::to_string(res.error());
                continue;
            }
            if (transient_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                fail(Errc::backend_unavailable, "HTTP " + std::to_string(res->status) + ": " + res->body);
            return extract_content(res->body);
        }
        fail(Errc::backend_unavailable, settings_.endpoint + " after " +
                                            std::to_string(settings_.max_retries + 1) + " attempts (" +
                                            last_error + ")");
    }

private:
    json request_body(const Transcript& transcript) const {
        json messages = json::array();
        for (const auto& m : transcript.window(settings_.keep_pairs))
            messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.text}});
        json body = {{"messages", std::move(messages)}, {"temperature", settings_.temperature}};
        if (!settings_.model.empty()) body["model"] = settings_.model;
        return body;
    }

    static std::string extract_content(const std::string& raw) {
        json doc = json::parse(raw, nullptr, false);
        if (doc.is_discarded()) fail(Errc::malformed_response, "response is not JSON");
        const json* content = nullptr;
        if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
            const json& choice = doc["choices"][0];
            if (choice.contains("message") && choice["message"].contains("content"))
                content = &choice["message"]["content"];
        }
        if (!content || !content->is_string() || content->get_ref<const std::string&>().empty())
            fail(Errc::malformed_response, "missing choices[0].message.content");
        return content->get<std::string>();
    }

    HttpSettings settings_;
    ParsedUrl url_;
};

} // namespace

std::unique_ptr<ChatBackend> make_http_backend(const HttpSettings& settings) {
    return std::make_unique<HttpBackend>(settings);
}

} // namespace chatnet::detail
