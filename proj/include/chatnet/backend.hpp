#pragma once

#include "chatnet/conversation.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace chatnet {

struct HttpSettings {
    std::string endpoint;  // full URL of a chat-completions endpoint
    std::string model;
    double temperature = 1.0;
    double timeout_s = 60.0;
    int max_retries = 3;
    double backoff_s = 0.5;  // first retry delay; doubles per attempt
    std::string api_key_env = "OPENAI_API_KEY";
    std::optional<std::size_t> keep_pairs;  // transcript trimming; nullopt = unlimited
};

// Deterministic stand-ins for dialogue models.
namespace policy {
struct ArgmaxClassifier {};
struct FixedDimClassifier {
    int category = 1;
};
struct MajorityAggregator {};
struct ReplayList {
    std::vector<std::string> replies;
};
struct NoisyClassifier {
    double error_rate = 0.0;
};
// Sentiment reversal by antonym lookup at a given intensifier level.
struct LexiconRewriter {
    int level = 2;
    int jitter = 0;
};
// Consolidates referenced rewrites by keeping the most intense one.
struct LexiconAggregator {};
// Prefers the candidate carrying the stronger intensifier.
struct LexiconJudge {};
// Always prefers whichever candidate is shown first.
struct FirstSlotJudge {};
} // namespace policy

using ScriptedPolicy =
    std::variant<policy::ArgmaxClassifier, policy::FixedDimClassifier, policy::MajorityAggregator,
                 policy::ReplayList, policy::NoisyClassifier, policy::LexiconRewriter,
                 policy::LexiconAggregator, policy::LexiconJudge, policy::FirstSlotJudge>;

std::string_view policy_name(const ScriptedPolicy& p);

struct ScriptedSettings {
    ScriptedPolicy policy;
    std::uint64_t seed = 0;
};

struct BackendBinding {
    std::variant<HttpSettings, ScriptedSettings> settings;

    bool is_http() const { return std::holds_alternative<HttpSettings>(settings); }
    bool is_scripted() const { return !is_http(); }
};

struct HealthReport {
    bool healthy = false;
    std::chrono::duration<double> latency{0};
    std::string detail;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    // Sends the transcript (which must end with a user turn) and returns
    // the non-empty assistant reply. The transcript is never modified.
    std::string send(const Transcript& transcript);

    virtual HealthReport probe() = 0;

protected:
    virtual std::string complete(const Transcript& transcript) = 0;
};

std::unique_ptr<ChatBackend> make_backend(const BackendBinding& binding);

inline std::string send(ChatBackend& backend, const Transcript& transcript) {
    return backend.send(transcript);
}

// Sends a single ping for http bindings; scripted bindings are always
// healthy with zero latency.
HealthReport probe(const BackendBinding& binding);

// One model instance: identity, backend and persistent transcript.
class Session {
public:
    Session(std::string id, std::unique_ptr<ChatBackend> backend,
            std::optional<std::string> system_prompt = std::nullopt);

    const std::string& id() const { return id_; }
    Transcript& transcript() { return transcript_; }
    const Transcript& transcript() const { return transcript_; }
    ChatBackend& backend() { return *backend_; }

    // Appends the prompt as a user turn, queries the backend and appends the
    // reply. On failure the transcript is left as it was.
    std::string ask(std::string prompt);

private:
    std::string id_;
    std::unique_ptr<ChatBackend> backend_;
    Transcript transcript_;
};

} // namespace chatnet
