#include "chatnet/backend.hpp"

#include "backend_impl.hpp"
#include "chatnet/error.hpp"
#include "chatnet/journal.hpp"

namespace chatnet {

std::string_view policy_name(const ScriptedPolicy& p) {
    struct Visitor {
        std::string_view operator()(const policy::ArgmaxClassifier&) const { return "argmax"; }
        std::string_view operator()(const policy::FixedDimClassifier&) const { return "fixed"; }
        std::string_view operator()(const policy::MajorityAggregator&) const { return "majority"; }
        std::string_view operator()(const policy::ReplayList&) const { return "replay"; }
        std::string_view operator()(const policy::NoisyClassifier&) const { return "noisy"; }
        std::string_view operator()(const policy::LexiconRewriter&) const { return "lexicon_rewriter"; }
        std::string_view operator()(const policy::LexiconAggregator&) const { return "lexicon_aggregator"; }
        std::string_view operator()(const policy::LexiconJudge&) const { return "lexicon_judge"; }
        std::string_view operator()(const policy::FirstSlotJudge&) const { return "first_slot_judge"; }
    };
    return std::visit(Visitor{}, p);
}

std::string ChatBackend::send(const Transcript& transcript) {
    if (!transcript.awaiting_reply())
        fail(Errc::precondition, "transcript must end with a user message");
    std::string reply = complete(transcript);
    if (reply.empty()) fail(Errc::malformed_response, "backend returned an empty reply");
    return reply;
}

std::unique_ptr<ChatBackend> make_backend(const BackendBinding& binding) {
    if (const auto* http = std::get_if<HttpSettings>(&binding.settings))
        return detail::make_http_backend(*http);
    return detail::make_scripted_backend(std::get<ScriptedSettings>(binding.settings));
}

HealthReport probe(const BackendBinding& binding) {
    if (binding.is_scripted()) return {true, std::chrono::duration<double>(0), "scripted"};
    return make_backend(binding)->probe();
}

Session::Session(std::string id, std::unique_ptr<ChatBackend> backend,
                 std::optional<std::string> system_prompt)
    : id_(std::move(id)), backend_(std::move(backend)), transcript_(id_) {
    if (!backend_) fail(Errc::precondition, "session " + id_ + " has no backend");
    if (system_prompt && !system_prompt->empty()) transcript_.append(Role::system, std::move(*system_prompt));
}

std::string Session::ask(std::string prompt) {
    const std::size_t before = transcript_.size();
    transcript_.append(Role::user, std::move(prompt));
    try {
        std::string reply = backend_->send(transcript_);
        transcript_.append(Role::assistant, reply);
        return reply;
    } catch (...) {
        transcript_.truncate(before);
        throw;
    }
}

std::uint64_t Journal::record(std::string session, std::string kind, std::string prompt,
                              std::string reply) {
    const std::uint64_t seq = next_seq_++;
    exchanges_.push_back({seq, std::move(session), std::move(kind), std::move(prompt), std::move(reply)});
    if (listener_) listener_(exchanges_.back());
    return seq;
}

} // namespace chatnet
