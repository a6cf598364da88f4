#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace chatnet {

// One prompt/reply round trip with a session.
struct Exchange {
    std::uint64_t seq = 0;
    std::string session;
    std::string kind;  // forward, feedback, eval, train, refine, judge, ...
    std::string prompt;
    std::string reply;

    bool operator==(const Exchange&) const = default;
};

// Ordered log of every exchange in a run. Sequence numbers form a logical
// clock: they are assigned by the orchestrating thread in a deterministic
// order (layer-major within a pass), never by completion time.
class Journal {
public:
    using Listener = std::function<void(const Exchange&)>;

    std::uint64_t record(std::string session, std::string kind, std::string prompt, std::string reply);

    // Next sequence number to be assigned.
    std::uint64_t clock() const { return next_seq_; }
    // Advances the clock without recording an exchange (used to stamp
    // metrics and other events).
    std::uint64_t tick() { return next_seq_++; }

    const std::vector<Exchange>& exchanges() const { return exchanges_; }
    void set_listener(Listener listener) { listener_ = std::move(listener); }

private:
    std::uint64_t next_seq_ = 1;
    std::vector<Exchange> exchanges_;
    Listener listener_;
};

} // namespace chatnet
