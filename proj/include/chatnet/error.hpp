#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chatnet {

enum class Errc {
    invalid_widths,
    invalid_rate,
    invalid_node,
    no_leaders,
    no_employees,
    alternation_violation,
    template_error,
    invalid_combination,
    backend_unavailable,
    malformed_response,
    replay_exhausted,
    ambiguous_max,
    range_too_narrow,
    precondition,
    config_error,
    dataset_not_found,
    io_error,
    divergence_detected,
    refused_incomplete,
};

std::string_view errc_name(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(Errc::precondition, what);
}

} // namespace chatnet
