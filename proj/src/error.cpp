#include "chatnet/error.hpp"

namespace chatnet {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_widths: return "InvalidWidths";
    case Errc::invalid_rate: return "InvalidRate";
    case Errc::invalid_node: return "InvalidNode";
    case Errc::no_leaders: return "NoLeaders";
    case Errc::no_employees: return "NoEmployees";
    case Errc::alternation_violation: return "AlternationViolation";
    case Errc::template_error: return "TemplateError";
    case Errc::invalid_combination: return "InvalidCombination";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::malformed_response: return "MalformedResponse";
    case Errc::replay_exhausted: return "ReplayExhausted";
    case Errc::ambiguous_max: return "AmbiguousMax";
    case Errc::range_too_narrow: return "RangeTooNarrow";
    case Errc::precondition: return "PreconditionFailed";
    case Errc::config_error: return "ConfigError";
    case Errc::dataset_not_found: return "DatasetNotFound";
    case Errc::io_error: return "IoError";
    case Errc::divergence_detected: return "DivergenceDetected";
    case Errc::refused_incomplete: return "RefusedIncomplete";
    }
    return "Unknown";
}

} // namespace chatnet
