#include "utrr/common.hpp"

namespace utrr {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::config_parse: return "config-parse";
    case ErrorKind::out_of_range: return "out-of-range";
    case ErrorKind::timing_violation: return "timing-violation";
    case ErrorKind::protocol_violation: return "protocol-violation";
    case ErrorKind::insufficient_groups: return "insufficient-groups";
    case ErrorKind::probe_overlap: return "probe-overlap";
    case ErrorKind::budget_exceeded: return "budget-exceeded";
    case ErrorKind::inconclusive: return "inconclusive";
    case ErrorKind::no_trr_detected: return "no-trr-detected";
    case ErrorKind::not_applicable: return "not-applicable";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace utrr
