#pragma once

#include <stdexcept>
#include <string>

namespace vlmgeo {

enum class Errc {
    io,
    bad_magic,
    version_mismatch,
    truncated,
    length_mismatch,
    bad_header,
    invariant,
    dimension_mismatch,
    invalid_argument,
    degenerate,
    infeasible,
    placement_failure,
    divergence,
    not_found,
    config,
};

const char* to_string(Errc code);

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    Errc code() const noexcept { return code_; }
    // The message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::string detail_;
};

inline const char* to_string(Errc code) {
    switch (code) {
        case Errc::io: return "io error";
        case Errc::bad_magic: return "bad magic";
        case Errc::version_mismatch: return "version mismatch";
        case Errc::truncated: return "truncated payload";
        case Errc::length_mismatch: return "header/payload length mismatch";
        case Errc::bad_header: return "malformed header";
        case Errc::invariant: return "invariant violation";
        case Errc::dimension_mismatch: return "dimension mismatch";
        case Errc::invalid_argument: return "invalid argument";
        case Errc::degenerate: return "degenerate input";
        case Errc::infeasible: return "infeasible request";
        case Errc::placement_failure: return "placement failure";
        case Errc::divergence: return "divergence";
        case Errc::not_found: return "not found";
        case Errc::config: return "config error";
    }
    return "error";
}

}  // namespace vlmgeo
