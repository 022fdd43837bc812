#pragma once

#include <stdexcept>
#include <string>

namespace duplexrag {

// Raised when a documented invariant is broken at runtime (CLI exit code 2),
// as opposed to bad user input (std::invalid_argument and friends, exit 1).
struct invariant_violation : std::logic_error {
    explicit invariant_violation(const std::string& what) : std::logic_error(what) {}
};

} // namespace duplexrag
