#pragma once

#include <stdexcept>
#include <string>

namespace mlink {

/// Error thrown on contract violations: malformed files, shape
/// mismatches, infeasible requests. The message names the offending
/// input (line number, tensor name, model id) where available.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

}  // namespace mlink
