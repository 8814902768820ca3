#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>

namespace toolfuse {

// Repo-wide structured-data notation. ordered_json preserves document order,
// which matters for parameter declaration order and stable serialization.
using json = nlohmann::ordered_json;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Registry document problems (malformed, duplicate names, unknown categories).
struct RegistryError : Error {
    using Error::Error;
};

struct UnknownToolError : Error {
    explicit UnknownToolError(const std::string& tool)
        : Error("unknown tool: " + tool), tool(tool) {}
    std::string tool;
};

// Connection-level failures talking to an LLM endpoint.
struct TransportError : Error {
    using Error::Error;
};

// Replay transcript disagreement or exhaustion.
struct ReplayMismatchError : Error {
    using Error::Error;
};

// Scripted-session misuse (exhaustion, stale fusion plan).
struct ScriptError : Error {
    using Error::Error;
};

struct MetricsError : Error {
    using Error::Error;
};

// 32-bit FNV-1a rendered as 8 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

// Serialization with object keys sorted recursively; used wherever two
// argument maps must compare independently of key order.
std::string canonical_dump(const json& value);

inline double monotonic_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace toolfuse
