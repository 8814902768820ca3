#pragma once

#include "toolfuse/registry.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace toolfuse {

struct WireToolCall {
    std::string id;
    std::string name;
    std::string arguments;  // raw text; parsed at the agent-loop boundary

    bool operator==(const WireToolCall&) const = default;
};

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
    std::string tool_call_id;              // tool role only
    std::vector<WireToolCall> tool_calls;  // assistant role only

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text);
    static ChatMessage assistant(std::string text);
    static ChatMessage tool(std::string call_id, std::string text);

    bool operator==(const ChatMessage&) const = default;
};

enum class ToolChoice { Auto, None, Required };

const char* to_string(ToolChoice choice);
ToolChoice tool_choice_from_string(const std::string& name);

struct FunctionDef {
    std::string name;
    std::string description;
    json parameters = json::object();  // JSON-schema document

    static FunctionDef from_tool(const ToolSpec& tool);

    bool operator==(const FunctionDef&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    std::vector<FunctionDef> tools;
    ToolChoice tool_choice = ToolChoice::Auto;
};

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    bool operator==(const Usage&) const = default;
};

struct ChatResponse {
    ChatMessage message;
    Usage usage;
    double latency = 0;  // seconds, measured by the client (or replayed)
};

// JSON-schema "parameters" object for one tool definition.
json param_schema(const ToolSpec& tool);

// Chat-completions wire shapes (field names are bit-exact).
json request_to_wire(const ChatRequest& request);
ChatRequest request_from_wire(const json& doc);
json response_to_wire(const ChatResponse& response);
ChatResponse response_from_wire(const json& doc);

// Serializes a toolset view into the request "tools" array.
std::vector<FunctionDef> tools_wire(const std::vector<ToolSpec>& tools);

// One in-flight request at a time per session; distinct sessions may be
// used concurrently.
class Session {
public:
    virtual ~Session() = default;
    virtual ChatResponse chat(const ChatRequest& request) = 0;
};

struct Transcript {
    struct Record {
        json request;
        json response;
        double latency = 0;
    };
    std::vector<Record> records;

    json to_json() const;
    static Transcript from_json(const json& doc);
    void save_file(const std::string& path) const;
    static Transcript load_file(const std::string& path);
};

// Live OpenAI-compatible endpoint. base_url is e.g. "http://host:8080/v1";
// the session posts to <base_url>/chat/completions.
class HttpSession : public Session {
public:
    HttpSession(std::string base_url, std::string api_key);
    ChatResponse chat(const ChatRequest& request) override;

private:
    std::string scheme_host_;
    std::string path_prefix_;
    std::string api_key_;
};

// Replays a transcript in order. Matching is structural: model, tool_choice,
// message-role sequence, and tools-name multiset; a strict flag pins the
// full request document for regression tests. Mismatch or exhaustion throws
// ReplayMismatchError with a structural diff.
class ReplaySession : public Session {
public:
    explicit ReplaySession(Transcript transcript, bool strict = false);
    ChatResponse chat(const ChatRequest& request) override;
    std::size_t remaining() const { return transcript_.records.size() - next_; }

private:
    Transcript transcript_;
    bool strict_;
    std::size_t next_ = 0;
};

// Tees live traffic through `inner` into a transcript.
class RecordingSession : public Session {
public:
    explicit RecordingSession(Session& inner) : inner_(inner) {}
    ChatResponse chat(const ChatRequest& request) override;
    const Transcript& transcript() const { return transcript_; }
    void save(const std::string& path) const { transcript_.save_file(path); }

private:
    Session& inner_;
    Transcript transcript_;
};

// Emits pre-scripted replies in order, ignoring request content. A turn
// without declared usage reports synthetic token counts derived from the
// serialized conversation; declared usage passes through untouched. With
// simulate_latency the session sleeps for each turn's declared latency so
// wall-clock measurements see API round-trips.
class ScriptedSession : public Session {
public:
    struct Turn {
        ChatMessage message;
        double latency = 0;
        std::optional<Usage> usage;
    };

    explicit ScriptedSession(std::vector<Turn> turns, bool simulate_latency = false);
    ChatResponse chat(const ChatRequest& request) override;

    std::size_t consumed() const { return next_; }
    const std::vector<ChatRequest>& requests() const { return requests_; }

private:
    std::vector<Turn> turns_;
    bool simulate_latency_;
    std::size_t next_ = 0;
    std::vector<ChatRequest> requests_;
};

// ceil(serialized conversation characters / 4); the completion side is a
// flat 60. Crude but monotone in conversation length, which is all the
// token-reduction analyses need.
Usage synthetic_usage(const ChatRequest& request);

}  // namespace toolfuse
