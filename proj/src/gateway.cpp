#include "toolfuse/gateway.hpp"

#include "httplib.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace toolfuse {

ChatMessage ChatMessage::system(std::string text) { return {"system", std::move(text), "", {}}; }
ChatMessage ChatMessage::user(std::string text) { return {"user", std::move(text), "", {}}; }
ChatMessage ChatMessage::assistant(std::string text) { return {"assistant", std::move(text), "", {}}; }
ChatMessage ChatMessage::tool(std::string call_id, std::string text) {
    return {"tool", std::move(text), std::move(call_id), {}};
}

const char* to_string(ToolChoice choice) {
    switch (choice) {
        case ToolChoice::Auto: return "auto";
        case ToolChoice::None: return "none";
        case ToolChoice::Required: return "required";
    }
    return "auto";
}

ToolChoice tool_choice_from_string(const std::string& name) {
    if (name == "auto") return ToolChoice::Auto;
    if (name == "none") return ToolChoice::None;
    if (name == "required") return ToolChoice::Required;
    throw Error("unknown tool_choice '" + name + "'");
}

json param_schema(const ToolSpec& tool) {
    json properties = json::object();
    json required = json::array();
    for (const ParamSpec& param : tool.parameters) {
        json body = json::object();
        if (param.type == ParamType::Enum) {
            body["type"] = "string";
            body["enum"] = param.enum_values;
        } else {
            body["type"] = to_string(param.type);
        }
        body["description"] = param.description;
        properties[param.name] = std::move(body);
        if (param.required) required.push_back(param.name);
    }
    json schema = json::object();
    schema["type"] = "object";
    schema["properties"] = std::move(properties);
    schema["required"] = std::move(required);
    return schema;
}

FunctionDef FunctionDef::from_tool(const ToolSpec& tool) {
    return {tool.name, tool.description, param_schema(tool)};
}

std::vector<FunctionDef> tools_wire(const std::vector<ToolSpec>& tools) {
    std::vector<FunctionDef> out;
    out.reserve(tools.size());
    for (const ToolSpec& tool : tools) out.push_back(FunctionDef::from_tool(tool));
    return out;
}

namespace {

json message_to_wire(const ChatMessage& message) {
    json m = json::object();
    m["role"] = message.role;
    m["content"] = message.content;
    if (!message.tool_call_id.empty()) m["tool_call_id"] = message.tool_call_id;
    if (!message.tool_calls.empty()) {
        json calls = json::array();
        for (const WireToolCall& call : message.tool_calls)
            calls.push_back({{"id", call.id},
                             {"type", "function"},
                             {"function", {{"name", call.name}, {"arguments", call.arguments}}}});
        m["tool_calls"] = std::move(calls);
    }
    return m;
}

ChatMessage message_from_wire(const json& doc) {
    ChatMessage message;
    message.role = doc.value("role", "");
    if (doc.contains("content") && doc["content"].is_string())
        message.content = doc["content"].get<std::string>();
    message.tool_call_id = doc.value("tool_call_id", "");
    if (doc.contains("tool_calls")) {
        for (const auto& call : doc["tool_calls"]) {
            WireToolCall out;
            out.id = call.value("id", "");
            if (call.contains("function")) {
                out.name = call["function"].value("name", "");
                out.arguments = call["function"].value("arguments", "");
            }
            message.tool_calls.push_back(std::move(out));
        }
    }
    return message;
}

}  // namespace

json request_to_wire(const ChatRequest& request) {
    json doc = json::object();
    doc["model"] = request.model;
    json messages = json::array();
    for (const ChatMessage& m : request.messages) messages.push_back(message_to_wire(m));
    doc["messages"] = std::move(messages);
    if (!request.tools.empty()) {
        json tools = json::array();
        for (const FunctionDef& f : request.tools)
            tools.push_back({{"type", "function"},
                             {"function", {{"name", f.name},
                                           {"description", f.description},
                                           {"parameters", f.parameters}}}});
        doc["tools"] = std::move(tools);
    }
    doc["tool_choice"] = to_string(request.tool_choice);
    return doc;
}

ChatRequest request_from_wire(const json& doc) {
    ChatRequest request;
    request.model = doc.value("model", "");
    if (doc.contains("messages"))
        for (const auto& m : doc["messages"]) request.messages.push_back(message_from_wire(m));
    if (doc.contains("tools")) {
        for (const auto& t : doc["tools"]) {
            FunctionDef def;
            if (t.contains("function")) {
                def.name = t["function"].value("name", "");
                def.description = t["function"].value("description", "");
                if (t["function"].contains("parameters"))
                    def.parameters = t["function"]["parameters"];
            }
            request.tools.push_back(std::move(def));
        }
    }
    request.tool_choice = tool_choice_from_string(doc.value("tool_choice", "auto"));
    return request;
}

json response_to_wire(const ChatResponse& response) {
    json message = message_to_wire(response.message);
    json doc = json::object();
    doc["choices"] = json::array({json{{"message", std::move(message)}}});
    doc["usage"] = {{"prompt_tokens", response.usage.prompt_tokens},
                    {"completion_tokens", response.usage.completion_tokens},
                    {"total_tokens",
                     response.usage.prompt_tokens + response.usage.completion_tokens}};
    return doc;
}

ChatResponse response_from_wire(const json& doc) {
    ChatResponse response;
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty())
        throw Error("malformed chat response: no choices");
    const json& first = doc["choices"][0];
    if (!first.contains("message")) throw Error("malformed chat response: choice has no message");
    response.message = message_from_wire(first["message"]);
    if (doc.contains("usage")) {
        response.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
        response.usage.completion_tokens =
            doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    return response;
}

json Transcript::to_json() const {
    json recs = json::array();
    for (const Record& r : records)
        recs.push_back({{"request", r.request}, {"response", r.response}, {"latency", r.latency}});
    return json{{"records", std::move(recs)}};
}

Transcript Transcript::from_json(const json& doc) {
    Transcript out;
    if (!doc.contains("records") || !doc["records"].is_array())
        throw Error("malformed transcript: no records array");
    for (const auto& r : doc["records"])
        out.records.push_back({r.at("request"), r.at("response"), r.value("latency", 0.0)});
    return out;
}

void Transcript::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write transcript file '" + path + "'");
    out << to_json().dump(2) << "\n";
}

Transcript Transcript::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open transcript file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw Error("malformed transcript file '" + path + "': " + ex.what());
    }
    return from_json(doc);
}

HttpSession::HttpSession(std::string base_url, std::string api_key)
    : api_key_(std::move(api_key)) {
    auto scheme_end = base_url.find("://");
    std::size_t path_start =
        base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = base_url;
    } else {
        scheme_host_ = base_url.substr(0, path_start);
        path_prefix_ = base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
}

ChatResponse HttpSession::chat(const ChatRequest& request) {
    httplib::Client client(scheme_host_);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const std::string body = request_to_wire(request).dump();
    const double started = monotonic_seconds();
    auto result = client.Post(path_prefix_ + "/chat/completions", headers, body,
                              "application/json");
    const double elapsed = monotonic_seconds() - started;

    if (!result)
        throw TransportError("request to " + scheme_host_ + " failed: " +
                             httplib::to_string(result.error()));
    if (result->status < 200 || result->status >= 300)
        throw TransportError("endpoint returned status " + std::to_string(result->status) +
                             ": " + result->body.substr(0, 200));

    json doc;
    try {
        doc = json::parse(result->body);
    } catch (const json::exception& ex) {
        throw Error(std::string("malformed response body: ") + ex.what());
    }
    ChatResponse response = response_from_wire(doc);
    response.latency = elapsed;
    return response;
}

namespace {

std::vector<std::string> role_sequence(const json& wire_request) {
    std::vector<std::string> roles;
    if (wire_request.contains("messages"))
        for (const auto& m : wire_request["messages"]) roles.push_back(m.value("role", ""));
    return roles;
}

std::multiset<std::string> tool_names(const json& wire_request) {
    std::multiset<std::string> names;
    if (wire_request.contains("tools"))
        for (const auto& t : wire_request["tools"])
            if (t.contains("function")) names.insert(t["function"].value("name", ""));
    return names;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
    return out;
}

}  // namespace

ReplaySession::ReplaySession(Transcript transcript, bool strict)
    : transcript_(std::move(transcript)), strict_(strict) {}

ChatResponse ReplaySession::chat(const ChatRequest& request) {
    if (next_ >= transcript_.records.size())
        throw ReplayMismatchError("replay transcript exhausted after " +
                                  std::to_string(transcript_.records.size()) + " records");
    const Transcript::Record& record = transcript_.records[next_];
    const json actual = request_to_wire(request);
    const json& expected = record.request;

    std::vector<std::string> diffs;
    if (expected.value("model", "") != actual.value("model", ""))
        diffs.push_back("model: expected '" + expected.value("model", "") + "', got '" +
                        actual.value("model", "") + "'");
    if (expected.value("tool_choice", "auto") != actual.value("tool_choice", "auto"))
        diffs.push_back("tool_choice: expected '" + expected.value("tool_choice", "auto") +
                        "', got '" + actual.value("tool_choice", "auto") + "'");
    if (role_sequence(expected) != role_sequence(actual))
        diffs.push_back("message roles: expected [" + join(role_sequence(expected)) +
                        "], got [" + join(role_sequence(actual)) + "]");
    if (tool_names(expected) != tool_names(actual))
        diffs.push_back("tools: name multisets differ");
    if (strict_ && expected != actual) diffs.push_back("strict: request documents differ");

    if (!diffs.empty()) {
        std::string message = "replay mismatch at record " + std::to_string(next_) + ":";
        for (const auto& d : diffs) message += "\n  " + d;
        throw ReplayMismatchError(message);
    }

    ++next_;
    ChatResponse response = response_from_wire(record.response);
    response.latency = record.latency;
    return response;
}

ChatResponse RecordingSession::chat(const ChatRequest& request) {
    ChatResponse response = inner_.chat(request);
    transcript_.records.push_back(
        {request_to_wire(request), response_to_wire(response), response.latency});
    return response;
}

ScriptedSession::ScriptedSession(std::vector<Turn> turns, bool simulate_latency)
    : turns_(std::move(turns)), simulate_latency_(simulate_latency) {}

Usage synthetic_usage(const ChatRequest& request) {
    const json wire = request_to_wire(request);
    std::size_t chars = wire["messages"].dump().size();
    if (wire.contains("tools")) chars += wire["tools"].dump().size();
    return {static_cast<std::int64_t>((chars + 3) / 4), 60};
}

ChatResponse ScriptedSession::chat(const ChatRequest& request) {
    requests_.push_back(request);
    if (next_ >= turns_.size())
        throw ScriptError("scripted session exhausted after " + std::to_string(turns_.size()) +
                          " turns");
    const Turn& turn = turns_[next_++];
    if (simulate_latency_ && turn.latency > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(turn.latency));
    ChatResponse response;
    response.message = turn.message;
    response.usage = turn.usage ? *turn.usage : synthetic_usage(request);
    response.latency = turn.latency;
    return response;
}

}  // namespace toolfuse
