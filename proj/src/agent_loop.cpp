#include "toolfuse/agent_loop.hpp"

#include <fstream>
#include <sstream>

namespace toolfuse {

const char* to_string(Prompting prompting) {
    return prompting == Prompting::React ? "react" : "cot";
}

Prompting prompting_from_string(const std::string& name) {
    if (name == "cot") return Prompting::Cot;
    if (name == "react") return Prompting::React;
    throw Error("unknown prompting strategy '" + name + "'");
}

const char* to_string(TaskStatus status) {
    switch (status) {
        case TaskStatus::Success: return "success";
        case TaskStatus::Failure: return "failure";
        case TaskStatus::ResetExhausted: return "reset_exhausted";
    }
    return "failure";
}

TaskStatus task_status_from_string(const std::string& name) {
    if (name == "success") return TaskStatus::Success;
    if (name == "failure") return TaskStatus::Failure;
    if (name == "reset_exhausted") return TaskStatus::ResetExhausted;
    throw Error("unknown task status '" + name + "'");
}

std::int64_t TaskTrace::prompt_tokens() const {
    std::int64_t total = 0;
    for (const auto& call : api_calls) total += call.prompt_tokens;
    return total;
}

std::int64_t TaskTrace::completion_tokens() const {
    std::int64_t total = 0;
    for (const auto& call : api_calls) total += call.completion_tokens;
    return total;
}

std::int64_t TaskTrace::total_tokens() const { return prompt_tokens() + completion_tokens(); }

double TaskTrace::path_time() const {
    double total = 0;
    for (const auto& call : api_calls) total += call.latency;
    for (const auto& sub : sub_calls)
        if (sub.executed) total += sub.duration;
    return total;
}

json TaskTrace::to_json() const {
    json doc = json::object();
    doc["task_id"] = task_id;
    doc["query"] = query;
    doc["status"] = status;
    doc["used_fusion"] = used_fusion;
    doc["resets"] = resets;
    doc["steps"] = steps;
    doc["final_answer"] = final_answer;
    doc["wall_time"] = wall_time;
    json calls = json::array();
    for (const auto& call : api_calls) {
        json c = json::object();
        c["kind"] = call.kind;
        c["tools_selected"] = call.tools_selected;
        c["tool_names"] = call.tool_names;
        c["fused"] = call.fused;
        c["constituent_tools"] = call.constituent_tools;
        c["prompt_tokens"] = call.prompt_tokens;
        c["completion_tokens"] = call.completion_tokens;
        c["latency"] = call.latency;
        calls.push_back(std::move(c));
    }
    doc["api_calls"] = std::move(calls);
    json subs = json::array();
    for (const auto& sub : sub_calls) {
        json s = json::object();
        s["tool"] = sub.tool;
        s["arguments"] = sub.arguments;
        s["origin"] = sub.origin;
        if (!sub.fused_from.empty()) s["fused_from"] = sub.fused_from;
        s["api_call"] = sub.api_call;
        s["seq"] = sub.seq;
        s["stage"] = sub.stage;
        s["executed"] = sub.executed;
        s["ok"] = sub.ok;
        s["started"] = sub.started;
        s["finished"] = sub.finished;
        s["duration"] = sub.duration;
        if (!sub.missing_required.empty()) s["missing_required"] = sub.missing_required;
        subs.push_back(std::move(s));
    }
    doc["sub_calls"] = std::move(subs);
    if (gold) {
        json g = json::array();
        for (const auto& call : *gold)
            g.push_back({{"tool", call.tool}, {"arguments", call.arguments}});
        doc["gold"] = std::move(g);
    }
    return doc;
}

TaskTrace TaskTrace::from_json(const json& doc) {
    TaskTrace trace;
    trace.task_id = doc.value("task_id", "");
    trace.query = doc.value("query", "");
    trace.status = doc.value("status", "success");
    trace.used_fusion = doc.value("used_fusion", false);
    trace.resets = doc.value("resets", 0);
    trace.steps = doc.value("steps", 0);
    trace.final_answer = doc.value("final_answer", "");
    trace.wall_time = doc.value("wall_time", 0.0);
    if (doc.contains("api_calls")) {
        for (const auto& c : doc["api_calls"]) {
            ApiCallRecord call;
            call.kind = c.value("kind", "");
            call.tools_selected = c.value("tools_selected", 0);
            if (c.contains("tool_names"))
                call.tool_names = c["tool_names"].get<std::vector<std::string>>();
            if (c.contains("fused")) call.fused = c["fused"].get<std::vector<bool>>();
            call.constituent_tools = c.value("constituent_tools", 0);
            call.prompt_tokens = c.value("prompt_tokens", std::int64_t{0});
            call.completion_tokens = c.value("completion_tokens", std::int64_t{0});
            call.latency = c.value("latency", 0.0);
            trace.api_calls.push_back(std::move(call));
        }
    }
    if (doc.contains("sub_calls")) {
        for (const auto& s : doc["sub_calls"]) {
            SubCallRecord sub;
            sub.tool = s.value("tool", "");
            if (s.contains("arguments")) sub.arguments = s["arguments"];
            sub.origin = s.value("origin", "direct");
            sub.fused_from = s.value("fused_from", "");
            sub.api_call = s.value("api_call", 0);
            sub.seq = s.value("seq", 0);
            sub.stage = s.value("stage", 0);
            sub.executed = s.value("executed", false);
            sub.ok = s.value("ok", false);
            sub.started = s.value("started", 0.0);
            sub.finished = s.value("finished", 0.0);
            sub.duration = s.value("duration", 0.0);
            if (s.contains("missing_required"))
                sub.missing_required = s["missing_required"].get<std::vector<std::string>>();
            trace.sub_calls.push_back(std::move(sub));
        }
    }
    if (doc.contains("gold")) {
        std::vector<GoldCall> gold;
        for (const auto& g : doc["gold"])
            gold.push_back({g.value("tool", ""), g.value("arguments", json::object())});
        trace.gold = std::move(gold);
    }
    return trace;
}

namespace {

const char* kCotSystem =
    "You are a capable assistant with access to the tools provided in this request.\n"
    "Think step by step about what the user needs before acting. Call tools when the\n"
    "task requires them; several independent tool calls may be issued together. When\n"
    "no further tool calls are needed, answer the user directly and concisely.";

const char* kReactSystem =
    "You are a capable assistant that works in explicit Thought / Action / Observation\n"
    "steps using the tools provided in this request.\n"
    "Thought: reason about the current state of the task.\n"
    "Action: call the tool (or tools) the thought identified, or none.\n"
    "Observation: read the tool results before the next thought.\n"
    "Repeat until the task is complete, then give the final answer as plain text.";

const char* kCotExamples =
    "Example:\n"
    "User: Show the city parks layer for Springfield.\n"
    "Assistant reasoning: the parks layer must be loaded first, then rendered; two tool\n"
    "calls, then a short confirmation answer.";

const char* kReactExamples =
    "Example:\n"
    "User: Show the city parks layer for Springfield.\n"
    "Thought 1: I need the parks layer before anything can be shown.\n"
    "Action 1: call the layer-loading tool.\n"
    "Observation 1: layer loaded.\n"
    "Thought 2: now render it.\n"
    "Action 2: call the render tool.\n"
    "Observation 2: rendered. Final answer: the parks layer is on the map.";

std::string read_file_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing prompt template file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary lib;
    lib.cot_system_ = kCotSystem;
    lib.react_system_ = kReactSystem;
    lib.cot_examples_ = kCotExamples;
    lib.react_examples_ = kReactExamples;
    return lib;
}

PromptLibrary PromptLibrary::from_dir(const std::string& dir) {
    PromptLibrary lib;
    lib.cot_system_ = read_file_or_throw(dir + "/system/cot.txt");
    lib.react_system_ = read_file_or_throw(dir + "/system/react.txt");
    lib.cot_examples_ = read_file_or_throw(dir + "/examples/cot_fewshot.txt");
    lib.react_examples_ = read_file_or_throw(dir + "/examples/react_fewshot.txt");
    return lib;
}

const std::string& PromptLibrary::system_text(Prompting prompting) const {
    return prompting == Prompting::React ? react_system_ : cot_system_;
}

const std::string& PromptLibrary::examples_text(Prompting prompting) const {
    return prompting == Prompting::React ? react_examples_ : cot_examples_;
}

std::vector<ChatMessage> build_agent_prompt(const std::string& query,
                                            const StrategyConfig& strategy,
                                            const PromptLibrary& prompts) {
    std::string system_text = prompts.system_text(strategy.prompting);
    if (strategy.few_shot)
        system_text += "\n\n" + prompts.examples_text(strategy.prompting);
    return {ChatMessage::system(std::move(system_text)), ChatMessage::user(query)};
}

namespace {

struct PendingToolCall {
    WireToolCall wire;
    bool fused = false;
    // Sub-call seq numbers owned by this tool_call, in de-fusion order.
    std::vector<int> seqs;
    std::string immediate_error;  // parse failure / unknown tool
    DefuseResult defused;
};

json sub_result_json(const SubCallRecord& sub, const ToolResult* result) {
    json entry = json::object();
    entry["tool"] = sub.tool;
    if (!result) {
        entry["skipped"] = true;
        return entry;
    }
    entry["ok"] = result->ok;
    if (result->ok)
        entry["value"] = result->value;
    else
        entry["error"] = result->error;
    return entry;
}

}  // namespace

TaskOutcome run_task(const std::string& query, const ToolRegistry& registry,
                     const StrategyConfig& strategy, const FuserConfig& fuser_config,
                     Sessions sessions, const RunnerTable& runners, const ExecutionBudget& budget,
                     const PromptLibrary& prompts) {
    if (!sessions.agent) throw Error("run_task needs an agent session");

    TaskOutcome outcome;
    TaskTrace& trace = outcome.trace;
    trace.query = query;
    const double task_started = monotonic_seconds();

    const std::vector<ChatMessage> seed = build_agent_prompt(query, strategy, prompts);

    for (int attempt = 0; attempt <= 1; ++attempt) {
        const bool fuse_this_attempt = strategy.fuser_enabled && attempt == 0 && sessions.fuser;

        FusedToolset toolset;
        toolset.tools = registry.tools();
        if (fuse_this_attempt) {
            try {
                ChatResponse fuser_response;
                FusionPlan plan =
                    propose_fusion(query, registry, fuser_config, *sessions.fuser,
                                   &fuser_response);
                ApiCallRecord record;
                record.kind = "fuser";
                record.prompt_tokens = fuser_response.usage.prompt_tokens;
                record.completion_tokens = fuser_response.usage.completion_tokens;
                record.latency = fuser_response.latency;
                trace.api_calls.push_back(std::move(record));
                toolset = fuse_toolset(registry, plan);
                outcome.used_fusion = !plan.empty();
            } catch (const TransportError&) {
                // Fuser unreachable: proceed with the toolset unchanged; the
                // reset budget is not consumed.
                toolset = FusedToolset{};
                toolset.tools = registry.tools();
            }
        }

        std::vector<ChatMessage> conversation = seed;
        const std::vector<FunctionDef> wire_tools = tools_wire(toolset.tools);
        int failures = 0;
        bool reset_requested = false;

        for (int step = 0; step < strategy.max_steps; ++step) {
            ChatRequest request;
            request.model = strategy.agent_model;
            request.messages = conversation;
            request.tools = wire_tools;
            request.tool_choice = ToolChoice::Auto;

            ChatResponse response;
            try {
                response = sessions.agent->chat(request);
            } catch (const TransportError&) {
                if (attempt == 0) {
                    reset_requested = true;
                    break;
                }
                throw;
            }

            const int api_index = static_cast<int>(trace.api_calls.size());
            ApiCallRecord record;
            record.prompt_tokens = response.usage.prompt_tokens;
            record.completion_tokens = response.usage.completion_tokens;
            record.latency = response.latency;
            ++outcome.steps;

            if (response.message.tool_calls.empty()) {
                record.kind = "final_answer";
                trace.api_calls.push_back(std::move(record));
                outcome.final_answer = response.message.content;
                outcome.status = TaskStatus::Success;
                trace.status = to_string(outcome.status);
                trace.steps = outcome.steps;
                trace.used_fusion = outcome.used_fusion;
                trace.resets = outcome.resets;
                trace.final_answer = outcome.final_answer;
                trace.wall_time = monotonic_seconds() - task_started;
                return outcome;
            }

            record.kind = "agent_call";
            record.tools_selected = static_cast<int>(response.message.tool_calls.size());

            // De-fuse every selection of this reply; all resulting sub-calls
            // enter one plan so independent work lands in stage 0 together.
            std::vector<PendingToolCall> pending;
            std::vector<SubCall> subcalls;
            const bool provider_parallel = response.message.tool_calls.size() > 1;
            int seq = 0;
            for (const WireToolCall& call : response.message.tool_calls) {
                PendingToolCall p;
                p.wire = call;
                record.tool_names.push_back(call.name);

                json arguments = json::parse(call.arguments.empty() ? "{}" : call.arguments,
                                             nullptr, false);
                if (arguments.is_discarded() || !arguments.is_object()) {
                    p.immediate_error = "arguments are not a JSON object";
                    record.fused.push_back(false);
                    record.constituent_tools += 1;
                    ++failures;
                    pending.push_back(std::move(p));
                    continue;
                }

                try {
                    p.defused = defuse_call(toolset.index, registry, call.name, arguments);
                } catch (const UnknownToolError& ex) {
                    p.immediate_error = ex.what();
                    record.fused.push_back(false);
                    record.constituent_tools += 1;
                    ++failures;
                    pending.push_back(std::move(p));
                    continue;
                }

                p.fused = toolset.index.find(call.name) != nullptr;
                record.fused.push_back(p.fused);
                record.constituent_tools += static_cast<int>(p.defused.calls.size());

                for (const DefusedCall& defused : p.defused.calls) {
                    SubCall sub;
                    sub.tool = defused.tool;
                    sub.arguments = defused.arguments;
                    sub.origin = p.fused ? CallOrigin::Defused
                                         : (provider_parallel ? CallOrigin::ProviderParallel
                                                              : CallOrigin::Direct);
                    if (p.fused) sub.fused_from = call.name;
                    sub.seq = seq++;
                    p.seqs.push_back(sub.seq);

                    SubCallRecord sub_record;
                    sub_record.tool = sub.tool;
                    sub_record.arguments = sub.arguments;
                    sub_record.origin = to_string(sub.origin);
                    sub_record.fused_from = sub.fused_from;
                    sub_record.api_call = api_index;
                    sub_record.seq = sub.seq;
                    sub_record.missing_required = defused.missing_required;
                    trace.sub_calls.push_back(std::move(sub_record));

                    subcalls.push_back(std::move(sub));
                }
                pending.push_back(std::move(p));
            }

            const std::size_t sub_record_base = trace.sub_calls.size() - subcalls.size();

            ExecutionPlan plan = plan_execution(subcalls, registry);
            ExecutionReport exec =
                execute_plan(plan, runners, budget, strategy.concurrent_execution);
            if (exec.stage_failure) ++failures;

            // Stage assignment for the trace.
            for (std::size_t s = 0; s < plan.stages.size(); ++s)
                for (const SubCall& call : plan.stages[s])
                    trace.sub_calls[sub_record_base + call.seq].stage = static_cast<int>(s);

            std::map<int, const ToolResult*> by_seq;
            for (const ToolResult& result : exec.results) by_seq[result.seq] = &result;
            for (const auto& [seq_num, result] : by_seq) {
                SubCallRecord& sub = trace.sub_calls[sub_record_base + seq_num];
                sub.executed = true;
                sub.ok = result->ok;
                sub.started = result->started;
                sub.finished = result->finished;
                sub.duration = result->effective_duration();
            }

            trace.api_calls.push_back(std::move(record));

            // Exactly one tool message per tool_call id; a fused selection
            // reports all constituent outcomes in one structured message.
            ChatMessage assistant;
            assistant.role = "assistant";
            assistant.content = response.message.content;
            assistant.tool_calls = response.message.tool_calls;
            conversation.push_back(std::move(assistant));

            for (const PendingToolCall& p : pending) {
                std::string content;
                if (!p.immediate_error.empty()) {
                    content = json{{"error", p.immediate_error}}.dump();
                } else if (p.fused) {
                    json results = json::array();
                    for (int seq_num : p.seqs) {
                        const SubCallRecord& sub = trace.sub_calls[sub_record_base + seq_num];
                        auto it = by_seq.find(seq_num);
                        results.push_back(
                            sub_result_json(sub, it == by_seq.end() ? nullptr : it->second));
                    }
                    content = results.dump();
                } else {
                    const int seq_num = p.seqs.empty() ? -1 : p.seqs.front();
                    auto it = by_seq.find(seq_num);
                    if (it == by_seq.end())
                        content = json{{"skipped", true}}.dump();
                    else if (it->second->ok)
                        content = it->second->value;
                    else
                        content = json{{"error", it->second->error}}.dump();
                }
                conversation.push_back(ChatMessage::tool(p.wire.id, std::move(content)));
            }

            if (failures >= budget.max_failures_before_reset) {
                reset_requested = true;
                break;
            }
        }

        if (reset_requested) {
            if (attempt == 0) {
                outcome.resets = 1;
                continue;  // bypass the fuser, full toolset, fresh conversation
            }
            outcome.status = TaskStatus::ResetExhausted;
            break;
        }

        // Ran out of steps without a final answer.
        outcome.status = TaskStatus::Failure;
        break;
    }

    trace.status = to_string(outcome.status);
    trace.steps = outcome.steps;
    trace.used_fusion = outcome.used_fusion;
    trace.resets = outcome.resets;
    trace.final_answer = outcome.final_answer;
    trace.wall_time = monotonic_seconds() - task_started;
    return outcome;
}

}  // namespace toolfuse
