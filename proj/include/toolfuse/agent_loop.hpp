#pragma once

#include "toolfuse/executor.hpp"
#include "toolfuse/fuser.hpp"
#include "toolfuse/gateway.hpp"
#include "toolfuse/registry.hpp"
#include "toolfuse/schema_fusion.hpp"

#include <optional>
#include <string>
#include <vector>

namespace toolfuse {

enum class Prompting { Cot, React };

const char* to_string(Prompting prompting);
Prompting prompting_from_string(const std::string& name);

struct StrategyConfig {
    Prompting prompting = Prompting::Cot;
    bool few_shot = false;
    std::string agent_model = "gpt-4";
    bool fuser_enabled = true;
    bool provider_parallel_enabled = true;  // descriptive; the model decides
    bool concurrent_execution = true;       // Fused+Concurrent vs Fused Only
    int max_steps = 16;
};

enum class TaskStatus { Success, Failure, ResetExhausted };

const char* to_string(TaskStatus status);
TaskStatus task_status_from_string(const std::string& name);

// One API round-trip. kind: fuser | agent_call | final_answer.
// constituent_tools counts selected tools at constituent granularity (a
// fused 2-tool selection counts 2); fuser and final-answer records are 0.
struct ApiCallRecord {
    std::string kind;
    int tools_selected = 0;
    std::vector<std::string> tool_names;
    std::vector<bool> fused;
    int constituent_tools = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency = 0;
};

struct SubCallRecord {
    std::string tool;
    json arguments = json::object();
    std::string origin;      // direct | defused | provider_parallel
    std::string fused_from;  // fused tool name when defused
    int api_call = 0;        // index into api_calls
    int seq = 0;
    int stage = 0;
    bool executed = false;
    bool ok = false;
    double started = 0;
    double finished = 0;
    double duration = 0;  // synthetic when the runner declares one
    std::vector<std::string> missing_required;
};

struct GoldCall {
    std::string tool;
    json arguments = json::object();

    bool operator==(const GoldCall&) const = default;
};

struct TaskTrace {
    std::string task_id;
    std::string query;
    std::string status = "success";
    bool used_fusion = false;
    int resets = 0;
    int steps = 0;
    std::string final_answer;
    double wall_time = 0;
    std::vector<ApiCallRecord> api_calls;
    std::vector<SubCallRecord> sub_calls;
    std::optional<std::vector<GoldCall>> gold;

    std::int64_t prompt_tokens() const;
    std::int64_t completion_tokens() const;
    std::int64_t total_tokens() const;
    // Deterministic per-task time: declared API latencies plus executed
    // sub-call durations along the solution path.
    double path_time() const;

    json to_json() const;
    static TaskTrace from_json(const json& doc);
};

struct TaskOutcome {
    std::string final_answer;
    TaskStatus status = TaskStatus::Success;
    int steps = 0;  // agent-session API calls (the fuser pre-pass not included)
    TaskTrace trace;
    bool used_fusion = false;
    int resets = 0;
};

// Operator-editable prompt scaffolds. from_dir expects system/cot.txt,
// system/react.txt, examples/cot_fewshot.txt, examples/react_fewshot.txt
// under `dir` and fails on a missing file.
class PromptLibrary {
public:
    static PromptLibrary builtin();
    static PromptLibrary from_dir(const std::string& dir);

    const std::string& system_text(Prompting prompting) const;
    const std::string& examples_text(Prompting prompting) const;

private:
    std::string cot_system_, react_system_, cot_examples_, react_examples_;
};

// Conversation seed; identical whether or not fusion later rewrites the
// toolset.
std::vector<ChatMessage> build_agent_prompt(const std::string& query,
                                            const StrategyConfig& strategy,
                                            const PromptLibrary& prompts = PromptLibrary::builtin());

struct Sessions {
    Session* agent = nullptr;
    Session* fuser = nullptr;  // may be null when fusion is disabled
};

// The full pipeline for one task: optional fuser pass + toolset rewrite,
// then select -> de-fuse -> plan -> execute -> append-results until a final
// answer. Repeated failures trigger one reset that bypasses the fuser and
// restarts with the full toolset.
TaskOutcome run_task(const std::string& query, const ToolRegistry& registry,
                     const StrategyConfig& strategy, const FuserConfig& fuser_config,
                     Sessions sessions, const RunnerTable& runners,
                     const ExecutionBudget& budget = {},
                     const PromptLibrary& prompts = PromptLibrary::builtin());

}  // namespace toolfuse
