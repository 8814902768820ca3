#pragma once

#include "toolfuse/registry.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace toolfuse {

enum class CallOrigin { Direct, Defused, ProviderParallel };

const char* to_string(CallOrigin origin);

struct SubCall {
    std::string tool;
    json arguments = json::object();
    CallOrigin origin = CallOrigin::Direct;
    std::string fused_from;  // fused tool name when origin == Defused
    int seq = 0;             // ordinal in de-fusion/selection order
};

// Stages run in order; members of one stage are concurrency candidates.
struct ExecutionPlan {
    std::vector<std::vector<SubCall>> stages;

    bool empty() const { return stages.empty(); }
    std::size_t call_count() const {
        std::size_t n = 0;
        for (const auto& s : stages) n += s.size();
        return n;
    }
};

struct ToolResult {
    std::string tool;
    int seq = 0;
    bool ok = true;
    std::string value;
    std::string error;
    double started = 0;   // monotonic seconds
    double finished = 0;
    double duration = 0;  // finished - started
    // Simulated runners may declare a synthetic duration for deterministic
    // trace accounting; < 0 means "use the measured duration".
    double reported_duration = -1;

    double effective_duration() const {
        return reported_duration >= 0 ? reported_duration : duration;
    }
};

struct ExecutionBudget {
    int max_concurrency = 8;
    double per_call_timeout = 30.0;     // seconds
    int max_failures_before_reset = 3;  // consumed by the agent loop
};

struct RunnerResult {
    bool ok = true;
    std::string value;
    std::string error;
    double synthetic_duration = -1;
};

using ToolRunner = std::function<RunnerResult(const json& arguments)>;

// Runner table keyed by tool name. A runner registered as serial is never
// invoked from two workers at once; the table serializes it even inside a
// stage. Entries are shared-owned so a worker abandoned by a timeout can
// outlive the table; runner closures must own (or outlive) whatever state
// they touch for the same reason.
class RunnerTable {
public:
    struct Entry {
        ToolRunner runner;
        bool serial = false;
        std::unique_ptr<std::mutex> gate;

        RunnerResult run(const json& arguments) const;
    };

    void add(const std::string& tool, ToolRunner runner, bool serial = false);
    bool has(const std::string& tool) const;
    bool covers(const ExecutionPlan& plan) const;
    std::shared_ptr<const Entry> entry(const std::string& tool) const;
    RunnerResult invoke(const std::string& tool, const json& arguments) const;

private:
    std::map<std::string, std::shared_ptr<Entry>> entries_;
};

struct ExecEvent {
    std::string tool;
    int seq = 0;
    int stage = 0;
    bool start = false;  // start or finish
    double at = 0;       // monotonic seconds
};

struct ExecutionReport {
    std::vector<ToolResult> results;  // executed sub-calls, in seq order
    std::vector<ExecEvent> events;
    std::vector<SubCall> skipped;  // stages abandoned after a failure
    bool stage_failure = false;
    int failed_stage = -1;
};

// Greedy earliest-stage list scheduling in seq order. Two sub-calls
// conflict when they touch a common resource and at least one writes it;
// conflicting pairs land in distinct stages ordered by seq.
ExecutionPlan plan_execution(const std::vector<SubCall>& subcalls, const ToolRegistry& registry);

// Runs stages strictly in order. With `concurrent` set, stage members run
// simultaneously up to budget.max_concurrency; otherwise one by one in seq
// order. A runner error or per-call timeout yields an error result, the
// current stage still drains, and subsequent stages are skipped.
ExecutionReport execute_plan(const ExecutionPlan& plan, const RunnerTable& runners,
                             const ExecutionBudget& budget, bool concurrent);

}  // namespace toolfuse
