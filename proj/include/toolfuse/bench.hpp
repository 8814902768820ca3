#pragma once

#include "toolfuse/agent_loop.hpp"
#include "toolfuse/metrics.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace toolfuse::bench {

// Deterministic RNG with hand-rolled distributions so seeded draws are
// pinned by this code, not by the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();  // [0, 1)
    double normal();   // Box-Muller
    // exp(ln(median) + sigma_log * z): median-parameterized lognormal.
    double lognormal(double median, double sigma_log);
    int uniform_int(int lo, int hi);  // inclusive
    template <typename T>
    const T& pick(const std::vector<T>& pool) {
        return pool[static_cast<std::size_t>(uniform_int(0, static_cast<int>(pool.size()) - 1))];
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct BenchTask {
    std::string id;
    std::string query;
    std::vector<GoldCall> gold;
    OracleAnnotation oracle;
    std::uint64_t seed = 0;

    json to_json() const;
    static BenchTask from_json(const json& doc);
    static BenchTask load_file(const std::string& path);

    std::vector<std::string> gold_tools() const;
};

struct WorkloadConfig {
    int n_tasks = 200;
    std::uint64_t seed = 7;
    // Template mix: multi-load+multi-filter, single-load+filter, no-tool QA.
    double w_multi = 0.4;
    double w_single = 0.4;
    double w_qa = 0.2;
    std::string registry = "builtin:geo";  // or a registry-document path

    json to_json() const;
    static WorkloadConfig from_json(const json& doc);
    static WorkloadConfig load_file(const std::string& path);
};

// The 30-tool geospatial-style registry (categories load_ops, filter_ops,
// plot_ops, doc_ops) used by the default workload and the shipped fixture.
ToolRegistry geo_registry();

ToolRegistry load_workload_registry(const WorkloadConfig& config);

std::vector<BenchTask> generate_workload(const WorkloadConfig& config,
                                         const ToolRegistry& registry);

enum class Policy { Sequential, ProviderParallel, CompilerAware };

const char* to_string(Policy policy);
Policy policy_from_string(const std::string& name);

struct ScriptParams {
    double p_filter_group = 0.25;  // provider-parallel filter grouping odds
    int max_group_size = 4;
    // Timed mode sleeps declared latencies/durations for wall-clock runs.
    bool timed = false;
    double fuser_latency_median = 0.35;
    double agent_latency_median = 0.9;
    double final_latency_median = 0.7;
    double api_sigma_log = 0.25;
    double tool_duration_median = 0.18;
    double tool_sigma_log = 0.3;
    double timed_api_latency = 0.06;
    double timed_tool_duration = 0.1;
};

// Append-log state store; equality against the gold reference is the
// semantic-preservation check.
struct StateStore {
    std::mutex m;
    std::map<std::string, std::vector<std::string>> log;

    bool equals(const StateStore& other) const { return log == other.log; }
    json to_json() const;
};

// The shared mutation model: the tool appends "name(args)@<read-size>" to
// every resource it writes, where <read-size> snapshots the combined length
// of everything it reads. Misordered conflicting calls change the store.
// Caller holds state.m when runners may race.
void apply_tool_effects(const ToolSpec& spec, StateStore& state, const json& arguments);

// In-memory runners over a shared state store. Untimed runners declare a
// seeded synthetic duration; timed runners actually sleep it.
RunnerTable make_sim_runners(const ToolRegistry& registry, std::shared_ptr<StateStore> state,
                             std::uint64_t task_seed, const ScriptParams& params);

// Final state of executing the gold sequence sequentially.
std::shared_ptr<StateStore> run_gold_reference(const ToolRegistry& registry,
                                               const std::vector<GoldCall>& gold);

struct ScriptedTask {
    std::unique_ptr<ScriptedSession> agent;
    std::unique_ptr<ScriptedSession> fuser;  // compiler policy only
    FusionPlan plan;                         // compiler policy's oracle plan
};

// Scripts the agent (and, for the compiler policy, the fuser) for one task.
// view_override lets callers feed a stale toolset view; a gold tool absent
// from the view raises ScriptError.
ScriptedTask script_agent(const BenchTask& task, Policy policy, const ToolRegistry& registry,
                          const ScriptParams& params,
                          const FusedToolset* view_override = nullptr);

struct TaskRun {
    TaskTrace trace;
    std::shared_ptr<StateStore> state;
    TaskOutcome outcome;
};

// One task through the full agent loop under a policy.
TaskRun run_policy_task(const BenchTask& task, Policy policy, const ToolRegistry& registry,
                        const ScriptParams& params, bool concurrent_execution = true);

struct Stat {
    double mean = 0;
    double dev = 0;  // population stddev across repeats
};

struct BenchOptions {
    std::vector<Policy> policies{Policy::Sequential, Policy::ProviderParallel,
                                 Policy::CompilerAware};
    int repeats = 1;
    ScriptParams params;
    bool concurrent_execution = true;
    int jobs = 1;  // concurrent tasks within a run
};

struct PolicyOutcome {
    Policy policy = Policy::Sequential;
    std::string label;           // policy name, or "compiler_fused_only"
    bool concurrent_execution = true;
    RunReport report;  // first repeat
    std::map<std::string, Stat> metrics;
    std::map<int, double> histogram;  // first repeat
};

struct BenchResult {
    WorkloadConfig config;
    std::string basis;
    std::map<std::string, int> oracle_totals;  // per category
    std::vector<PolicyOutcome> policies;

    json to_json() const;
};

// The three-way comparison: every policy x repeat over the workload, with
// token-reduction/speedup computed against the first policy listed.
BenchResult run_benchmark(const WorkloadConfig& config, const BenchOptions& options);

}  // namespace toolfuse::bench
