#include "CLI11.hpp"

#include "toolfuse/agent_loop.hpp"
#include "toolfuse/bench.hpp"
#include "toolfuse/fuser.hpp"
#include "toolfuse/metrics.hpp"
#include "toolfuse/schema_fusion.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

using namespace toolfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitTransport = 3;
constexpr int kExitAgentFailure = 4;

struct CliError : std::runtime_error {
    CliError(int code, const std::string& message) : std::runtime_error(message), code(code) {}
    int code;
};

std::unique_ptr<Session> open_session(const std::string& spec) {
    if (spec == "live") {
        const char* base = std::getenv("TOOLFUSE_BASE_URL");
        if (!base || !*base)
            throw CliError(kExitInput, "live sessions need TOOLFUSE_BASE_URL in the environment");
        const char* key = std::getenv("TOOLFUSE_API_KEY");
        return std::make_unique<HttpSession>(base, key ? key : "");
    }
    if (spec.rfind("replay:", 0) == 0) {
        const std::string path = spec.substr(7);
        return std::make_unique<ReplaySession>(Transcript::load_file(path));
    }
    throw CliError(kExitInput, "unknown session spec '" + spec + "' (live|replay:<file>)");
}

std::string fixed(double value, int places = 2) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(places) << value;
    return out.str();
}

int cmd_fuse(const std::string& registry_path, const std::string& query,
             const std::string& session_spec, const std::string& config_path,
             const std::string& template_path, int max_group_size) {
    ToolRegistry registry = ToolRegistry::load_file(registry_path);

    FuserConfig config;
    if (!config_path.empty()) config = FuserConfig::load_file(config_path);
    if (max_group_size > 0) config.max_group_size = max_group_size;
    if (!template_path.empty()) config.prompt_template = load_prompt_template(template_path);

    FusionPlan plan;
    if (session_spec.rfind("oracle:", 0) == 0) {
        bench::BenchTask task = bench::BenchTask::load_file(session_spec.substr(7));
        plan = oracle_fuser(task.gold_tools(), registry, config.max_group_size);
    } else {
        auto session = open_session(session_spec);
        plan = propose_fusion(query, registry, config, *session);
    }

    if (plan.empty()) {
        std::cout << "no fusion (toolset unchanged)\n";
        std::cout << registry.size() << " -> " << registry.size() << " tools\n";
        return kExitOk;
    }

    FusedToolset fused = fuse_toolset(registry, plan);
    std::cout << "fusion plan:\n" << plan.to_json().dump(2) << "\n";
    std::cout << "fused tool definitions:\n";
    for (const auto& [name, tool] : fused.index.fused) {
        json wire = {{"type", "function"},
                     {"function", {{"name", tool.spec.name},
                                   {"description", tool.spec.description},
                                   {"parameters", param_schema(tool.spec)}}}};
        std::cout << wire.dump(2) << "\n";
    }
    std::cout << registry.size() << " -> " << fused.tools.size() << " tools\n";
    return kExitOk;
}

int cmd_run(const std::string& registry_path, std::string query, const std::string& task_path,
            const std::string& session_spec, const std::string& fuser_session_spec,
            const StrategyConfig& strategy_in, const std::string& fuser_model,
            int max_group_size, const ExecutionBudget& budget, const std::string& out_path,
            const std::string& prompts_dir, bool no_timestamps) {
    ToolRegistry registry = ToolRegistry::load_file(registry_path);

    std::optional<bench::BenchTask> task;
    if (!task_path.empty()) {
        task = bench::BenchTask::load_file(task_path);
        if (query.empty()) query = task->query;
    }
    if (query.empty()) throw CliError(kExitInput, "no query given (positional or --task)");

    StrategyConfig strategy = strategy_in;
    FuserConfig fuser_config;
    fuser_config.fuser_model = fuser_model.empty() ? strategy.agent_model : fuser_model;
    fuser_config.max_group_size = max_group_size;

    auto agent = open_session(session_spec);
    std::unique_ptr<Session> fuser;
    if (strategy.fuser_enabled)
        fuser = open_session(fuser_session_spec.empty() ? session_spec : fuser_session_spec);

    auto state = std::make_shared<bench::StateStore>();
    RunnerTable runners = bench::make_sim_runners(registry, state, task ? task->seed : 0,
                                                  bench::ScriptParams{});

    PromptLibrary prompts =
        prompts_dir.empty() ? PromptLibrary::builtin() : PromptLibrary::from_dir(prompts_dir);

    TaskOutcome outcome = run_task(query, registry, strategy, fuser_config,
                                   {agent.get(), fuser.get()}, runners, budget, prompts);
    if (task) {
        outcome.trace.task_id = task->id;
        outcome.trace.gold = task->gold;
    }
    save_traces(out_path, {outcome.trace});

    std::cout << "status: " << to_string(outcome.status) << "\n";
    std::cout << "steps: " << outcome.steps << "\n";
    std::cout << "fusion: " << (outcome.used_fusion ? "used" : "not used") << "\n";
    std::cout << "resets: " << outcome.resets << "\n";
    std::cout << "tokens: " << outcome.trace.total_tokens() << " (prompt "
              << outcome.trace.prompt_tokens() << ", completion "
              << outcome.trace.completion_tokens() << ")\n";
    std::cout << "path time: " << fixed(outcome.trace.path_time(), 3) << " s\n";
    if (!no_timestamps)
        std::cout << "wall time: " << fixed(outcome.trace.wall_time, 3) << " s\n";
    std::cout << "trace: " << out_path << "\n";

    if (outcome.status != TaskStatus::Success) return kExitAgentFailure;
    return kExitOk;
}

void print_policy_table(const bench::BenchResult& result) {
    std::cout << std::left << std::setw(20) << "policy" << std::right << std::setw(10)
              << "success%" << std::setw(14) << "tokens/task" << std::setw(10) << "tok.red"
              << std::setw(14) << "time/task" << std::setw(10) << "speedup" << std::setw(12)
              << "par.load%" << std::setw(12) << "par.filt%" << "\n";
    for (const auto& policy : result.policies) {
        auto metric = [&](const std::string& name) -> std::string {
            auto it = policy.metrics.find(name);
            if (it == policy.metrics.end()) return "--";
            return fixed(it->second.mean) + "+-" + fixed(it->second.dev);
        };
        std::cout << std::left << std::setw(20) << policy.label << std::right
                  << std::setw(10) << fixed(policy.metrics.at("success_rate").mean)
                  << std::setw(14) << fixed(policy.metrics.at("avg_tokens_per_task").mean)
                  << std::setw(10)
                  << (policy.metrics.count("token_reduction")
                          ? fixed(policy.metrics.at("token_reduction").mean)
                          : std::string("--"))
                  << std::setw(14) << fixed(policy.metrics.at("avg_time_per_task").mean, 3)
                  << std::setw(10)
                  << (policy.metrics.count("speedup")
                          ? fixed(policy.metrics.at("speedup").mean)
                          : std::string("--"))
                  << std::setw(12)
                  << (policy.metrics.count("parallelization_load_ops")
                          ? metric("parallelization_load_ops")
                          : std::string("--"))
                  << std::setw(12)
                  << (policy.metrics.count("parallelization_filter_ops")
                          ? metric("parallelization_filter_ops")
                          : std::string("--"))
                  << "\n";
    }
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& policy_names,
              int repeats, const std::string& out_dir, bool timed, bool no_concurrent,
              int jobs) {
    bench::WorkloadConfig config = config_path.empty()
                                       ? bench::WorkloadConfig{}
                                       : bench::WorkloadConfig::load_file(config_path);
    bench::BenchOptions options;
    options.repeats = repeats;
    options.params.timed = timed;
    options.concurrent_execution = !no_concurrent;
    options.jobs = jobs;
    if (!policy_names.empty()) {
        options.policies.clear();
        for (const auto& name : policy_names)
            options.policies.push_back(bench::policy_from_string(name));
    }

    bench::BenchResult result = bench::run_benchmark(config, options);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<AggregateRow> rows;
    for (const auto& policy : result.policies) {
        const fs::path policy_dir = fs::path(out_dir) / bench::to_string(policy.policy);
        fs::create_directories(policy_dir);
        save_traces((policy_dir / "traces.jsonl").string(), policy.report.traces);
        policy.report.save_file((policy_dir / "report.json").string());
        write_histogram_csv((policy_dir / "histogram.csv").string(), policy.histogram);
        rows.push_back({policy.report.method, policy.report.model, policy.report.aggregates});
    }
    {
        std::ofstream out(fs::path(out_dir) / "report.json");
        out << result.to_json().dump(2) << "\n";
    }
    write_aggregates_csv((fs::path(out_dir) / "aggregates.csv").string(), rows);

    print_policy_table(result);
    std::cout << "written: " << out_dir << "\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& trace_dirs, const std::string& out_json,
               const std::string& out_csv, const std::string& basis_name) {
    namespace fs = std::filesystem;
    const TimeBasis basis = time_basis_from_string(basis_name);

    std::vector<RunReport> reports;
    for (const auto& dir : trace_dirs) {
        const fs::path path = fs::path(dir) / "traces.jsonl";
        if (!fs::exists(path))
            throw CliError(kExitInput, "no traces.jsonl under '" + dir + "'");
        reports.push_back(RunReport::build(fs::path(dir).filename().string(), "",
                                           load_traces(path.string()), basis));
    }
    if (reports.empty()) throw CliError(kExitInput, "no trace directories given");

    for (std::size_t i = 1; i < reports.size(); ++i) {
        reports[i].aggregates.token_reduction = token_reduction(reports[0], reports[i]);
        reports[i].aggregates.speedup = speedup(reports[0], reports[i]);
    }

    std::cout << std::left << std::setw(20) << "method" << std::right << std::setw(10)
              << "success%" << std::setw(14) << "tokens/task" << std::setw(10) << "tok.red"
              << std::setw(14) << "time/task" << std::setw(10) << "speedup" << "\n";
    json out = json::array();
    std::vector<AggregateRow> rows;
    for (const auto& report : reports) {
        const Aggregates& agg = report.aggregates;
        std::cout << std::left << std::setw(20) << report.method << std::right << std::setw(10)
                  << fixed(agg.success_rate) << std::setw(14) << fixed(agg.avg_tokens_per_task)
                  << std::setw(10) << (agg.token_reduction ? fixed(*agg.token_reduction) : "--")
                  << std::setw(14) << fixed(agg.avg_time_per_task, 3) << std::setw(10)
                  << (agg.speedup ? fixed(*agg.speedup) : "--") << "\n";
        json entry = json::object();
        entry["method"] = report.method;
        entry["aggregates"] = agg.to_json();
        entry["histogram"] = json::object();
        for (const auto& [bin, percent] : tools_per_call_histogram(report.traces))
            entry["histogram"][std::to_string(bin)] = percent;
        out.push_back(std::move(entry));
        rows.push_back({report.method, report.model, agg});
    }
    if (!out_json.empty()) {
        std::ofstream file(out_json);
        file << out.dump(2) << "\n";
    }
    if (!out_csv.empty()) write_aggregates_csv(out_csv, rows);
    return kExitOk;
}

int cmd_lut(const std::string& trace_dir, double holdout, std::uint64_t seed) {
    namespace fs = std::filesystem;
    const fs::path path = fs::path(trace_dir) / "traces.jsonl";
    if (!fs::exists(path)) throw CliError(kExitInput, "no traces.jsonl under '" + trace_dir + "'");
    std::vector<TaskTrace> traces = load_traces(path.string());
    if (traces.size() < 2) throw CliError(kExitInput, "need at least 2 traces for a split");

    std::vector<std::size_t> order(traces.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t held = std::max<std::size_t>(
        1, static_cast<std::size_t>(holdout * static_cast<double>(traces.size())));
    std::vector<TaskTrace> fit, eval;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < order.size() - held ? fit : eval).push_back(traces[order[i]]);

    LatencyLUT lut = build_lut(fit);
    std::vector<double> predictions, actuals;
    std::size_t partial = 0;
    for (const auto& trace : eval) {
        RuntimePrediction prediction = predict_runtime(lut, trace);
        if (prediction.partial()) {
            ++partial;
            continue;
        }
        predictions.push_back(prediction.value);
        actuals.push_back(actual_normalized_runtime(trace));
    }
    if (predictions.empty())
        throw CliError(kExitInput, "every holdout trace hit missing LUT keys");

    double predicted_mean = 0, actual_mean = 0;
    for (double v : predictions) predicted_mean += v;
    for (double v : actuals) actual_mean += v;
    predicted_mean /= static_cast<double>(predictions.size());
    actual_mean /= static_cast<double>(actuals.size());

    std::cout << "lut entries: " << lut.entries.size() << "\n";
    std::cout << "holdout traces: " << eval.size() << " (partial predictions skipped: " << partial
              << ")\n";
    std::cout << "predicted runtime/call: " << fixed(predicted_mean, 4) << " s\n";
    std::cout << "actual runtime/call: " << fixed(actual_mean, 4) << " s\n";
    std::cout << "modeling error: " << fixed(modeling_error(predictions, actuals)) << "%\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tool-fusion middleware for LLM function calling"};
    app.require_subcommand(1);
    bool no_timestamps = false;
    app.add_flag("--no-timestamps", no_timestamps,
                 "omit wall-clock lines from output (for golden tests)");

    auto* fuse = app.add_subcommand("fuse", "propose and preview a fusion plan");
    std::string fuse_registry, fuse_query, fuse_session = "live", fuse_config, fuse_template;
    int fuse_max_group = 0;
    fuse->add_option("registry", fuse_registry, "registry document")->required();
    fuse->add_option("query", fuse_query, "user query");
    fuse->add_option("--session", fuse_session, "live | replay:<file> | oracle:<task.json>");
    fuse->add_option("--config", fuse_config, "fuser config document");
    fuse->add_option("--template", fuse_template, "fuser prompt template file");
    fuse->add_option("--max-group-size", fuse_max_group, "largest fused group");

    auto* run = app.add_subcommand("run", "run one task through the agent loop");
    std::string run_registry, run_query, run_task_path, run_session = "live";
    std::string run_fuser_session, run_prompting = "cot", run_model = "gpt-4";
    std::string run_fuser_model, run_out = "trace.jsonl", run_prompts;
    bool run_few_shot = false, run_no_fuser = false, run_no_concurrent = false;
    int run_max_steps = 16, run_max_group = 4, run_max_concurrency = 8;
    double run_timeout = 30.0;
    run->add_option("registry", run_registry, "registry document")->required();
    run->add_option("query", run_query, "user query");
    run->add_option("--task", run_task_path, "bench task file (query + gold)");
    run->add_option("--session", run_session, "agent session: live | replay:<file>");
    run->add_option("--fuser-session", run_fuser_session,
                    "fuser session (defaults to --session)");
    run->add_option("--prompting", run_prompting, "cot | react");
    run->add_flag("--few-shot", run_few_shot, "append in-context examples");
    run->add_option("--model", run_model, "agent model identifier");
    run->add_option("--fuser-model", run_fuser_model, "fuser model identifier");
    run->add_flag("--no-fuser", run_no_fuser, "skip the fuser pass");
    run->add_flag("--no-concurrent", run_no_concurrent, "run stage members one by one");
    run->add_option("--max-steps", run_max_steps, "agent call budget");
    run->add_option("--max-group-size", run_max_group, "largest fused group");
    run->add_option("--max-concurrency", run_max_concurrency, "stage worker cap");
    run->add_option("--timeout", run_timeout, "per-call timeout seconds");
    run->add_option("--out", run_out, "trace output file");
    run->add_option("--prompts", run_prompts, "prompt templates directory");

    auto* benchcmd = app.add_subcommand("bench", "run the policy comparison benchmark");
    std::string bench_config, bench_out = "bench_out";
    std::vector<std::string> bench_policies;
    int bench_repeats = 1, bench_jobs = 1;
    bool bench_timed = false, bench_no_concurrent = false;
    benchcmd->add_option("config", bench_config, "workload config (defaults built in)");
    benchcmd->add_option("--policies", bench_policies,
                         "sequential|provider_parallel|compiler")
        ->delimiter(',');
    benchcmd->add_option("--repeats", bench_repeats, "repeat count");
    benchcmd->add_option("--out", bench_out, "output directory");
    benchcmd->add_flag("--timed", bench_timed, "sleep declared latencies; wall-clock basis");
    benchcmd->add_flag("--no-concurrent", bench_no_concurrent, "fused-only execution mode");
    benchcmd->add_option("--jobs", bench_jobs, "concurrent tasks");

    auto* report = app.add_subcommand("report", "render aggregate tables from trace dirs");
    std::vector<std::string> report_dirs;
    std::string report_json, report_csv, report_basis = "path";
    report->add_option("dirs", report_dirs, "trace directories (first is the baseline)")
        ->required();
    report->add_option("--out", report_json, "machine-readable report file");
    report->add_option("--csv", report_csv, "aggregates csv file");
    report->add_option("--basis", report_basis, "path | wall");

    auto* lut = app.add_subcommand("lut", "fit and evaluate the latency lookup table");
    std::string lut_dir;
    double lut_holdout = 0.2;
    std::uint64_t lut_seed = 7;
    lut->add_option("dir", lut_dir, "trace directory")->required();
    lut->add_option("--holdout", lut_holdout, "held-out fraction");
    lut->add_option("--seed", lut_seed, "split seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitInput;
    }

    try {
        if (fuse->parsed())
            return cmd_fuse(fuse_registry, fuse_query, fuse_session, fuse_config, fuse_template,
                            fuse_max_group);
        if (run->parsed()) {
            StrategyConfig strategy;
            strategy.prompting = prompting_from_string(run_prompting);
            strategy.few_shot = run_few_shot;
            strategy.agent_model = run_model;
            strategy.fuser_enabled = !run_no_fuser;
            strategy.concurrent_execution = !run_no_concurrent;
            strategy.max_steps = run_max_steps;
            ExecutionBudget budget;
            budget.max_concurrency = run_max_concurrency;
            budget.per_call_timeout = run_timeout;
            return cmd_run(run_registry, run_query, run_task_path, run_session,
                           run_fuser_session, strategy, run_fuser_model, run_max_group, budget,
                           run_out, run_prompts, no_timestamps);
        }
        if (benchcmd->parsed())
            return cmd_bench(bench_config, bench_policies, bench_repeats, bench_out, bench_timed,
                             bench_no_concurrent, bench_jobs);
        if (report->parsed()) return cmd_report(report_dirs, report_json, report_csv, report_basis);
        if (lut->parsed()) return cmd_lut(lut_dir, lut_holdout, lut_seed);
    } catch (const CliError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return ex.code;
    } catch (const TransportError& ex) {
        std::cerr << "transport error: " << ex.what() << "\n";
        return kExitTransport;
    } catch (const ReplayMismatchError& ex) {
        std::cerr << "replay error: " << ex.what() << "\n";
        return kExitInput;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
