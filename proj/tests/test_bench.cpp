#include "doctest.h"

#include "toolfuse/bench.hpp"
#include "toolfuse/schema_fusion.hpp"

#include <map>
#include <set>

using namespace toolfuse;
using namespace toolfuse::bench;

namespace {

BenchTask demo_task() {
    return BenchTask::load_file(TOOLFUSE_SOURCE_DIR "/configs/demo_task.json");
}

WorkloadConfig small_config(int n = 60, std::uint64_t seed = 7) {
    WorkloadConfig config;
    config.n_tasks = n;
    config.seed = seed;
    return config;
}

}  // namespace

TEST_CASE("workload generation is deterministic under its seed") {
    ToolRegistry reg = geo_registry();
    WorkloadConfig config = small_config(100);
    auto a = generate_workload(config, reg);
    auto b = generate_workload(config, reg);
    REQUIRE(a.size() == 100);
    REQUIRE(b.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_json() == b[i].to_json());

    config.seed = 8;
    auto c = generate_workload(config, reg);
    bool any_difference = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].to_json() != c[i].to_json()) any_difference = true;
    CHECK(any_difference);
}

TEST_CASE("a QA-only mix produces no tools and empty oracles") {
    ToolRegistry reg = geo_registry();
    WorkloadConfig config = small_config(20);
    config.w_multi = 0;
    config.w_single = 0;
    config.w_qa = 1.0;
    for (const auto& task : generate_workload(config, reg)) {
        CHECK(task.gold.empty());
        CHECK(task.oracle.groups.empty());
    }
}

TEST_CASE("gold sequences are executable and oracles recount independently") {
    ToolRegistry reg = geo_registry();
    auto tasks = generate_workload(small_config(200), reg);

    int multi = 0, qa = 0;
    for (const auto& task : tasks) {
        // Gold tools exist and required arguments are filled.
        for (const auto& call : task.gold) {
            const ToolSpec& spec = reg.tool(call.tool);
            for (const auto& param : spec.parameters)
                if (param.required) CHECK(call.arguments.contains(param.name));
        }

        // Independent recount: adjacent-free category tally of the gold
        // sequence, distinct names only, keeping categories with >= 2.
        std::map<std::string, std::set<std::string>> by_category;
        std::vector<std::string> seen_order;
        for (const auto& call : task.gold) by_category[reg.category_of(call.tool)].insert(call.tool);
        for (const auto& [category, names] : by_category) {
            if (names.size() >= 2) {
                CHECK(task.oracle.count(category) == static_cast<int>(names.size()));
            } else {
                CHECK(task.oracle.count(category) == 0);
            }
        }

        // Stored oracle equals an oracle_fuser recomputation.
        CHECK(task.oracle ==
              OracleAnnotation::from_plan(oracle_fuser(task.gold_tools(), reg, 4)));

        if (task.gold.empty()) ++qa;
        int loads = 0;
        for (const auto& call : task.gold)
            if (reg.category_of(call.tool) == "load_ops") ++loads;
        if (loads == 2) ++multi;
    }
    // The mix roughly follows the configured weights.
    CHECK(multi > 50);
    CHECK(qa > 10);
}

TEST_CASE("sequential scripting emits one tool per reply then the final answer") {
    ToolRegistry reg = geo_registry();
    BenchTask task = demo_task();
    ScriptedTask script = script_agent(task, Policy::Sequential, reg, ScriptParams{});
    CHECK_FALSE(script.fuser);

    ChatRequest probe;
    probe.model = "m";
    probe.messages = {ChatMessage::user("q")};
    int tool_replies = 0;
    for (;;) {
        ChatResponse response = script.agent->chat(probe);
        if (response.message.tool_calls.empty()) break;
        CHECK(response.message.tool_calls.size() == 1);
        ++tool_replies;
    }
    CHECK(tool_replies == 5);
    CHECK_THROWS_AS(script.agent->chat(probe), ScriptError);  // final already consumed
}

TEST_CASE("provider-parallel scripting groups loads always and filters by the p-draw") {
    ToolRegistry reg = geo_registry();
    BenchTask task = demo_task();

    SUBCASE("p = 1 forces the filter group: 3 replies + final") {
        ScriptParams params;
        params.p_filter_group = 1.0;
        ScriptedTask script = script_agent(task, Policy::ProviderParallel, reg, params);
        ChatRequest probe;
        probe.messages = {ChatMessage::user("q")};
        std::vector<std::size_t> widths;
        for (;;) {
            ChatResponse response = script.agent->chat(probe);
            if (response.message.tool_calls.empty()) break;
            widths.push_back(response.message.tool_calls.size());
        }
        CHECK(widths == std::vector<std::size_t>{2, 2, 1});
    }
    SUBCASE("p = 0 never groups filters: 4 replies + final") {
        ScriptParams params;
        params.p_filter_group = 0.0;
        ScriptedTask script = script_agent(task, Policy::ProviderParallel, reg, params);
        ChatRequest probe;
        probe.messages = {ChatMessage::user("q")};
        std::vector<std::size_t> widths;
        for (;;) {
            ChatResponse response = script.agent->chat(probe);
            if (response.message.tool_calls.empty()) break;
            widths.push_back(response.message.tool_calls.size());
        }
        CHECK(widths == std::vector<std::size_t>{2, 1, 1, 1});
    }
}

TEST_CASE("compiler scripting selects both fused tools in one reply") {
    ToolRegistry reg = geo_registry();
    BenchTask task = demo_task();
    ScriptedTask script = script_agent(task, Policy::CompilerAware, reg, ScriptParams{});
    REQUIRE(script.fuser);
    CHECK(script.plan.groups.size() == 2);

    ChatRequest probe;
    probe.messages = {ChatMessage::user("q")};
    std::vector<std::vector<std::string>> replies;
    for (;;) {
        ChatResponse response = script.agent->chat(probe);
        if (response.message.tool_calls.empty()) break;
        std::vector<std::string> names;
        for (const auto& call : response.message.tool_calls) names.push_back(call.name);
        replies.push_back(std::move(names));
    }
    // The two fused selections share one reply; the plot follows alone.
    REQUIRE(replies.size() == 2);
    CHECK(replies[0] == std::vector<std::string>{"fused__load_db_xview1__load_db_fair1m",
                                                 "fused__filter_loc__filter_date"});
    CHECK(replies[1] == std::vector<std::string>{"plot_map"});
}

TEST_CASE("a stale toolset view is a scripting error") {
    ToolRegistry reg = geo_registry();
    BenchTask task = demo_task();
    // A view fusing unrelated tools: the task's loads are gone from it.
    FusionPlan stale_plan;
    stale_plan.groups["doc_ops"] = {"search_docs", "get_doc"};
    FusedToolset stale = fuse_toolset(reg, stale_plan);
    stale.tools.erase(stale.tools.begin(), stale.tools.begin() + 3);  // drop some loads
    CHECK_THROWS_AS(script_agent(task, Policy::CompilerAware, reg, ScriptParams{}, &stale),
                    ScriptError);
}

TEST_CASE("every policy preserves the gold sequence's semantics") {
    ToolRegistry reg = geo_registry();
    auto tasks = generate_workload(small_config(30), reg);
    for (const auto& task : tasks) {
        auto reference = run_gold_reference(reg, task.gold);
        for (Policy policy :
             {Policy::Sequential, Policy::ProviderParallel, Policy::CompilerAware}) {
            TaskRun run = run_policy_task(task, policy, reg, ScriptParams{});
            CHECK(run.outcome.status == TaskStatus::Success);
            CHECK(run.state->equals(*reference));
        }
    }
}

TEST_CASE("policy traces carry the expected api-call shapes") {
    ToolRegistry reg = geo_registry();
    BenchTask task = demo_task();

    TaskRun sequential = run_policy_task(task, Policy::Sequential, reg, ScriptParams{});
    CHECK(sequential.trace.api_calls.size() == 6);  // 5 tools + final
    CHECK_FALSE(sequential.trace.used_fusion);

    TaskRun compiler = run_policy_task(task, Policy::CompilerAware, reg, ScriptParams{});
    REQUIRE(compiler.trace.api_calls.size() == 4);  // fuser + mega + plot + final
    CHECK(compiler.trace.api_calls[0].kind == "fuser");
    CHECK(compiler.trace.api_calls[1].constituent_tools == 4);
    CHECK(compiler.trace.used_fusion);
    CHECK(compiler.outcome.steps == 3);

    // Correctness holds at constituent granularity.
    auto correctness = correctness_rate({compiler.trace});
    REQUIRE(correctness.has_value());
    CHECK(*correctness == doctest::Approx(100.0));
}

TEST_CASE("run_benchmark orders the three policies as expected on the default workload") {
    WorkloadConfig config = small_config(80);
    BenchOptions options;
    options.repeats = 2;
    BenchResult result = run_benchmark(config, options);

    REQUIRE(result.policies.size() == 3);
    const auto& sequential = result.policies[0];
    const auto& provider = result.policies[1];
    const auto& compiler = result.policies[2];

    // Deterministic under the fixed seed: zero deviation across repeats.
    for (const auto& policy : result.policies)
        for (const auto& [name, stat] : policy.metrics) {
            CAPTURE(name);
            CHECK(stat.dev == 0.0);
        }

    CHECK(sequential.metrics.at("success_rate").mean == doctest::Approx(100.0));
    CHECK(compiler.metrics.at("correctness_rate").mean == doctest::Approx(100.0));

    // Oracle-style parallelization: the compiler groups everything, the
    // provider-parallel baseline groups loads always and filters rarely.
    CHECK(compiler.metrics.at("parallelization_filter_ops").mean >= 95.0);
    CHECK(compiler.metrics.at("parallelization_load_ops").mean >= 99.0);
    CHECK(provider.metrics.at("parallelization_filter_ops").mean > 10.0);
    CHECK(provider.metrics.at("parallelization_filter_ops").mean < 40.0);
    CHECK(sequential.metrics.at("parallelization_filter_ops").mean == doctest::Approx(0.0));

    // Fewer replies mean fewer serialized-conversation tokens and less
    // path time.
    CHECK(compiler.metrics.at("token_reduction").mean > 1.0);
    CHECK(compiler.metrics.at("speedup").mean > 1.0);

    // The compiler's share of >=2-tool calls dominates.
    auto share_ge2 = [](const std::map<int, double>& histogram) {
        double share = 0;
        for (const auto& [bin, percent] : histogram)
            if (bin >= 2) share += percent;
        return share;
    };
    CHECK(share_ge2(compiler.histogram) > share_ge2(provider.histogram));
    CHECK(share_ge2(provider.histogram) >= share_ge2(sequential.histogram));

    // The report serializes with stringified histogram bins.
    json doc = result.to_json();
    CHECK(doc["policies"].size() == 3);
    CHECK(doc["oracle_totals"].contains("load_ops"));
}

TEST_CASE("parallel task execution changes nothing") {
    WorkloadConfig config = small_config(24);
    BenchOptions serial_options;
    BenchOptions parallel_options;
    parallel_options.jobs = 4;
    BenchResult serial = run_benchmark(config, serial_options);
    BenchResult parallel = run_benchmark(config, parallel_options);
    for (std::size_t p = 0; p < serial.policies.size(); ++p)
        for (const auto& [name, stat] : serial.policies[p].metrics)
            CHECK(parallel.policies[p].metrics.at(name).mean == doctest::Approx(stat.mean));
}

TEST_CASE("bench task files round-trip") {
    BenchTask task = demo_task();
    CHECK(task.id == "demo-loadfilter");
    CHECK(task.gold.size() == 5);
    CHECK(BenchTask::from_json(task.to_json()).to_json() == task.to_json());
}
