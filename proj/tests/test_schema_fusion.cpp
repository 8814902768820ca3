#include "doctest.h"

#include "toolfuse/bench.hpp"
#include "toolfuse/schema_fusion.hpp"

#include "test_support.hpp"

#include <random>

using namespace toolfuse;

namespace {

json minimal_doc() {
    return json::parse(R"({
      "categories": ["filter_ops", "load_ops"],
      "tools": [
        {"name": "filter_date", "description": "filter by date", "category": "filter_ops",
         "parameters": {"start": {"type": "string", "description": "start", "required": true},
                        "end": {"type": "string", "description": "end", "required": true}}},
        {"name": "filter_loc", "description": "filter by location", "category": "filter_ops",
         "parameters": {"lat": {"type": "number", "description": "", "required": true},
                        "lon": {"type": "number", "description": "", "required": true},
                        "radius": {"type": "number", "description": "", "required": false}}},
        {"name": "load_db", "description": "load", "category": "load_ops",
         "parameters": {"date": {"type": "string", "description": "", "required": false}}},
        {"name": "load_aux", "description": "load aux", "category": "load_ops",
         "parameters": {"date": {"type": "string", "description": "", "required": false}}}
      ]
    })");
}

FusionPlan filter_plan() {
    FusionPlan plan;
    plan.groups["filter_ops"] = {"filter_date", "filter_loc"};
    return plan;
}

std::size_t total_params(const std::vector<ToolSpec>& tools) {
    std::size_t n = 0;
    for (const auto& tool : tools) n += tool.parameters.size();
    return n;
}

}  // namespace

TEST_CASE("fused_name joins constituents and stays order-sensitive") {
    CHECK(fused_name({"filter_date", "filter_loc"}) == "fused__filter_date__filter_loc");
    CHECK(fused_name({"a", "b"}) != fused_name({"b", "a"}));
}

TEST_CASE("fused_name caps long names at 48 chars plus an 8-hex suffix") {
    const std::string a(40, 'a');
    const std::string b(40, 'b');
    const std::string name = fused_name({a, b});
    CHECK(name.size() == 56);
    CHECK(name.size() <= 64);
    CHECK(name.substr(0, 48) == ("fused__" + a + "__" + b).substr(0, 48));
    CHECK(name.substr(48).find_first_not_of("0123456789abcdef") == std::string::npos);
    // Stable: same input, same hash suffix.
    CHECK(fused_name({a, b}) == name);
}

TEST_CASE("merge_parameters prefixes everything and keeps order") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    auto [params, ownership] =
        merge_parameters({&reg.tool("filter_date"), &reg.tool("filter_loc")});

    std::vector<std::string> names;
    for (const auto& p : params) names.push_back(p.name);
    CHECK(names == std::vector<std::string>{"filter_date__start", "filter_date__end",
                                            "filter_loc__lat", "filter_loc__lon",
                                            "filter_loc__radius"});
    CHECK(params[0].description == "[for filter_date] start");
    CHECK(params[0].required);
    CHECK_FALSE(params[4].required);
    CHECK(ownership.at("filter_loc__lat") ==
          std::pair<std::string, std::string>{"filter_loc", "lat"});
    CHECK(ownership.size() == 5);
}

TEST_CASE("merge_parameters keeps same-named parameters apart via prefixes") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    auto [params, ownership] = merge_parameters({&reg.tool("load_db"), &reg.tool("load_aux")});
    CHECK(params.size() == 2);
    CHECK(params[0].name == "load_db__date");
    CHECK(params[1].name == "load_aux__date");
}

TEST_CASE("merging a zero-parameter tool contributes nothing") {
    json doc = minimal_doc();
    doc["tools"].push_back({{"name", "load_bare"},
                            {"description", ""},
                            {"category", "load_ops"},
                            {"parameters", json::object()}});
    ToolRegistry reg = ToolRegistry::load(doc);
    auto [params, ownership] = merge_parameters({&reg.tool("load_bare"), &reg.tool("load_db")});
    CHECK(params.size() == 1);
    CHECK(params[0].name == "load_db__date");
}

TEST_CASE("fuse_toolset replaces the group at its first constituent's slot") {
    ToolRegistry reg = bench::geo_registry();
    FusionPlan plan = filter_plan();
    FusedToolset fused = fuse_toolset(reg, plan);

    CHECK(reg.size() == 30);
    CHECK(fused.tools.size() == 29);  // 30 - 2 + 1
    // filter_date is the first filter in declaration order; the fused tool
    // stands where it stood.
    std::size_t original_pos = 0;
    for (std::size_t i = 0; i < reg.tools().size(); ++i)
        if (reg.tools()[i].name == "filter_date") original_pos = i;
    CHECK(fused.tools[original_pos].name == "fused__filter_date__filter_loc");
    CHECK(fused.index.replaced == std::set<std::string>{"filter_date", "filter_loc"});
    CHECK(fused.index.fused.size() == 1);

    // Non-grouped tools are untouched, in order.
    std::size_t j = 0;
    for (const auto& tool : reg.tools()) {
        if (fused.index.replaced.count(tool.name)) continue;
        while (fused.tools[j].name != tool.name) ++j;
        CHECK(fused.tools[j] == tool);
    }

    // Total parameter count is preserved.
    CHECK(total_params(fused.tools) == total_params(reg.tools()));
}

TEST_CASE("empty plan leaves the toolset identical") {
    ToolRegistry reg = bench::geo_registry();
    FusedToolset fused = fuse_toolset(reg, FusionPlan{});
    CHECK(fused.tools == reg.tools());
    CHECK(fused.index.empty());
}

TEST_CASE("two disjoint groups shrink the view accordingly") {
    ToolRegistry reg = bench::geo_registry();
    FusionPlan plan;
    plan.groups["filter_ops"] = {"filter_date", "filter_loc", "filter_cloud"};
    plan.groups["load_ops"] = {"load_db_xview1", "load_db_fair1m"};
    FusedToolset fused = fuse_toolset(reg, plan);
    CHECK(fused.tools.size() == 27);  // 30 - 5 + 2
    CHECK(total_params(fused.tools) == total_params(reg.tools()));
}

TEST_CASE("identical inputs produce identical views and indices") {
    ToolRegistry reg = bench::geo_registry();
    FusionPlan plan = filter_plan();
    FusedToolset a = fuse_toolset(reg, plan);
    FusedToolset b = fuse_toolset(reg, plan);
    CHECK(a.tools == b.tools);
    CHECK(a.index == b.index);
}

TEST_CASE("defuse_call routes fused arguments back to constituents") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());

    json args = {{"filter_date__start", "2023-10-01"}, {"filter_date__end", "2023-10-31"},
                 {"filter_loc__lat", 40.7},            {"filter_loc__lon", -74.2},
                 {"filter_loc__radius", 50}};
    DefuseResult result =
        defuse_call(fused.index, reg, "fused__filter_date__filter_loc", args);

    REQUIRE(result.calls.size() == 2);
    CHECK(result.warnings.empty());
    CHECK(result.calls[0].tool == "filter_date");
    CHECK(result.calls[0].arguments ==
          json({{"start", "2023-10-01"}, {"end", "2023-10-31"}}));
    CHECK(result.calls[0].missing_required.empty());
    CHECK(result.calls[1].tool == "filter_loc");
    CHECK(result.calls[1].arguments == json({{"lat", 40.7}, {"lon", -74.2}, {"radius", 50}}));
}

TEST_CASE("defuse_call passes original tools through unchanged") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());
    json args = {{"date", "2020-01-01"}};
    DefuseResult result = defuse_call(fused.index, reg, "load_db", args);
    REQUIRE(result.calls.size() == 1);
    CHECK(result.calls[0].tool == "load_db");
    CHECK(result.calls[0].arguments == args);
}

TEST_CASE("defuse_call flags missing required arguments per constituent") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());
    DefuseResult result =
        defuse_call(fused.index, reg, "fused__filter_date__filter_loc", json::object());
    REQUIRE(result.calls.size() == 2);
    CHECK(result.calls[0].arguments.empty());
    CHECK(result.calls[0].missing_required == std::vector<std::string>{"start", "end"});
    CHECK(result.calls[1].missing_required == std::vector<std::string>{"lat", "lon"});
}

TEST_CASE("defuse_call drops unknown-prefix arguments with a warning") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());
    json args = {{"filter_date__start", "a"}, {"filter_date__end", "b"},
                 {"made_up__arg", 1},         {"filter_loc__lat", 1.0},
                 {"filter_loc__lon", 2.0}};
    DefuseResult result =
        defuse_call(fused.index, reg, "fused__filter_date__filter_loc", args);
    REQUIRE(result.warnings.size() == 1);
    CHECK(result.warnings[0].find("made_up__arg") != std::string::npos);
    CHECK(result.calls[0].arguments.size() == 2);
    CHECK(result.calls[1].arguments.size() == 2);
}

TEST_CASE("defuse_call rejects names in neither index nor registry") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());
    CHECK_THROWS_AS(defuse_call(fused.index, reg, "no_such_tool", json::object()),
                    UnknownToolError);
}

using testsupport::random_plan;
using testsupport::random_registry;
using testsupport::random_value;

TEST_CASE("round-trip: lifted constituent arguments defuse back exactly") {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 200; ++round) {
        ToolRegistry reg = random_registry(rng);
        FusionPlan plan = random_plan(rng, reg);
        FusedToolset fused = fuse_toolset(reg, plan);

        for (const auto& [fname, ft] : fused.index.fused) {
            std::vector<std::pair<std::string, json>> calls;
            for (const auto& constituent : ft.constituents) {
                json args = json::object();
                for (const auto& param : reg.tool(constituent).parameters)
                    if (param.required || (rng() % 2) == 0)
                        args[param.name] = random_value(rng, param.type);
                calls.push_back({constituent, args});
            }
            json lifted = lift_arguments(ft, calls);
            DefuseResult defused = defuse_call(fused.index, reg, fname, lifted);
            CHECK(defused.warnings.empty());
            REQUIRE(defused.calls.size() == calls.size());
            for (std::size_t i = 0; i < calls.size(); ++i) {
                CHECK(defused.calls[i].tool == calls[i].first);
                CHECK(canonical_dump(defused.calls[i].arguments) ==
                      canonical_dump(calls[i].second));
            }
        }
        CHECK(total_params(fuse_toolset(reg, plan).tools) == total_params(reg.tools()));
    }
}

TEST_CASE("lift_arguments rejects non-constituents") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());
    FusedToolset fused = fuse_toolset(reg, filter_plan());
    const FusedTool& ft = fused.index.fused.begin()->second;
    CHECK_THROWS_AS(lift_arguments(ft, {{"load_db", json::object()}}), ScriptError);
}
