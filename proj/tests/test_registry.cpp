#include "doctest.h"

#include "toolfuse/bench.hpp"
#include "toolfuse/registry.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace toolfuse;

namespace {

std::string fixture(const char* rel) { return std::string(TOOLFUSE_SOURCE_DIR "/") + rel; }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Minimal hand-rolled scanner, independent of the JSON library: counts the
// elements of the top-level "tools" array by brace balancing.
int count_tools_independently(const std::string& text) {
    const std::size_t tools_at = text.find("\"tools\"");
    REQUIRE(tools_at != std::string::npos);
    const std::size_t open = text.find('[', tools_at);
    REQUIRE(open != std::string::npos);
    int depth = 0;
    int count = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open + 1; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') {
            if (depth == 0) ++count;
            ++depth;
        } else if (c == '}') {
            --depth;
        } else if (c == ']' && depth == 0) {
            return count;
        } else if (c == '[') {
            // nested array inside a tool entry only occurs at depth > 0
            REQUIRE(depth > 0);
        }
    }
    FAIL("tools array never closed");
    return -1;
}

json minimal_doc() {
    return json::parse(R"({
      "categories": ["filter_ops", "load_ops"],
      "tools": [
        {"name": "filter_date", "description": "d", "category": "filter_ops",
         "effects": [{"resource": "dataset", "mode": "read"},
                     {"resource": "dataset", "mode": "write"}],
         "parameters": {"start": {"type": "string", "description": "s", "required": true},
                        "end": {"type": "string", "description": "e", "required": true}}},
        {"name": "filter_loc", "description": "d", "category": "filter_ops",
         "parameters": {"lat": {"type": "number", "description": "", "required": true}}},
        {"name": "load_db", "description": "d", "category": "load_ops",
         "effects": [{"resource": "ds", "mode": "write"}]}
      ]
    })");
}

}  // namespace

TEST_CASE("geo registry fixture loads with 30 tools and the four categories") {
    const std::string text = slurp(fixture("configs/geo_registry.json"));
    ToolRegistry reg = ToolRegistry::load_text(text);
    CHECK(reg.size() == 30);
    CHECK(reg.categories() ==
          std::vector<std::string>{"load_ops", "filter_ops", "plot_ops", "doc_ops"});
    CHECK(count_tools_independently(text) == 30);
    // The shipped fixture is exactly the built-in synthetic registry.
    CHECK(reg == bench::geo_registry());
}

TEST_CASE("empty tool list loads as an empty registry") {
    ToolRegistry reg = ToolRegistry::load(json::parse(R"({"categories": [], "tools": []})"));
    CHECK(reg.size() == 0);
    CHECK(reg.tools().empty());
}

TEST_CASE("duplicate tool names are rejected with the offending name") {
    json doc = json::parse(R"({
      "categories": ["filter_ops"],
      "tools": [
        {"name": "filter_date", "description": "", "category": "filter_ops"},
        {"name": "filter_date", "description": "", "category": "filter_ops"}
      ]
    })");
    CHECK_THROWS_WITH_AS(ToolRegistry::load(doc),
                         doctest::Contains("duplicate tool name 'filter_date'"), RegistryError);
}

TEST_CASE("unknown category and bad identifiers are rejected with locations") {
    json doc = minimal_doc();
    doc["tools"][2]["category"] = "no_such_ops";
    CHECK_THROWS_WITH_AS(ToolRegistry::load(doc), doctest::Contains("tools[2]"), RegistryError);

    doc = minimal_doc();
    doc["tools"][0]["name"] = "FilterDate";
    CHECK_THROWS_AS(ToolRegistry::load(doc), RegistryError);
}

TEST_CASE("duplicate parameter names in the raw document are rejected") {
    const std::string text = R"({
      "categories": ["filter_ops"],
      "tools": [{"name": "filter_date", "description": "", "category": "filter_ops",
                 "parameters": {"date": {"type": "string", "description": "", "required": true},
                                "date": {"type": "string", "description": "", "required": false}}}]
    })";
    CHECK_THROWS_WITH_AS(ToolRegistry::load_text(text), doctest::Contains("duplicate key 'date'"),
                         RegistryError);
}

TEST_CASE("duplicate (resource, mode) effects are rejected") {
    json doc = minimal_doc();
    doc["tools"][2]["effects"].push_back({{"resource", "ds"}, {"mode", "write"}});
    CHECK_THROWS_WITH_AS(ToolRegistry::load(doc), doctest::Contains("duplicate effect"),
                         RegistryError);
}

TEST_CASE("malformed text reports the byte position") {
    CHECK_THROWS_WITH_AS(ToolRegistry::load_text("{\"categories\": ["),
                         doctest::Contains("malformed registry document"), RegistryError);
}

TEST_CASE("category_of resolves tools and rejects unknown names") {
    ToolRegistry reg = bench::geo_registry();
    CHECK(reg.category_of("filter_date") == "filter_ops");
    CHECK(reg.category_of("load_db") == "load_ops");
    CHECK_THROWS_AS(reg.category_of("no_such_tool"), UnknownToolError);
}

TEST_CASE("registry round-trips through its serialization") {
    ToolRegistry reg = bench::geo_registry();
    ToolRegistry again = ToolRegistry::load(reg.to_json());
    CHECK(reg == again);
    CHECK(reg.to_json() == again.to_json());
    // Declaration order is preserved.
    CHECK(reg.tools().front().name == "load_db");
    CHECK(reg.tools_in("filter_ops").front() == "filter_date");
}

TEST_CASE("validate_plan applies the sanity-check rules") {
    ToolRegistry reg = ToolRegistry::load(minimal_doc());

    SUBCASE("already valid plans pass through") {
        FusionPlan plan;
        plan.groups["filter_ops"] = {"filter_date", "filter_loc"};
        CHECK(validate_plan(reg, plan) == plan);
    }
    SUBCASE("hallucinated names strip the group below two") {
        FusionPlan plan;
        plan.groups["filter_ops"] = {"filter_date", "hallucinated_tool"};
        CHECK(validate_plan(reg, plan).empty());
    }
    SUBCASE("category mismatches strip too") {
        FusionPlan plan;
        plan.groups["filter_ops"] = {"filter_date", "load_db"};
        CHECK(validate_plan(reg, plan).empty());
    }
    SUBCASE("duplicates collapse to the first occurrence") {
        FusionPlan plan;
        plan.groups["filter_ops"] = {"filter_date", "filter_date", "filter_loc"};
        FusionPlan cleaned = validate_plan(reg, plan);
        CHECK(cleaned.groups.at("filter_ops") ==
              std::vector<std::string>{"filter_date", "filter_loc"});
    }
    SUBCASE("unknown group keys vanish") {
        FusionPlan plan;
        plan.groups["imaginary_ops"] = {"filter_date", "filter_loc"};
        CHECK(validate_plan(reg, plan).empty());
    }
}

TEST_CASE("validate_plan is idempotent and produces registry-consistent plans") {
    ToolRegistry reg = bench::geo_registry();
    std::mt19937_64 rng(2024);

    std::vector<std::string> names;
    for (const auto& tool : reg.tools()) names.push_back(tool.name);
    names.push_back("ghost_tool");
    names.push_back("another_ghost");

    for (int round = 0; round < 200; ++round) {
        FusionPlan plan;
        const int n_groups = static_cast<int>(rng() % 4);
        for (int g = 0; g < n_groups; ++g) {
            const std::string& category = reg.categories()[rng() % reg.categories().size()];
            std::vector<std::string> group;
            const int n = 1 + static_cast<int>(rng() % 5);
            for (int k = 0; k < n; ++k) group.push_back(names[rng() % names.size()]);
            plan.groups[category] = group;
        }
        FusionPlan once = validate_plan(reg, plan);
        CHECK(validate_plan(reg, once) == once);
        for (const auto& [category, group] : once.groups) {
            CHECK(group.size() >= 2);
            for (const auto& name : group) CHECK(reg.category_of(name) == category);
        }
    }
}
