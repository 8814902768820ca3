#pragma once

#include "toolfuse/registry.hpp"
#include "toolfuse/schema_fusion.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace toolfuse::testsupport {

// Random registry for property runs: 2-4 categories, 4-12 tools, 0-4
// params each with assorted types, optional random effects over a small
// resource pool.
inline ToolRegistry random_registry(std::mt19937_64& rng, bool with_effects = false) {
    json doc = json::object();
    const int n_categories = 2 + static_cast<int>(rng() % 3);
    json categories = json::array();
    for (int c = 0; c < n_categories; ++c) categories.push_back("cat" + std::to_string(c));
    doc["categories"] = categories;

    static const char* kTypes[] = {"string", "number", "integer", "boolean", "array"};
    static const char* kResources[] = {"r0", "r1", "r2", "r3", "r4", "r5"};
    json tools = json::array();
    const int n_tools = 4 + static_cast<int>(rng() % 9);
    for (int t = 0; t < n_tools; ++t) {
        json params = json::object();
        const int n_params = static_cast<int>(rng() % 5);
        for (int p = 0; p < n_params; ++p)
            params["p" + std::to_string(p)] = {{"type", kTypes[rng() % 5]},
                                               {"description", "param"},
                                               {"required", (rng() % 2) == 0}};
        json effects = json::array();
        if (with_effects) {
            std::set<std::pair<int, int>> used;
            const int n_effects = static_cast<int>(rng() % 4);
            for (int e = 0; e < n_effects; ++e) {
                const int resource = static_cast<int>(rng() % 6);
                const int mode = static_cast<int>(rng() % 2);
                if (!used.insert({resource, mode}).second) continue;
                effects.push_back({{"resource", kResources[resource]},
                                   {"mode", mode ? "write" : "read"}});
            }
        }
        tools.push_back({{"name", "tool" + std::to_string(t)},
                         {"description", "tool " + std::to_string(t)},
                         {"category", "cat" + std::to_string(rng() % n_categories)},
                         {"effects", effects},
                         {"parameters", params}});
    }
    doc["tools"] = tools;
    return ToolRegistry::load(doc);
}

inline json random_value(std::mt19937_64& rng, ParamType type) {
    switch (type) {
        case ParamType::Number: return json(static_cast<double>(rng() % 1000) / 8.0);
        case ParamType::Integer: return json(static_cast<int>(rng() % 1000));
        case ParamType::Boolean: return json((rng() % 2) == 0);
        case ParamType::Array: return json::array({"x", static_cast<int>(rng() % 9)});
        default: return json("v" + std::to_string(rng() % 1000));
    }
}

// A random already-validated plan over the registry's categories.
inline FusionPlan random_plan(std::mt19937_64& rng, const ToolRegistry& reg) {
    FusionPlan plan;
    for (const auto& category : reg.categories()) {
        const auto& members = reg.tools_in(category);
        if (members.size() < 2 || (rng() % 3) == 0) continue;
        std::vector<std::string> group = members;
        std::shuffle(group.begin(), group.end(), rng);
        group.resize(2 + rng() % std::min<std::size_t>(group.size() - 1, 3));
        plan.groups[category] = group;
    }
    return validate_plan(reg, plan);
}

}  // namespace toolfuse::testsupport
