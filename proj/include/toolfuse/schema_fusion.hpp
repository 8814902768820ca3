#pragma once

#include "toolfuse/registry.hpp"

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace toolfuse {

// A consolidated multi-tool definition. `spec` is what the agent sees; the
// ownership map routes each merged parameter back to (tool, original param).
struct FusedTool {
    ToolSpec spec;
    std::vector<std::string> constituents;  // >= 2, one category, group order
    std::map<std::string, std::pair<std::string, std::string>> ownership;

    bool operator==(const FusedTool&) const = default;
};

struct FusionIndex {
    std::map<std::string, FusedTool> fused;  // fused name -> definition
    std::set<std::string> replaced;          // original names absorbed

    bool empty() const { return fused.empty(); }
    const FusedTool* find(const std::string& name) const {
        auto it = fused.find(name);
        return it == fused.end() ? nullptr : &it->second;
    }

    bool operator==(const FusionIndex&) const = default;
};

struct FusedToolset {
    std::vector<ToolSpec> tools;  // rewritten view, registry order preserved
    FusionIndex index;
};

// Deterministic: "fused__" + names joined by "__" in group order; results
// longer than 64 chars are cut to 48 plus an 8-hex-digit FNV-1a of the
// full joined string.
std::string fused_name(const std::vector<std::string>& constituents);

// Merged parameter list under unconditional "<tool>__<param>" prefixing,
// group order then declaration order, plus the inverse ownership map.
std::pair<std::vector<ParamSpec>, std::map<std::string, std::pair<std::string, std::string>>>
merge_parameters(const std::vector<const ToolSpec*>& specs);

FusedTool make_fused_tool(const ToolRegistry& registry, const std::string& category,
                          const std::vector<std::string>& group);

// Rewrites the toolset: each group's constituents are removed and the fused
// tool is inserted where the group's first constituent stood. The plan must
// already be validated. An empty plan yields a view identical to the
// registry's toolset and an empty index.
FusedToolset fuse_toolset(const ToolRegistry& registry, const FusionPlan& plan);

struct DefusedCall {
    std::string tool;
    json arguments = json::object();
    std::vector<std::string> missing_required;

    bool operator==(const DefusedCall&) const = default;
};

struct DefuseResult {
    std::vector<DefusedCall> calls;
    std::vector<std::string> warnings;  // dropped unknown-prefix arguments
};

// Splits a selected call back into constituent sub-calls with routed
// arguments. Original (unfused) tool names pass through unchanged.
// Throws UnknownToolError for names in neither the index nor the registry.
DefuseResult defuse_call(const FusionIndex& index, const ToolRegistry& registry,
                         const std::string& name, const json& arguments);

// Inverse of defuse_call's routing: lifts per-constituent argument maps into
// the fused argument form, emitting keys in merged-parameter order. Unknown
// tools or parameters for this fused tool raise ScriptError.
json lift_arguments(const FusedTool& fused,
                    const std::vector<std::pair<std::string, json>>& constituent_calls);

}  // namespace toolfuse
