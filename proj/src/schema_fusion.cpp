#include "toolfuse/schema_fusion.hpp"

#include <algorithm>

namespace toolfuse {

std::string fused_name(const std::vector<std::string>& constituents) {
    std::string joined = "fused";
    for (const auto& name : constituents) joined += "__" + name;
    if (joined.size() <= 64) return joined;
    return joined.substr(0, 48) + fnv1a_hex(joined);
}

std::pair<std::vector<ParamSpec>, std::map<std::string, std::pair<std::string, std::string>>>
merge_parameters(const std::vector<const ToolSpec*>& specs) {
    std::vector<ParamSpec> merged;
    std::map<std::string, std::pair<std::string, std::string>> ownership;
    for (const ToolSpec* spec : specs) {
        for (const ParamSpec& param : spec->parameters) {
            ParamSpec out = param;
            out.name = spec->name + "__" + param.name;
            out.description = "[for " + spec->name + "] " + param.description;
            merged.push_back(std::move(out));
            ownership[spec->name + "__" + param.name] = {spec->name, param.name};
        }
    }
    return {std::move(merged), std::move(ownership)};
}

FusedTool make_fused_tool(const ToolRegistry& registry, const std::string& category,
                          const std::vector<std::string>& group) {
    FusedTool fused;
    fused.constituents = group;

    std::vector<const ToolSpec*> specs;
    specs.reserve(group.size());
    for (const auto& name : group) specs.push_back(&registry.tool(name));

    fused.spec.name = fused_name(group);
    fused.spec.category = category;

    std::string description = "Performs in one step: ";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) description += "; ";
        description += specs[i]->name + ": " + specs[i]->description;
    }
    fused.spec.description = std::move(description);

    // Effects are the union of constituent effects; scheduling always happens
    // on de-fused sub-calls, so this is informational.
    std::set<std::pair<std::string, int>> seen;
    for (const ToolSpec* spec : specs)
        for (const ResourceEffect& e : spec->effects)
            if (seen.insert({e.resource, static_cast<int>(e.mode)}).second)
                fused.spec.effects.push_back(e);

    auto [params, ownership] = merge_parameters(specs);
    fused.spec.parameters = std::move(params);
    fused.ownership = std::move(ownership);
    return fused;
}

FusedToolset fuse_toolset(const ToolRegistry& registry, const FusionPlan& plan) {
    FusedToolset out;
    if (plan.empty()) {
        out.tools = registry.tools();
        return out;
    }

    std::map<std::string, std::string> first_constituent_of;  // first member -> fused name
    for (const auto& [category, group] : plan.groups) {
        FusedTool fused = make_fused_tool(registry, category, group);
        if (registry.has(fused.spec.name))
            throw Error("fused name '" + fused.spec.name + "' collides with a registry tool");
        first_constituent_of[group.front()] = fused.spec.name;
        for (const auto& name : group) out.index.replaced.insert(name);
        out.index.fused[fused.spec.name] = std::move(fused);
    }

    for (const ToolSpec& tool : registry.tools()) {
        auto at = first_constituent_of.find(tool.name);
        if (at != first_constituent_of.end())
            out.tools.push_back(out.index.fused.at(at->second).spec);
        else if (!out.index.replaced.count(tool.name))
            out.tools.push_back(tool);
    }
    return out;
}

DefuseResult defuse_call(const FusionIndex& index, const ToolRegistry& registry,
                         const std::string& name, const json& arguments) {
    DefuseResult result;
    const FusedTool* fused = index.find(name);
    if (!fused) {
        if (!registry.has(name)) throw UnknownToolError(name);
        DefusedCall call;
        call.tool = name;
        call.arguments = arguments.is_object() ? arguments : json::object();
        result.calls.push_back(std::move(call));
        return result;
    }

    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < fused->constituents.size(); ++i) {
        DefusedCall call;
        call.tool = fused->constituents[i];
        slot[call.tool] = i;
        result.calls.push_back(std::move(call));
    }

    if (arguments.is_object()) {
        for (const auto& [key, value] : arguments.items()) {
            auto owner = fused->ownership.find(key);
            if (owner == fused->ownership.end()) {
                result.warnings.push_back("dropped argument '" + key + "' of " + name +
                                          ": no constituent owns it");
                continue;
            }
            result.calls[slot.at(owner->second.first)].arguments[owner->second.second] = value;
        }
    }

    for (DefusedCall& call : result.calls) {
        const ToolSpec& spec = registry.tool(call.tool);
        for (const ParamSpec& param : spec.parameters)
            if (param.required && !call.arguments.contains(param.name))
                call.missing_required.push_back(param.name);
    }
    return result;
}

json lift_arguments(const FusedTool& fused,
                    const std::vector<std::pair<std::string, json>>& constituent_calls) {
    std::map<std::string, const json*> provided;
    for (const auto& [tool, args] : constituent_calls) {
        if (std::find(fused.constituents.begin(), fused.constituents.end(), tool) ==
            fused.constituents.end())
            throw ScriptError("tool '" + tool + "' is not a constituent of " + fused.spec.name);
        provided[tool] = &args;
    }

    json out = json::object();
    for (const ParamSpec& param : fused.spec.parameters) {
        const auto& [tool, original] = fused.ownership.at(param.name);
        auto it = provided.find(tool);
        if (it == provided.end()) continue;
        if (it->second->contains(original)) out[param.name] = (*it->second)[original];
    }
    return out;
}

}  // namespace toolfuse
