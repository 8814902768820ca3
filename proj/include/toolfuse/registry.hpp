#pragma once

#include "toolfuse/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace toolfuse {

enum class ParamType { String, Number, Integer, Boolean, Array, Enum };

const char* to_string(ParamType type);
ParamType param_type_from_string(const std::string& name);

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::String;
    std::string description;
    bool required = false;
    std::vector<std::string> enum_values;  // only for ParamType::Enum

    bool operator==(const ParamSpec&) const = default;
};

enum class EffectMode { Read, Write };

struct ResourceEffect {
    std::string resource;
    EffectMode mode = EffectMode::Read;

    bool operator==(const ResourceEffect&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::string category;
    std::vector<ResourceEffect> effects;
    std::vector<ParamSpec> parameters;  // declaration order

    const ParamSpec* find_param(const std::string& param_name) const;
    bool reads(const std::string& resource) const;
    bool writes(const std::string& resource) const;

    bool operator==(const ToolSpec&) const = default;
};

// Proposed tool groupings keyed by category. Group-internal order is the
// sequential-execution order where sequencing is required.
struct FusionPlan {
    std::map<std::string, std::vector<std::string>> groups;

    bool empty() const { return groups.empty(); }
    json to_json() const;
    static FusionPlan from_json(const json& doc);

    bool operator==(const FusionPlan&) const = default;
};

// Immutable after construction; safe to share across concurrent tasks.
class ToolRegistry {
public:
    ToolRegistry() = default;

    // `doc` shape: {"categories": [..], "tools": [{name, description,
    // category, effects: [{resource, mode}], parameters: {name: {type,
    // description, required}}}]}. Declaration order is preserved.
    static ToolRegistry load(const json& doc);
    // Parses text, additionally rejecting duplicate object keys (a plain
    // JSON parse silently collapses them).
    static ToolRegistry load_text(const std::string& text);
    static ToolRegistry load_file(const std::string& path);

    json to_json() const;

    const std::vector<ToolSpec>& tools() const { return tools_; }
    const std::vector<std::string>& categories() const { return categories_; }
    std::size_t size() const { return tools_.size(); }
    bool empty() const { return tools_.empty(); }

    bool has(const std::string& name) const;
    bool has_category(const std::string& category) const;
    const ToolSpec* find(const std::string& name) const;
    const ToolSpec& tool(const std::string& name) const;  // throws UnknownToolError
    const std::string& category_of(const std::string& name) const;
    // Tool names of one category, in declaration order.
    const std::vector<std::string>& tools_in(const std::string& category) const;

    bool operator==(const ToolRegistry& other) const {
        return tools_ == other.tools_ && categories_ == other.categories_;
    }

private:
    std::vector<ToolSpec> tools_;
    std::vector<std::string> categories_;
    std::map<std::string, std::size_t> by_name_;
    std::map<std::string, std::vector<std::string>> category_index_;

    void index();
};

// Sanity check on a parsed fusion plan: drops names missing from the
// registry, names whose category does not match the group key, duplicate
// entries (first occurrence wins), and groups left with fewer than two
// tools. Never throws; a fully stripped plan is the empty plan.
FusionPlan validate_plan(const ToolRegistry& registry, const FusionPlan& plan);

}  // namespace toolfuse
