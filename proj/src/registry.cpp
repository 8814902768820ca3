#include "toolfuse/registry.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace toolfuse {

const char* to_string(ParamType type) {
    switch (type) {
        case ParamType::String: return "string";
        case ParamType::Number: return "number";
        case ParamType::Integer: return "integer";
        case ParamType::Boolean: return "boolean";
        case ParamType::Array: return "array";
        case ParamType::Enum: return "enum";
    }
    return "string";
}

ParamType param_type_from_string(const std::string& name) {
    if (name == "string") return ParamType::String;
    if (name == "number") return ParamType::Number;
    if (name == "integer") return ParamType::Integer;
    if (name == "boolean") return ParamType::Boolean;
    if (name == "array") return ParamType::Array;
    if (name == "enum") return ParamType::Enum;
    throw RegistryError("unknown parameter type '" + name + "'");
}

const ParamSpec* ToolSpec::find_param(const std::string& param_name) const {
    for (const auto& p : parameters)
        if (p.name == param_name) return &p;
    return nullptr;
}

bool ToolSpec::reads(const std::string& resource) const {
    return std::any_of(effects.begin(), effects.end(), [&](const ResourceEffect& e) {
        return e.mode == EffectMode::Read && e.resource == resource;
    });
}

bool ToolSpec::writes(const std::string& resource) const {
    return std::any_of(effects.begin(), effects.end(), [&](const ResourceEffect& e) {
        return e.mode == EffectMode::Write && e.resource == resource;
    });
}

json FusionPlan::to_json() const {
    json out = json::object();
    for (const auto& [category, names] : groups) out[category] = names;
    return out;
}

FusionPlan FusionPlan::from_json(const json& doc) {
    FusionPlan plan;
    if (!doc.is_object()) return plan;
    for (const auto& [category, value] : doc.items()) {
        if (!value.is_array()) continue;
        std::vector<std::string> names;
        for (const auto& entry : value)
            if (entry.is_string()) names.push_back(entry.get<std::string>());
        if (!names.empty()) plan.groups[category] = std::move(names);
    }
    return plan;
}

namespace {

bool valid_identifier(const std::string& name) {
    if (name.empty() || name[0] < 'a' || name[0] > 'z') return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::string tool_location(std::size_t index, const std::string& name) {
    std::ostringstream os;
    os << "tools[" << index << "]";
    if (!name.empty()) os << " ('" << name << "')";
    return os.str();
}

ParamSpec parse_param(const std::string& where, const std::string& name, const json& body) {
    if (!body.is_object())
        throw RegistryError(where + ": parameter '" + name + "' must be an object");
    ParamSpec param;
    param.name = name;
    param.type = param_type_from_string(body.value("type", "string"));
    param.description = body.value("description", "");
    param.required = body.value("required", false);
    if (param.type == ParamType::Enum) {
        if (!body.contains("values") || !body["values"].is_array())
            throw RegistryError(where + ": enum parameter '" + name + "' needs a 'values' array");
        for (const auto& v : body["values"]) param.enum_values.push_back(v.get<std::string>());
    }
    return param;
}

// SAX walk that rejects duplicate keys anywhere in the document, reporting
// a JSON-pointer-ish location. A normal parse keeps the last duplicate
// silently, which would hide authoring mistakes in parameter maps.
struct DuplicateKeyCheck : nlohmann::json_sax<json> {
    struct Frame {
        bool is_object = false;
        std::set<std::string> keys;
        std::string current_key;
        std::size_t index = 0;
    };
    std::vector<Frame> stack;

    std::string path() const {
        std::string out;
        for (std::size_t i = 0; i + 1 < stack.size(); ++i) {
            const Frame& f = stack[i];
            out += "/";
            out += f.is_object ? f.current_key : std::to_string(f.index);
        }
        return out.empty() ? "/" : out;
    }

    bool value() {
        if (!stack.empty() && !stack.back().is_object) ++stack.back().index;
        return true;
    }

    bool null() override { return value(); }
    bool boolean(bool) override { return value(); }
    bool number_integer(number_integer_t) override { return value(); }
    bool number_unsigned(number_unsigned_t) override { return value(); }
    bool number_float(number_float_t, const string_t&) override { return value(); }
    bool string(string_t&) override { return value(); }
    bool binary(binary_t&) override { return value(); }

    bool start_object(std::size_t) override {
        stack.push_back(Frame{true, {}, "", 0});
        return true;
    }
    bool key(string_t& k) override {
        Frame& f = stack.back();
        f.current_key = k;
        if (!f.keys.insert(k).second)
            throw RegistryError("duplicate key '" + k + "' at " + path());
        return true;
    }
    bool end_object() override {
        stack.pop_back();
        return value();
    }
    bool start_array(std::size_t) override {
        stack.push_back(Frame{});
        return true;
    }
    bool end_array() override {
        stack.pop_back();
        return value();
    }
    bool parse_error(std::size_t position, const std::string&,
                     const nlohmann::detail::exception& ex) override {
        throw RegistryError("malformed registry document at byte " +
                            std::to_string(position) + ": " + ex.what());
    }
};

}  // namespace

ToolRegistry ToolRegistry::load(const json& doc) {
    if (!doc.is_object()) throw RegistryError("registry document must be a JSON object");
    if (!doc.contains("categories") || !doc["categories"].is_array())
        throw RegistryError("registry document needs a 'categories' array");
    if (!doc.contains("tools") || !doc["tools"].is_array())
        throw RegistryError("registry document needs a 'tools' array");

    ToolRegistry reg;
    std::set<std::string> category_set;
    for (const auto& c : doc["categories"]) {
        std::string name = c.get<std::string>();
        if (!category_set.insert(name).second)
            throw RegistryError("duplicate category '" + name + "'");
        reg.categories_.push_back(std::move(name));
    }

    std::set<std::string> seen_names;
    std::size_t index = 0;
    for (const auto& entry : doc["tools"]) {
        ToolSpec tool;
        tool.name = entry.value("name", "");
        const std::string where = tool_location(index, tool.name);
        if (!entry.is_object()) throw RegistryError(where + ": tool entry must be an object");
        if (!valid_identifier(tool.name))
            throw RegistryError(where + ": tool name must match [a-z][a-z0-9_]*");
        if (!seen_names.insert(tool.name).second)
            throw RegistryError(where + ": duplicate tool name '" + tool.name + "'");
        tool.description = entry.value("description", "");
        tool.category = entry.value("category", "");
        if (!category_set.count(tool.category))
            throw RegistryError(where + ": unknown category '" + tool.category + "'");

        if (entry.contains("effects")) {
            std::set<std::pair<std::string, std::string>> seen_effects;
            for (const auto& e : entry["effects"]) {
                ResourceEffect effect;
                effect.resource = e.value("resource", "");
                std::string mode = e.value("mode", "");
                if (effect.resource.empty())
                    throw RegistryError(where + ": effect needs a 'resource'");
                if (mode == "read") effect.mode = EffectMode::Read;
                else if (mode == "write") effect.mode = EffectMode::Write;
                else throw RegistryError(where + ": effect mode must be 'read' or 'write'");
                if (!seen_effects.insert({effect.resource, mode}).second)
                    throw RegistryError(where + ": duplicate effect (" + effect.resource +
                                        ", " + mode + ")");
                tool.effects.push_back(std::move(effect));
            }
        }

        if (entry.contains("parameters")) {
            if (!entry["parameters"].is_object())
                throw RegistryError(where + ": 'parameters' must be an object");
            std::set<std::string> seen_params;
            for (const auto& [pname, pbody] : entry["parameters"].items()) {
                if (!seen_params.insert(pname).second)
                    throw RegistryError(where + ": duplicate parameter name '" + pname + "'");
                tool.parameters.push_back(parse_param(where, pname, pbody));
            }
        }

        reg.tools_.push_back(std::move(tool));
        ++index;
    }
    reg.index();
    return reg;
}

ToolRegistry ToolRegistry::load_text(const std::string& text) {
    DuplicateKeyCheck check;
    json::sax_parse(text, &check);
    return load(json::parse(text));
}

ToolRegistry ToolRegistry::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RegistryError("cannot open registry file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_text(buf.str());
}

json ToolRegistry::to_json() const {
    json doc = json::object();
    doc["categories"] = categories_;
    json tools = json::array();
    for (const auto& tool : tools_) {
        json t = json::object();
        t["name"] = tool.name;
        t["description"] = tool.description;
        t["category"] = tool.category;
        json effects = json::array();
        for (const auto& e : tool.effects)
            effects.push_back({{"resource", e.resource},
                               {"mode", e.mode == EffectMode::Read ? "read" : "write"}});
        t["effects"] = std::move(effects);
        json params = json::object();
        for (const auto& p : tool.parameters) {
            json body = json::object();
            body["type"] = to_string(p.type);
            body["description"] = p.description;
            body["required"] = p.required;
            if (p.type == ParamType::Enum) body["values"] = p.enum_values;
            params[p.name] = std::move(body);
        }
        t["parameters"] = std::move(params);
        tools.push_back(std::move(t));
    }
    doc["tools"] = std::move(tools);
    return doc;
}

void ToolRegistry::index() {
    by_name_.clear();
    category_index_.clear();
    for (const auto& category : categories_) category_index_[category];
    for (std::size_t i = 0; i < tools_.size(); ++i) {
        by_name_[tools_[i].name] = i;
        category_index_[tools_[i].category].push_back(tools_[i].name);
    }
}

bool ToolRegistry::has(const std::string& name) const { return by_name_.count(name) > 0; }

bool ToolRegistry::has_category(const std::string& category) const {
    return std::find(categories_.begin(), categories_.end(), category) != categories_.end();
}

const ToolSpec* ToolRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &tools_[it->second];
}

const ToolSpec& ToolRegistry::tool(const std::string& name) const {
    const ToolSpec* spec = find(name);
    if (!spec) throw UnknownToolError(name);
    return *spec;
}

const std::string& ToolRegistry::category_of(const std::string& name) const {
    return tool(name).category;
}

const std::vector<std::string>& ToolRegistry::tools_in(const std::string& category) const {
    static const std::vector<std::string> empty;
    auto it = category_index_.find(category);
    return it == category_index_.end() ? empty : it->second;
}

FusionPlan validate_plan(const ToolRegistry& registry, const FusionPlan& plan) {
    FusionPlan out;
    for (const auto& [category, names] : plan.groups) {
        std::vector<std::string> kept;
        std::set<std::string> seen;
        for (const auto& name : names) {
            const ToolSpec* spec = registry.find(name);
            if (!spec) continue;                    // nonexistent function name
            if (spec->category != category) continue;  // wrong tool type
            if (!seen.insert(name).second) continue;   // duplicate
            kept.push_back(name);
        }
        if (kept.size() >= 2) out.groups[category] = std::move(kept);
    }
    return out;
}

}  // namespace toolfuse
