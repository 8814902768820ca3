#include "toolfuse/fuser.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace toolfuse {

const std::string& default_fuser_template() {
    static const std::string text = R"(As a compiler with access to the tools listed below, your job is to prepare tool groupings for the query, not to answer it.

Intents: {intents}

Given the examples below and *without* solving for the query, reason about which tools will be *likely* needed to complete the task, then compile lists of tools for each subset of similar ops without calling any arguments. Group only tools of the same op type, in the order they would run. Reply with the JSON of grouped tools only when confident; otherwise reply with an empty JSON object and the toolset stays as it is.

User Query: {question}

In-context examples:
{examples}

Available tools:
{tool_list}

Answer in the format of json: {categories}. Think step by step.)";
    return text;
}

const std::string& default_intent_example() {
    static const std::string text =
        R"(Example: "Plot the urban scenes from dataset alpha over Spain from March 2019"
Thought 1: the scenes come from one dataset, so one load op is needed.
Thought 2: a month means a date range and a country means a location, so two filter ops apply to the same data and belong in one group.
Action: compile {"load_ops": ["load_dataset_alpha"], "filter_ops": ["filter_by_region", "filter_by_dates"]} without solving the query.)";
    return text;
}

std::string load_prompt_template(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open prompt template '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json FuserConfig::to_json() const {
    json doc = json::object();
    doc["intents_preamble"] = intents_preamble;
    doc["intent_examples"] = intent_examples;
    doc["fuser_model"] = fuser_model;
    doc["max_group_size"] = max_group_size;
    return doc;
}

FuserConfig FuserConfig::from_json(const json& doc) {
    FuserConfig config;
    config.intents_preamble = doc.value("intents_preamble", config.intents_preamble);
    if (doc.contains("intent_examples"))
        config.intent_examples = doc["intent_examples"].get<std::vector<std::string>>();
    config.fuser_model = doc.value("fuser_model", config.fuser_model);
    config.max_group_size = doc.value("max_group_size", config.max_group_size);
    if (config.max_group_size < 2)
        throw Error("fuser config: max_group_size must be >= 2");
    return config;
}

FuserConfig FuserConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open fuser config '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw Error("malformed fuser config '" + path + "': " + ex.what());
    }
    FuserConfig config = from_json(doc);
    if (doc.contains("template_file")) {
        std::filesystem::path base = std::filesystem::path(path).parent_path();
        config.prompt_template =
            load_prompt_template((base / doc["template_file"].get<std::string>()).string());
    }
    return config;
}

namespace {

void replace_all(std::string& text, const std::string& placeholder, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
}

std::string answer_format(const ToolRegistry& registry) {
    std::string out = "{";
    bool first = true;
    for (const auto& category : registry.categories()) {
        if (!first) out += ", ";
        first = false;
        out += "'" + category + "': [..]";
    }
    out += "}";
    return out;
}

}  // namespace

FuserPrompt build_fuser_prompt(const std::string& query, const ToolRegistry& registry,
                               const FuserConfig& config) {
    std::string system_text =
        config.prompt_template.empty() ? default_fuser_template() : config.prompt_template;

    std::string tool_list;
    for (const ToolSpec& tool : registry.tools())
        tool_list += "- " + tool.name + ": " + tool.description + "\n";
    if (!tool_list.empty()) tool_list.pop_back();

    std::string examples;
    const auto& example_texts =
        config.intent_examples.empty() ? std::vector<std::string>{default_intent_example()}
                                       : config.intent_examples;
    for (std::size_t i = 0; i < example_texts.size(); ++i) {
        if (i) examples += "\n\n";
        examples += example_texts[i];
    }

    replace_all(system_text, "{intents}", config.intents_preamble);
    replace_all(system_text, "{question}", query);
    replace_all(system_text, "{tool_list}", tool_list);
    replace_all(system_text, "{categories}", answer_format(registry));
    replace_all(system_text, "{examples}", examples);

    return {std::move(system_text), query};
}

namespace {

// First balanced brace span that parses as a JSON object, scanning past
// prose and code fences. Tracks strings and escapes so braces inside
// string values do not derail the balance count.
bool extract_json_object(const std::string& raw, json& out) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}') {
                if (--depth == 0) {
                    json candidate =
                        json::parse(raw.substr(start, i - start + 1), nullptr, false);
                    if (!candidate.is_discarded() && candidate.is_object()) {
                        out = std::move(candidate);
                        return true;
                    }
                    break;  // balanced but unparseable; try the next '{'
                }
            }
        }
    }
    return false;
}

}  // namespace

FusionPlan parse_fusion_reply(const std::string& raw, const ToolRegistry& registry) {
    (void)registry;  // validation is a separate pass
    json doc;
    if (!extract_json_object(raw, doc)) return {};
    return FusionPlan::from_json(doc);
}

FusionPlan propose_fusion(const std::string& query, const ToolRegistry& registry,
                          const FuserConfig& config, Session& session,
                          ChatResponse* raw_response) {
    FuserPrompt prompt = build_fuser_prompt(query, registry, config);

    ChatRequest request;
    request.model = config.fuser_model;
    request.messages.push_back(ChatMessage::system(prompt.system_text));
    request.messages.push_back(ChatMessage::user(prompt.user_text));
    request.tools = tools_wire(registry.tools());
    request.tool_choice = ToolChoice::None;

    ChatResponse response = session.chat(request);  // TransportError propagates
    if (raw_response) *raw_response = response;

    FusionPlan plan = parse_fusion_reply(response.message.content, registry);
    plan = validate_plan(registry, plan);
    const std::size_t cap = static_cast<std::size_t>(std::max(2, config.max_group_size));
    for (auto& [category, names] : plan.groups)
        if (names.size() > cap) names.resize(cap);
    return plan;
}

FusionPlan oracle_fuser(const std::vector<std::string>& gold_tools, const ToolRegistry& registry,
                        int max_group_size) {
    std::vector<std::pair<std::string, std::vector<std::string>>> ordered;
    std::set<std::string> seen;
    for (const auto& name : gold_tools) {
        const ToolSpec* spec = registry.find(name);
        if (!spec || !seen.insert(name).second) continue;
        auto it = std::find_if(ordered.begin(), ordered.end(),
                               [&](const auto& entry) { return entry.first == spec->category; });
        if (it == ordered.end())
            ordered.push_back({spec->category, {name}});
        else
            it->second.push_back(name);
    }

    FusionPlan plan;
    const std::size_t cap = static_cast<std::size_t>(std::max(2, max_group_size));
    for (auto& [category, names] : ordered) {
        if (names.size() < 2) continue;
        if (names.size() > cap) names.resize(cap);
        plan.groups[category] = std::move(names);
    }
    return plan;
}

}  // namespace toolfuse
