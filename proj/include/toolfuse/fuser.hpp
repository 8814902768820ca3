#pragma once

#include "toolfuse/gateway.hpp"
#include "toolfuse/registry.hpp"

#include <string>
#include <vector>

namespace toolfuse {

struct FuserConfig {
    // Short statement of the task families the fuser should think in.
    std::string intents_preamble = "1. load->filter->plot; 2. UI/web; 3. Doc retrieval";
    std::vector<std::string> intent_examples;  // empty -> built-in example
    std::string fuser_model = "gpt-4";
    int max_group_size = 4;  // >= 2
    // System-prompt template; placeholders: {intents}, {question},
    // {tool_list}, {categories}, {examples}.
    std::string prompt_template;  // empty -> built-in template

    json to_json() const;
    static FuserConfig from_json(const json& doc);
    // Document may name a "template_file"; it is resolved relative to the
    // config file's directory.
    static FuserConfig load_file(const std::string& path);
};

struct FuserPrompt {
    std::string system_text;
    std::string user_text;
};

const std::string& default_fuser_template();
const std::string& default_intent_example();

// Reads a template file; throws Error if unreadable.
std::string load_prompt_template(const std::string& path);

// Instantiates the template: {tool_list} becomes one "- name: description"
// line per registry tool, {categories} the required answer-format skeleton
// built from the registry's category names, {question} the query. The user
// text always carries the query verbatim.
FuserPrompt build_fuser_prompt(const std::string& query, const ToolRegistry& registry,
                               const FuserConfig& config);

// Pulls the first balanced, parseable JSON object out of free text
// (tolerating prose and code fences) and reads top-level keys as categories
// with array-of-string values. Anything else is ignored. No JSON at all
// yields the empty plan.
FusionPlan parse_fusion_reply(const std::string& raw, const ToolRegistry& registry);

// One chat call with the fuser prompt, the full tool definitions, and tool
// selection disabled; the reply is parsed, validated against the registry,
// and truncated to max_group_size per group. Malformed or invalid output
// degrades to the empty plan; only transport failures propagate.
FusionPlan propose_fusion(const std::string& query, const ToolRegistry& registry,
                          const FuserConfig& config, Session& session,
                          ChatResponse* raw_response = nullptr);

// Deterministic stand-in for the fuser: groups a gold tool sequence by
// category (first-occurrence order, duplicates dropped), keeps groups of at
// least two, truncates to max_group_size. Defines the parallelization
// ceiling an ideal agent would reach.
FusionPlan oracle_fuser(const std::vector<std::string>& gold_tools, const ToolRegistry& registry,
                        int max_group_size = 4);

}  // namespace toolfuse
