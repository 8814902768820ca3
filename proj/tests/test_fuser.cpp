#include "doctest.h"

#include "toolfuse/bench.hpp"
#include "toolfuse/fuser.hpp"

#include "test_support.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace toolfuse;

namespace {

// Occurrences of `name` delimited by non-identifier characters.
int count_identifier(const std::string& text, const std::string& name) {
    auto is_ident = [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    };
    int count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(name, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_ident(text[pos - 1]);
        const std::size_t end = pos + name.size();
        const bool right_ok = end >= text.size() || !is_ident(text[end]);
        if (left_ok && right_ok) ++count;
        pos = end;
    }
    return count;
}

struct ThrowingSession : Session {
    ChatResponse chat(const ChatRequest&) override {
        throw TransportError("endpoint unreachable");
    }
};

ScriptedSession reply_with(const std::string& content) {
    return ScriptedSession({{ChatMessage::assistant(content), 0.12, std::nullopt}});
}

}  // namespace

TEST_CASE("fuser prompt carries the preamble, examples, tools, format, and query") {
    ToolRegistry reg = bench::geo_registry();
    FuserConfig config;
    const std::string query = "Plot on the map the fmow images in Europe from June 2012";
    FuserPrompt prompt = build_fuser_prompt(query, reg, config);

    CHECK(prompt.user_text == query);
    CHECK(prompt.system_text.find(config.intents_preamble) != std::string::npos);
    CHECK(prompt.system_text.find("*without* solving") != std::string::npos);
    CHECK(prompt.system_text.find(query) != std::string::npos);
    CHECK(prompt.system_text.find(default_intent_example()) != std::string::npos);
    // Answer format uses the registry's real category names.
    CHECK(prompt.system_text.find(
              "{'load_ops': [..], 'filter_ops': [..], 'plot_ops': [..], 'doc_ops': [..]}") !=
          std::string::npos);
    // Every tool name appears exactly once, with its description.
    for (const auto& tool : reg.tools()) {
        CHECK(count_identifier(prompt.system_text, tool.name) == 1);
        CHECK(prompt.system_text.find(tool.name + ": " + tool.description) != std::string::npos);
    }
}

TEST_CASE("empty queries still produce a well-formed prompt") {
    ToolRegistry reg = bench::geo_registry();
    FuserPrompt prompt = build_fuser_prompt("", reg, FuserConfig{});
    CHECK(prompt.user_text.empty());
    CHECK_FALSE(prompt.system_text.empty());
}

TEST_CASE("prompt templates load from files and substitute placeholders") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "toolfuse_fuser_tpl";
    fs::create_directories(dir);
    const fs::path path = dir / "fuser.txt";
    {
        std::ofstream out(path);
        out << "Q={question} CATS={categories} TOOLS={tool_list} EX={examples} I={intents}";
    }
    FuserConfig config;
    config.prompt_template = load_prompt_template(path.string());
    config.intent_examples = {"example text"};
    config.intents_preamble = "intent text";

    ToolRegistry reg = ToolRegistry::load(json::parse(
        R"({"categories": ["load_ops"], "tools": [{"name": "load_db", "description": "load", "category": "load_ops"}]})"));
    FuserPrompt prompt = build_fuser_prompt("my query", reg, config);
    CHECK(prompt.system_text ==
          "Q=my query CATS={'load_ops': [..]} TOOLS=- load_db: load EX=example text I=intent text");

    CHECK_THROWS_WITH_AS(load_prompt_template((dir / "missing.txt").string()),
                         doctest::Contains("missing.txt"), Error);
}

TEST_CASE("parse_fusion_reply pulls the first balanced JSON object out of prose") {
    ToolRegistry reg = bench::geo_registry();

    FusionPlan plan = parse_fusion_reply(
        R"(Here you go: {"filter_ops": ["filter_date","filter_loc"]})", reg);
    CHECK(plan.groups.at("filter_ops") ==
          std::vector<std::string>{"filter_date", "filter_loc"});

    CHECK(parse_fusion_reply("{}", reg).empty());
    CHECK(parse_fusion_reply("I cannot determine groupings", reg).empty());

    SUBCASE("non-array values are ignored") {
        CHECK(parse_fusion_reply(R"({"filter_ops": "filter_date"})", reg).empty());
    }
    SUBCASE("non-string entries are ignored") {
        FusionPlan mixed = parse_fusion_reply(
            R"({"filter_ops": ["filter_date", 7, {"x":1}, "filter_loc"]})", reg);
        CHECK(mixed.groups.at("filter_ops") ==
              std::vector<std::string>{"filter_date", "filter_loc"});
    }
    SUBCASE("code fences and braces inside strings are tolerated") {
        FusionPlan fenced = parse_fusion_reply(
            "Sure — groups below.\n```json\n{\"load_ops\": [\"load_db_{a}\", \"load_db_fair1m\"]}\n```",
            reg);
        CHECK(fenced.groups.at("load_ops") ==
              std::vector<std::string>{"load_db_{a}", "load_db_fair1m"});
    }
    SUBCASE("an unparseable balanced span falls through to the next candidate") {
        FusionPlan plan2 =
            parse_fusion_reply(R"({not json} then {"load_ops": ["load_db", "load_db_fmow"]})",
                               reg);
        CHECK(plan2.groups.at("load_ops") ==
              std::vector<std::string>{"load_db", "load_db_fmow"});
    }
}

TEST_CASE("propose_fusion issues one tools-disabled call and validates the reply") {
    ToolRegistry reg = bench::geo_registry();
    FuserConfig config;

    SUBCASE("a two-loads-two-filters grouping comes back as a two-group plan") {
        ScriptedSession session = reply_with(
            R"({"load_ops": ["load_db_xview1", "load_db_fair1m"], "filter_ops": ["filter_date", "filter_loc"]})");
        ChatResponse raw;
        FusionPlan plan = propose_fusion("q", reg, config, session, &raw);
        CHECK(plan.groups.size() == 2);
        CHECK(plan.groups.at("load_ops") ==
              std::vector<std::string>{"load_db_xview1", "load_db_fair1m"});
        CHECK(plan.groups.at("filter_ops") ==
              std::vector<std::string>{"filter_date", "filter_loc"});
        CHECK(raw.latency == 0.12);

        // The request really disabled tool selection and carried the full
        // definitions.
        REQUIRE(session.requests().size() == 1);
        const ChatRequest& request = session.requests()[0];
        CHECK(request.tool_choice == ToolChoice::None);
        CHECK(request.tools.size() == reg.size());
        CHECK(request.model == config.fuser_model);
        REQUIRE(request.messages.size() == 2);
        CHECK(request.messages[0].role == "system");
        CHECK(request.messages[1].role == "user");

        // Fixpoint: the returned plan validates to itself.
        CHECK(validate_plan(reg, plan) == plan);
    }
    SUBCASE("no JSON in the reply degrades to the empty plan") {
        ScriptedSession session = reply_with("I cannot determine groupings");
        CHECK(propose_fusion("q", reg, config, session).empty());
    }
    SUBCASE("hallucinated names collapse to the empty plan") {
        ScriptedSession session = reply_with(
            R"({"load_ops": ["load_db_xview1", "ghost"], "filter_ops": ["filter_date", "phantom"]})");
        CHECK(propose_fusion("q", reg, config, session).empty());
    }
    SUBCASE("groups are truncated to max_group_size keeping earliest entries") {
        config.max_group_size = 2;
        ScriptedSession session = reply_with(
            R"({"filter_ops": ["filter_loc", "filter_date", "filter_cloud"]})");
        FusionPlan plan = propose_fusion("q", reg, config, session);
        CHECK(plan.groups.at("filter_ops") ==
              std::vector<std::string>{"filter_loc", "filter_date"});
    }
    SUBCASE("transport failures propagate") {
        ThrowingSession session;
        CHECK_THROWS_AS(propose_fusion("q", reg, config, session), TransportError);
    }
}

TEST_CASE("oracle_fuser groups the gold sequence by category") {
    ToolRegistry reg = bench::geo_registry();

    FusionPlan plan = oracle_fuser(
        {"load_db_xview1", "load_db_fair1m", "filter_loc", "filter_date", "plot_map"}, reg, 4);
    CHECK(plan.groups.size() == 2);
    CHECK(plan.groups.at("load_ops") ==
          std::vector<std::string>{"load_db_xview1", "load_db_fair1m"});
    CHECK(plan.groups.at("filter_ops") == std::vector<std::string>{"filter_loc", "filter_date"});

    CHECK(oracle_fuser({"plot_map"}, reg, 4).empty());

    FusionPlan truncated = oracle_fuser({"filter_loc", "filter_date", "filter_cloud"}, reg, 2);
    CHECK(truncated.groups.at("filter_ops") ==
          std::vector<std::string>{"filter_loc", "filter_date"});

    // Pure function: repeated calls agree.
    CHECK(oracle_fuser({"filter_loc", "filter_date"}, reg, 4) ==
          oracle_fuser({"filter_loc", "filter_date"}, reg, 4));
}

TEST_CASE("fuser configs load from files with relative template paths") {
    FuserConfig config =
        FuserConfig::load_file(TOOLFUSE_SOURCE_DIR "/configs/fuser.default.json");
    CHECK(config.max_group_size == 4);
    CHECK(config.fuser_model == "gpt-4");
    CHECK(config.prompt_template == default_fuser_template());

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "toolfuse_fuser_cfg";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"max_group_size": 1})";
    }
    CHECK_THROWS_WITH_AS(FuserConfig::load_file((dir / "bad.json").string()),
                         doctest::Contains("max_group_size"), Error);
    CHECK_THROWS_AS(FuserConfig::load_file((dir / "missing.json").string()), Error);
}

TEST_CASE("every tool name appears exactly once across randomized registries") {
    std::mt19937_64 rng(55);
    for (int round = 0; round < 50; ++round) {
        ToolRegistry reg = testsupport::random_registry(rng);
        FuserPrompt prompt = build_fuser_prompt("list the things", reg, FuserConfig{});
        for (const auto& tool : reg.tools())
            CHECK(count_identifier(prompt.system_text, tool.name) == 1);
    }
}
