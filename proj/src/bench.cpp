#include "toolfuse/bench.hpp"

#include "toolfuse/schema_fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace toolfuse::bench {

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::lognormal(double median, double sigma_log) {
    return std::exp(std::log(median) + sigma_log * normal());
}

int Rng::uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * static_cast<double>(hi - lo + 1));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

json BenchTask::to_json() const {
    json doc = json::object();
    doc["id"] = id;
    doc["query"] = query;
    json gold_json = json::array();
    for (const auto& call : gold)
        gold_json.push_back({{"tool", call.tool}, {"arguments", call.arguments}});
    doc["gold"] = std::move(gold_json);
    doc["oracle"] = oracle.to_json();
    doc["seed"] = seed;
    return doc;
}

BenchTask BenchTask::from_json(const json& doc) {
    BenchTask task;
    task.id = doc.value("id", "");
    task.query = doc.value("query", "");
    if (doc.contains("gold"))
        for (const auto& g : doc["gold"])
            task.gold.push_back({g.value("tool", ""), g.value("arguments", json::object())});
    if (doc.contains("oracle")) task.oracle = OracleAnnotation::from_json(doc["oracle"]);
    task.seed = doc.value("seed", std::uint64_t{0});
    return task;
}

BenchTask BenchTask::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open bench task file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw Error("malformed bench task file '" + path + "': " + ex.what());
    }
    return from_json(doc);
}

std::vector<std::string> BenchTask::gold_tools() const {
    std::vector<std::string> names;
    names.reserve(gold.size());
    for (const auto& call : gold) names.push_back(call.tool);
    return names;
}

json WorkloadConfig::to_json() const {
    return json{{"n_tasks", n_tasks},
                {"seed", seed},
                {"mix", {{"multi", w_multi}, {"single", w_single}, {"qa", w_qa}}},
                {"registry", registry}};
}

WorkloadConfig WorkloadConfig::from_json(const json& doc) {
    WorkloadConfig config;
    config.n_tasks = doc.value("n_tasks", 200);
    config.seed = doc.value("seed", std::uint64_t{7});
    if (doc.contains("mix")) {
        config.w_multi = doc["mix"].value("multi", 0.4);
        config.w_single = doc["mix"].value("single", 0.4);
        config.w_qa = doc["mix"].value("qa", 0.2);
    }
    config.registry = doc.value("registry", "builtin:geo");
    if (config.n_tasks < 1) throw Error("workload n_tasks must be >= 1");
    const double total = config.w_multi + config.w_single + config.w_qa;
    if (std::abs(total - 1.0) > 1e-9)
        throw Error("workload mix weights must sum to 1 (got " + std::to_string(total) + ")");
    return config;
}

WorkloadConfig WorkloadConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open bench config '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw Error("malformed bench config '" + path + "': " + ex.what());
    }
    return from_json(doc);
}

namespace {

json make_param(const char* type, const char* description, bool required) {
    return json{{"type", type}, {"description", description}, {"required", required}};
}

json enum_param(const char* description, std::vector<std::string> values, bool required) {
    return json{{"type", "enum"},
                {"description", description},
                {"required", required},
                {"values", values}};
}

constexpr const char* kDatasets[] = {"xview1", "fair1m",  "fmow",   "dota",
                                     "spacenet", "xview3", "landsat"};

json load_effects(const std::string& dataset) {
    return json::array({{{"resource", "ds_" + dataset}, {"mode", "write"}}});
}

json filter_effects() {
    json effects = json::array();
    for (const char* ds : kDatasets)
        effects.push_back({{"resource", std::string("ds_") + ds}, {"mode", "read"}});
    effects.push_back({{"resource", "ds_custom"}, {"mode", "read"}});
    effects.push_back({{"resource", "dataset"}, {"mode", "read"}});
    effects.push_back({{"resource", "dataset"}, {"mode", "write"}});
    return effects;
}

json plot_effects() {
    return json::array({{{"resource", "dataset"}, {"mode", "read"}},
                        {{"resource", "map_view"}, {"mode", "write"}}});
}

json doc_effects() {
    return json::array({{{"resource", "doc_store"}, {"mode", "read"}}});
}

}  // namespace

ToolRegistry geo_registry() {
    json doc = json::object();
    doc["categories"] = {"load_ops", "filter_ops", "plot_ops", "doc_ops"};
    json tools = json::array();

    auto add = [&](const std::string& name, const std::string& description,
                   const std::string& category, json effects, json parameters) {
        tools.push_back({{"name", name},
                         {"description", description},
                         {"category", category},
                         {"effects", std::move(effects)},
                         {"parameters", std::move(parameters)}});
    };

    add("load_db", "Load a named dataset of satellite images into the workspace.", "load_ops",
        json::array({{{"resource", "ds_custom"}, {"mode", "write"}}}),
        json{{"dataset", enum_param("Dataset to load.",
                                    {"xview1", "fair1m", "fmow", "dota", "spacenet", "xview3",
                                     "landsat"},
                                    true)}});
    for (const char* ds : kDatasets) {
        add("load_db_" + std::string(ds),
            "Load the " + std::string(ds) + " satellite image collection.", "load_ops",
            load_effects(ds),
            json{{"max_items", make_param("integer", "Cap on the number of items loaded.", false)},
                 {"include_metadata",
                  make_param("boolean", "Attach per-image acquisition metadata.", false)}});
    }

    add("filter_date", "Keep images acquired inside a date range.", "filter_ops",
        filter_effects(),
        json{{"start_date", make_param("string", "Inclusive ISO start date.", true)},
             {"end_date", make_param("string", "Inclusive ISO end date.", true)}});
    add("filter_loc", "Keep images within a radius of a coordinate.", "filter_ops",
        filter_effects(),
        json{{"latitude", make_param("number", "Center latitude in degrees.", true)},
             {"longitude", make_param("number", "Center longitude in degrees.", true)},
             {"radius_km", make_param("number", "Search radius in kilometers.", false)}});
    add("filter_cloud", "Drop images above a cloud-cover percentage.", "filter_ops",
        filter_effects(),
        json{{"max_cloud_pct", make_param("number", "Maximum allowed cloud cover.", true)}});
    add("filter_class", "Keep images containing the requested object classes.", "filter_ops",
        filter_effects(),
        json{{"classes", make_param("array", "Object classes to keep.", true)}});
    add("filter_resolution", "Keep images at or below a ground sample distance.", "filter_ops",
        filter_effects(),
        json{{"max_gsd_m", make_param("number", "Maximum GSD in meters.", true)}});
    add("filter_sensor", "Keep images from one sensor family.", "filter_ops", filter_effects(),
        json{{"sensor", enum_param("Sensor family.", {"optical", "sar", "multispectral"}, true)}});
    add("filter_season", "Keep images acquired in a season.", "filter_ops", filter_effects(),
        json{{"season", enum_param("Season of acquisition.",
                                   {"winter", "spring", "summer", "autumn"}, true)}});
    add("filter_quality", "Drop images below a quality score.", "filter_ops", filter_effects(),
        json{{"min_score", make_param("number", "Minimum quality score in [0,1].", true)}});
    add("filter_bbox", "Keep images whose footprint area falls in a range.", "filter_ops",
        filter_effects(),
        json{{"min_area_sqkm", make_param("number", "Minimum footprint area.", false)},
             {"max_area_sqkm", make_param("number", "Maximum footprint area.", false)}});
    add("filter_time_of_day", "Keep day or night acquisitions.", "filter_ops", filter_effects(),
        json{{"period", enum_param("Acquisition period.", {"day", "night"}, true)}});
    add("filter_country", "Keep images over a country.", "filter_ops", filter_effects(),
        json{{"country", make_param("string", "Country name.", true)}});
    add("filter_angle", "Drop images past an off-nadir angle.", "filter_ops", filter_effects(),
        json{{"max_off_nadir_deg", make_param("number", "Maximum off-nadir angle.", true)}});

    add("plot_map", "Plot the current selection on the interactive map.", "plot_ops",
        plot_effects(),
        json{{"style", enum_param("Marker rendering style.", {"markers", "heatmap", "clusters"},
                                  false)}});
    add("plot_timeline", "Plot acquisition counts over time.", "plot_ops", plot_effects(),
        json{{"bucket", enum_param("Time bucket.", {"day", "week", "month"}, false)}});
    add("plot_histogram", "Plot a histogram of a metadata field.", "plot_ops", plot_effects(),
        json{{"field", make_param("string", "Metadata field to bin.", true)}});
    add("export_png", "Export the current map view as a PNG.", "plot_ops",
        json::array({{{"resource", "map_view"}, {"mode", "read"}},
                     {{"resource", "export_file"}, {"mode", "write"}}}),
        json{{"width", make_param("integer", "Image width in pixels.", false)},
             {"height", make_param("integer", "Image height in pixels.", false)}});
    add("clear_map", "Remove all layers from the map view.", "plot_ops",
        json::array({{{"resource", "map_view"}, {"mode", "write"}}}), json::object());

    add("search_docs", "Search the platform documentation corpus.", "doc_ops", doc_effects(),
        json{{"query", make_param("string", "Search query.", true)},
             {"top_k", make_param("integer", "Number of hits to return.", false)}});
    add("get_doc", "Fetch one documentation page by id.", "doc_ops", doc_effects(),
        json{{"doc_id", make_param("string", "Document identifier.", true)}});
    add("summarize_doc", "Summarize one documentation page.", "doc_ops", doc_effects(),
        json{{"doc_id", make_param("string", "Document identifier.", true)},
             {"max_words", make_param("integer", "Summary length cap.", false)}});
    add("list_sources", "List the documentation sources available.", "doc_ops", doc_effects(),
        json::object());
    add("cite_sources", "Produce citations for a set of documents.", "doc_ops", doc_effects(),
        json{{"doc_ids", make_param("array", "Documents to cite.", true)}});

    doc["tools"] = std::move(tools);
    return ToolRegistry::load(doc);
}

ToolRegistry load_workload_registry(const WorkloadConfig& config) {
    if (config.registry == "builtin:geo") return geo_registry();
    return ToolRegistry::load_file(config.registry);
}

namespace {

struct FilterChoice {
    std::string tool;
    json arguments;
    std::string phrase;
};

FilterChoice draw_filter(const std::string& tool, Rng& rng) {
    static const std::vector<std::pair<std::string, std::pair<double, double>>> kPlaces = {
        {"NYC", {40.7, -74.0}},   {"Newark", {40.73, -74.17}}, {"Paris", {48.85, 2.35}},
        {"Tokyo", {35.68, 139.7}}, {"Cairo", {30.04, 31.24}},   {"Sydney", {-33.87, 151.2}}};
    static const std::vector<std::pair<std::string, std::pair<std::string, std::string>>> kMonths =
        {{"October 2023", {"2023-10-01", "2023-10-31"}},
         {"June 2012", {"2012-06-01", "2012-06-30"}},
         {"March 2019", {"2019-03-01", "2019-03-31"}},
         {"January 2021", {"2021-01-01", "2021-01-31"}}};
    static const std::vector<std::vector<std::string>> kClassSets = {
        {"airplane"}, {"ship", "harbor"}, {"storage_tank"}, {"vehicle", "bridge"}};
    static const std::vector<std::string> kCountries = {"Spain", "Japan", "Brazil", "Kenya"};

    FilterChoice out;
    out.tool = tool;
    if (tool == "filter_date") {
        const auto& month = rng.pick(kMonths);
        out.arguments = {{"start_date", month.second.first}, {"end_date", month.second.second}};
        out.phrase = "from " + month.first;
    } else if (tool == "filter_loc") {
        const auto& place = rng.pick(kPlaces);
        out.arguments = {{"latitude", place.second.first},
                         {"longitude", place.second.second},
                         {"radius_km", 25.0 * (1 + rng.uniform_int(0, 3))}};
        out.phrase = "at " + place.first;
    } else if (tool == "filter_cloud") {
        const double pct = 10.0 * (1 + rng.uniform_int(0, 2));
        out.arguments = {{"max_cloud_pct", pct}};
        out.phrase = "with cloud cover under " + std::to_string(static_cast<int>(pct)) + "%";
    } else if (tool == "filter_class") {
        const auto& classes = rng.pick(kClassSets);
        out.arguments = {{"classes", classes}};
        out.phrase = "showing " + classes.front();
    } else if (tool == "filter_resolution") {
        static const std::vector<double> kGsd = {0.3, 0.5, 1.0};
        out.arguments = {{"max_gsd_m", rng.pick(kGsd)}};
        out.phrase = "at sub-meter resolution";
    } else if (tool == "filter_sensor") {
        static const std::vector<std::string> kSensors = {"optical", "sar", "multispectral"};
        const auto& sensor = rng.pick(kSensors);
        out.arguments = {{"sensor", sensor}};
        out.phrase = "taken by " + sensor + " sensors";
    } else if (tool == "filter_season") {
        static const std::vector<std::string> kSeasons = {"winter", "spring", "summer", "autumn"};
        const auto& season = rng.pick(kSeasons);
        out.arguments = {{"season", season}};
        out.phrase = "acquired in " + season;
    } else if (tool == "filter_quality") {
        out.arguments = {{"min_score", 0.6 + 0.1 * rng.uniform_int(0, 3)}};
        out.phrase = "of good quality";
    } else if (tool == "filter_bbox") {
        out.arguments = {{"min_area_sqkm", 1.0}, {"max_area_sqkm", 100.0 * (1 + rng.uniform_int(0, 4))}};
        out.phrase = "with mid-sized footprints";
    } else if (tool == "filter_time_of_day") {
        static const std::vector<std::string> kPeriods = {"day", "night"};
        const auto& period = rng.pick(kPeriods);
        out.arguments = {{"period", period}};
        out.phrase = "captured at " + period + "time";
    } else if (tool == "filter_country") {
        const auto& country = rng.pick(kCountries);
        out.arguments = {{"country", country}};
        out.phrase = "over " + country;
    } else {  // filter_angle
        out.arguments = {{"max_off_nadir_deg", 15.0 * (1 + rng.uniform_int(0, 2))}};
        out.phrase = "near nadir";
    }
    return out;
}

const std::vector<std::string>& filter_pool() {
    static const std::vector<std::string> pool = {
        "filter_date",     "filter_loc",        "filter_cloud",   "filter_class",
        "filter_resolution", "filter_sensor",   "filter_season",  "filter_quality",
        "filter_bbox",     "filter_time_of_day", "filter_country", "filter_angle"};
    return pool;
}

const std::vector<std::string>& qa_pool() {
    static const std::vector<std::string> pool = {
        "What does GSD mean for satellite imagery?",
        "Which sensor families does the platform index?",
        "How many datasets are currently registered?",
        "What is the difference between optical and SAR imagery?"};
    return pool;
}

}  // namespace

std::vector<BenchTask> generate_workload(const WorkloadConfig& config,
                                         const ToolRegistry& registry) {
    std::vector<BenchTask> tasks;
    tasks.reserve(static_cast<std::size_t>(config.n_tasks));

    const std::uint64_t stream = splitmix64(config.seed);
    for (int i = 0; i < config.n_tasks; ++i) {
        BenchTask task;
        task.seed = splitmix64(stream + static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL);
        Rng rng(task.seed);
        {
            std::ostringstream id;
            id << "task-" << std::setw(4) << std::setfill('0') << i;
            task.id = id.str();
        }

        const double roll = rng.uniform();
        const bool multi = roll < config.w_multi;
        const bool qa = roll >= config.w_multi + config.w_single;

        if (qa) {
            task.query = rng.pick(qa_pool());
        } else {
            const int n_loads = multi ? 2 : 1;
            const int n_filters = multi ? rng.uniform_int(2, 3) : rng.uniform_int(1, 3);

            std::vector<std::string> datasets;
            {
                std::vector<std::string> pool(std::begin(kDatasets), std::end(kDatasets));
                for (int k = 0; k < n_loads; ++k) {
                    const int at = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
                    datasets.push_back(pool[static_cast<std::size_t>(at)]);
                    pool.erase(pool.begin() + at);
                }
            }
            for (const auto& ds : datasets)
                task.gold.push_back(
                    {"load_db_" + ds, json{{"max_items", 500}, {"include_metadata", true}}});

            std::vector<std::string> chosen;
            {
                std::vector<std::string> pool = filter_pool();
                for (int k = 0; k < n_filters; ++k) {
                    const int at = rng.uniform_int(0, static_cast<int>(pool.size()) - 1);
                    chosen.push_back(pool[static_cast<std::size_t>(at)]);
                    pool.erase(pool.begin() + at);
                }
            }
            std::vector<std::string> phrases;
            for (const auto& tool : chosen) {
                FilterChoice choice = draw_filter(tool, rng);
                task.gold.push_back({choice.tool, choice.arguments});
                phrases.push_back(choice.phrase);
            }

            static const std::vector<std::string> kStyles = {"markers", "heatmap", "clusters"};
            task.gold.push_back({"plot_map", json{{"style", rng.pick(kStyles)}}});

            std::ostringstream query;
            query << "Show me satellite images";
            for (const auto& phrase : phrases) query << " " << phrase;
            query << " on ";
            for (std::size_t d = 0; d < datasets.size(); ++d)
                query << (d ? " and " : "") << datasets[d];
            query << " images and plot them on the map";
            task.query = query.str();
        }

        task.oracle = OracleAnnotation::from_plan(
            oracle_fuser(task.gold_tools(), registry, 4));
        tasks.push_back(std::move(task));
    }
    return tasks;
}

const char* to_string(Policy policy) {
    switch (policy) {
        case Policy::Sequential: return "sequential";
        case Policy::ProviderParallel: return "provider_parallel";
        case Policy::CompilerAware: return "compiler";
    }
    return "sequential";
}

Policy policy_from_string(const std::string& name) {
    if (name == "sequential") return Policy::Sequential;
    if (name == "provider_parallel") return Policy::ProviderParallel;
    if (name == "compiler") return Policy::CompilerAware;
    throw Error("unknown policy '" + name + "' (sequential|provider_parallel|compiler)");
}

json StateStore::to_json() const {
    json out = json::object();
    for (const auto& [resource, entries] : log) out[resource] = entries;
    return out;
}

namespace {

double sim_tool_duration(std::uint64_t task_seed, const std::string& tool,
                         const ScriptParams& params) {
    if (params.timed) return params.timed_tool_duration;
    Rng rng(splitmix64(task_seed ^ std::hash<std::string>{}(tool)));
    return rng.lognormal(params.tool_duration_median, params.tool_sigma_log);
}

}  // namespace

void apply_tool_effects(const ToolSpec& spec, StateStore& state, const json& arguments) {
    std::size_t read_total = 0;
    for (const auto& effect : spec.effects) {
        if (effect.mode != EffectMode::Read) continue;
        auto it = state.log.find(effect.resource);
        if (it != state.log.end()) read_total += it->second.size();
    }
    const std::string value =
        spec.name + "(" + canonical_dump(arguments) + ")@" + std::to_string(read_total);
    for (const auto& effect : spec.effects)
        if (effect.mode == EffectMode::Write) state.log[effect.resource].push_back(value);
}

RunnerTable make_sim_runners(const ToolRegistry& registry, std::shared_ptr<StateStore> state,
                             std::uint64_t task_seed, const ScriptParams& params) {
    RunnerTable table;
    for (const ToolSpec& tool : registry.tools()) {
        const ToolSpec* spec = &tool;
        table.add(tool.name, [spec, state, task_seed, params](const json& arguments) {
            const double duration = sim_tool_duration(task_seed, spec->name, params);
            if (params.timed)
                std::this_thread::sleep_for(std::chrono::duration<double>(duration));
            {
                std::lock_guard<std::mutex> lock(state->m);
                apply_tool_effects(*spec, *state, arguments);
            }
            RunnerResult result;
            result.value = json{{"status", "ok"}, {"tool", spec->name}}.dump();
            if (!params.timed) result.synthetic_duration = duration;
            return result;
        });
    }
    return table;
}

std::shared_ptr<StateStore> run_gold_reference(const ToolRegistry& registry,
                                               const std::vector<GoldCall>& gold) {
    auto state = std::make_shared<StateStore>();
    for (const auto& call : gold)
        apply_tool_effects(registry.tool(call.tool), *state, call.arguments);
    return state;
}

namespace {

struct LatencyModel {
    Rng rng;
    const ScriptParams& params;

    explicit LatencyModel(std::uint64_t seed, const ScriptParams& p) : rng(seed), params(p) {}

    double fuser() {
        return params.timed ? params.timed_api_latency
                            : rng.lognormal(params.fuser_latency_median, params.api_sigma_log);
    }
    double agent() {
        return params.timed ? params.timed_api_latency
                            : rng.lognormal(params.agent_latency_median, params.api_sigma_log);
    }
    double final_answer() {
        return params.timed ? params.timed_api_latency
                            : rng.lognormal(params.final_latency_median, params.api_sigma_log);
    }
};

WireToolCall make_call(int n, const std::string& name, const json& arguments) {
    return {"call_" + std::to_string(n), name, arguments.dump()};
}

ChatMessage tool_call_reply(std::vector<WireToolCall> calls) {
    ChatMessage message;
    message.role = "assistant";
    message.tool_calls = std::move(calls);
    return message;
}

std::string final_text(const BenchTask& task) {
    if (task.gold.empty()) return "Answered from general knowledge: " + task.query;
    return "Completed after " + std::to_string(task.gold.size()) + " tool operations.";
}

}  // namespace

ScriptedTask script_agent(const BenchTask& task, Policy policy, const ToolRegistry& registry,
                          const ScriptParams& params, const FusedToolset* view_override) {
    ScriptedTask out;
    LatencyModel latency(splitmix64(task.seed ^ (0xab5e11ULL + static_cast<int>(policy))), params);
    std::vector<ScriptedSession::Turn> turns;
    int call_id = 0;

    switch (policy) {
        case Policy::Sequential: {
            for (const auto& gold : task.gold)
                turns.push_back({tool_call_reply({make_call(call_id++, gold.tool, gold.arguments)}),
                                 latency.agent(), std::nullopt});
            break;
        }
        case Policy::ProviderParallel: {
            std::size_t i = 0;
            while (i < task.gold.size()) {
                const std::string category = registry.category_of(task.gold[i].tool);
                std::size_t j = i + 1;
                while (j < task.gold.size() &&
                       registry.category_of(task.gold[j].tool) == category)
                    ++j;
                bool group = false;
                if (j - i >= 2) {
                    if (category == "load_ops") group = true;
                    else if (category == "filter_ops") group = latency.rng.uniform() < params.p_filter_group;
                }
                if (group) {
                    std::vector<WireToolCall> calls;
                    for (std::size_t k = i; k < j; ++k)
                        calls.push_back(make_call(call_id++, task.gold[k].tool,
                                                  task.gold[k].arguments));
                    turns.push_back({tool_call_reply(std::move(calls)), latency.agent(),
                                     std::nullopt});
                } else {
                    for (std::size_t k = i; k < j; ++k)
                        turns.push_back({tool_call_reply({make_call(call_id++, task.gold[k].tool,
                                                                    task.gold[k].arguments)}),
                                         latency.agent(), std::nullopt});
                }
                i = j;
            }
            break;
        }
        case Policy::CompilerAware: {
            FusionPlan plan = oracle_fuser(task.gold_tools(), registry, params.max_group_size);
            plan = validate_plan(registry, plan);
            FusedToolset computed;
            const FusedToolset* view = view_override;
            if (!view) {
                computed = fuse_toolset(registry, plan);
                view = &computed;
            }
            out.plan = plan;

            std::map<std::string, std::string> covered;  // constituent -> fused name
            for (const auto& [fname, fused] : view->index.fused)
                for (const auto& constituent : fused.constituents) covered[constituent] = fname;

            std::set<std::string> emitted;
            std::vector<WireToolCall> pending_fused;
            auto flush = [&] {
                if (pending_fused.empty()) return;
                turns.push_back({tool_call_reply(std::move(pending_fused)), latency.agent(),
                                 std::nullopt});
                pending_fused.clear();
            };

            for (const auto& gold : task.gold) {
                auto cov = covered.find(gold.tool);
                if (cov != covered.end()) {
                    if (emitted.count(cov->second)) continue;
                    emitted.insert(cov->second);
                    const FusedTool& fused = view->index.fused.at(cov->second);
                    std::vector<std::pair<std::string, json>> constituent_calls;
                    for (const auto& constituent : fused.constituents) {
                        auto it = std::find_if(task.gold.begin(), task.gold.end(),
                                               [&](const GoldCall& g) {
                                                   return g.tool == constituent;
                                               });
                        if (it == task.gold.end())
                            throw ScriptError("stale plan: no gold call for constituent '" +
                                              constituent + "'");
                        constituent_calls.push_back({constituent, it->arguments});
                    }
                    pending_fused.push_back(
                        make_call(call_id++, cov->second, lift_arguments(fused, constituent_calls)));
                } else {
                    const bool in_view =
                        std::any_of(view->tools.begin(), view->tools.end(),
                                    [&](const ToolSpec& t) { return t.name == gold.tool; });
                    if (!in_view)
                        throw ScriptError("stale plan: gold tool '" + gold.tool +
                                          "' absent from the toolset view");
                    flush();
                    turns.push_back(
                        {tool_call_reply({make_call(call_id++, gold.tool, gold.arguments)}),
                         latency.agent(), std::nullopt});
                }
            }
            flush();

            out.fuser = std::make_unique<ScriptedSession>(
                std::vector<ScriptedSession::Turn>{
                    {ChatMessage::assistant(plan.to_json().dump()), latency.fuser(),
                     std::nullopt}},
                params.timed);
            break;
        }
    }

    turns.push_back({ChatMessage::assistant(final_text(task)), latency.final_answer(),
                     std::nullopt});
    out.agent = std::make_unique<ScriptedSession>(std::move(turns), params.timed);
    return out;
}

TaskRun run_policy_task(const BenchTask& task, Policy policy, const ToolRegistry& registry,
                        const ScriptParams& params, bool concurrent_execution) {
    TaskRun run;
    ScriptedTask script = script_agent(task, policy, registry, params);
    run.state = std::make_shared<StateStore>();
    RunnerTable runners = make_sim_runners(registry, run.state, task.seed, params);

    StrategyConfig strategy;
    strategy.agent_model = "scripted-sim";
    strategy.fuser_enabled = policy == Policy::CompilerAware;
    strategy.provider_parallel_enabled = policy != Policy::Sequential;
    strategy.concurrent_execution = concurrent_execution;

    FuserConfig fuser_config;
    fuser_config.fuser_model = "scripted-sim";
    fuser_config.max_group_size = params.max_group_size;

    Sessions sessions;
    sessions.agent = script.agent.get();
    sessions.fuser = script.fuser.get();

    run.outcome = run_task(task.query, registry, strategy, fuser_config, sessions, runners);
    run.trace = run.outcome.trace;
    run.trace.task_id = task.id;
    run.trace.gold = task.gold;
    return run;
}

namespace {

Stat stat_over(const std::vector<double>& values) {
    Stat out;
    if (values.empty()) return out;
    // Identical samples have exactly their value as mean and no deviation;
    // the general formula would smear an ulp of rounding across them.
    if (std::all_of(values.begin(), values.end(),
                    [&](double v) { return v == values.front(); })) {
        out.mean = values.front();
        return out;
    }
    double sum = 0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double sq = 0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.dev = std::sqrt(sq / static_cast<double>(values.size()));
    return out;
}

}  // namespace

json BenchResult::to_json() const {
    json doc = json::object();
    doc["workload"] = config.to_json();
    doc["basis"] = basis;
    json totals = json::object();
    for (const auto& [category, count] : oracle_totals) totals[category] = count;
    doc["oracle_totals"] = std::move(totals);
    json policies_json = json::array();
    for (const auto& policy : policies) {
        json p = json::object();
        p["policy"] = policy.label;
        p["concurrent_execution"] = policy.concurrent_execution;
        json metrics = json::object();
        for (const auto& [name, stat] : policy.metrics)
            metrics[name] = {{"mean", stat.mean}, {"dev", stat.dev}};
        p["metrics"] = std::move(metrics);
        json histogram = json::object();
        for (const auto& [bin, percent] : policy.histogram)
            histogram[std::to_string(bin)] = percent;
        p["histogram"] = std::move(histogram);
        policies_json.push_back(std::move(p));
    }
    doc["policies"] = std::move(policies_json);
    return doc;
}

BenchResult run_benchmark(const WorkloadConfig& config, const BenchOptions& options) {
    const ToolRegistry registry = load_workload_registry(config);
    const std::vector<BenchTask> tasks = generate_workload(config, registry);

    std::map<std::string, OracleAnnotation> annotations;
    std::map<std::string, int> oracle_totals;
    for (const auto& task : tasks) {
        annotations[task.id] = task.oracle;
        for (const auto& [category, groups] : task.oracle.groups)
            oracle_totals[category] += task.oracle.count(category);
    }

    BenchResult result;
    result.config = config;
    result.basis = to_string(options.params.timed ? TimeBasis::Wall : TimeBasis::Path);
    result.oracle_totals = oracle_totals;

    const TimeBasis basis = options.params.timed ? TimeBasis::Wall : TimeBasis::Path;

    // In timed runs the compiler row splits into its two efficiency modes,
    // isolating round-trip reduction from simultaneous execution.
    struct Variant {
        Policy policy;
        bool concurrent;
        std::string label;
    };
    std::vector<Variant> variants;
    for (Policy policy : options.policies) {
        if (policy == Policy::CompilerAware && options.params.timed &&
            options.concurrent_execution) {
            variants.push_back({policy, false, "compiler_fused_only"});
            variants.push_back({policy, true, "compiler"});
        } else {
            variants.push_back(
                {policy, options.concurrent_execution, bench::to_string(policy)});
        }
    }

    std::vector<RunReport> baseline_by_repeat;  // first variant listed

    for (std::size_t v = 0; v < variants.size(); ++v) {
        const Variant& variant = variants[v];
        PolicyOutcome outcome;
        outcome.policy = variant.policy;
        outcome.label = variant.label;
        outcome.concurrent_execution = variant.concurrent;

        std::map<std::string, std::vector<double>> metric_values;

        for (int repeat = 0; repeat < options.repeats; ++repeat) {
            std::vector<TaskTrace> traces(tasks.size());
            const int jobs = std::max(1, options.jobs);
            if (jobs == 1) {
                for (std::size_t t = 0; t < tasks.size(); ++t)
                    traces[t] = run_policy_task(tasks[t], variant.policy, registry,
                                                options.params, variant.concurrent)
                                    .trace;
            } else {
                std::atomic<std::size_t> next{0};
                std::vector<std::thread> workers;
                for (int w = 0; w < jobs; ++w)
                    workers.emplace_back([&] {
                        for (;;) {
                            const std::size_t t = next.fetch_add(1);
                            if (t >= tasks.size()) return;
                            traces[t] = run_policy_task(tasks[t], variant.policy, registry,
                                                        options.params, variant.concurrent)
                                            .trace;
                        }
                    });
                for (auto& worker : workers) worker.join();
            }

            RunReport report =
                RunReport::build(variant.label, "scripted-sim", std::move(traces), basis);

            metric_values["success_rate"].push_back(report.aggregates.success_rate);
            if (report.aggregates.correctness_rate)
                metric_values["correctness_rate"].push_back(*report.aggregates.correctness_rate);
            metric_values["avg_tokens_per_task"].push_back(report.aggregates.avg_tokens_per_task);
            metric_values["avg_time_per_task"].push_back(report.aggregates.avg_time_per_task);
            metric_values["avg_tools_per_call"].push_back(avg_tools_per_call(report.traces));
            if (auto lut_error = lut_holdout_error(report.traces, 0.2, config.seed))
                metric_values["lut_modeling_error"].push_back(*lut_error);
            for (const auto& [category, total] : oracle_totals)
                if (total > 0)
                    metric_values["parallelization_" + category].push_back(
                        parallelization_rate(report.traces, annotations, category));

            if (v == 0) {
                baseline_by_repeat.push_back(report);
            } else if (repeat < static_cast<int>(baseline_by_repeat.size())) {
                const double reduction = token_reduction(baseline_by_repeat[repeat], report);
                const double speed = speedup(baseline_by_repeat[repeat], report);
                metric_values["token_reduction"].push_back(reduction);
                metric_values["speedup"].push_back(speed);
                if (repeat == 0) {
                    report.aggregates.token_reduction = reduction;
                    report.aggregates.speedup = speed;
                }
            }

            if (repeat == 0) {
                outcome.histogram = tools_per_call_histogram(report.traces);
                outcome.report = std::move(report);
            }
        }

        for (const auto& [name, values] : metric_values)
            outcome.metrics[name] = stat_over(values);
        result.policies.push_back(std::move(outcome));
    }
    return result;
}

}  // namespace toolfuse::bench
