#include "toolfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <fstream>
#include <set>
#include <sstream>

namespace toolfuse {

int OracleAnnotation::count(const std::string& category) const {
    auto it = groups.find(category);
    if (it == groups.end()) return 0;
    int total = 0;
    for (const auto& group : it->second) total += static_cast<int>(group.size());
    return total;
}

json OracleAnnotation::to_json() const {
    json out = json::object();
    for (const auto& [category, group_list] : groups) out[category] = group_list;
    return out;
}

OracleAnnotation OracleAnnotation::from_json(const json& doc) {
    OracleAnnotation out;
    for (const auto& [category, group_list] : doc.items())
        out.groups[category] = group_list.get<std::vector<std::vector<std::string>>>();
    return out;
}

OracleAnnotation OracleAnnotation::from_plan(const FusionPlan& plan) {
    OracleAnnotation out;
    for (const auto& [category, names] : plan.groups) out.groups[category].push_back(names);
    return out;
}

const char* to_string(TimeBasis basis) { return basis == TimeBasis::Wall ? "wall" : "path"; }

TimeBasis time_basis_from_string(const std::string& name) {
    if (name == "wall") return TimeBasis::Wall;
    if (name == "path") return TimeBasis::Path;
    throw MetricsError("unknown time basis '" + name + "'");
}

json Aggregates::to_json() const {
    json out = json::object();
    out["success_rate"] = success_rate;
    if (correctness_rate) out["correctness_rate"] = *correctness_rate;
    out["avg_tokens_per_task"] = avg_tokens_per_task;
    out["avg_time_per_task"] = avg_time_per_task;
    if (token_reduction) out["token_reduction"] = *token_reduction;
    if (speedup) out["speedup"] = *speedup;
    return out;
}

Aggregates Aggregates::from_json(const json& doc) {
    Aggregates out;
    out.success_rate = doc.value("success_rate", 0.0);
    if (doc.contains("correctness_rate")) out.correctness_rate = doc["correctness_rate"].get<double>();
    out.avg_tokens_per_task = doc.value("avg_tokens_per_task", 0.0);
    out.avg_time_per_task = doc.value("avg_time_per_task", 0.0);
    if (doc.contains("token_reduction")) out.token_reduction = doc["token_reduction"].get<double>();
    if (doc.contains("speedup")) out.speedup = doc["speedup"].get<double>();
    return out;
}

double success_rate(const std::vector<TaskTrace>& traces) {
    if (traces.empty()) return 0;
    std::size_t ok = 0;
    for (const auto& trace : traces)
        if (trace.status == "success") ++ok;
    return 100.0 * static_cast<double>(ok) / static_cast<double>(traces.size());
}

std::optional<double> correctness_rate(const std::vector<TaskTrace>& traces) {
    bool any_gold = false;
    std::size_t total = 0;
    std::size_t correct = 0;
    for (const auto& trace : traces) {
        if (!trace.gold) continue;
        any_gold = true;
        // Multiset of gold (tool, canonical arguments); each executed
        // invocation may consume one matching entry.
        std::multiset<std::pair<std::string, std::string>> want;
        for (const auto& gold : *trace.gold)
            want.insert({gold.tool, canonical_dump(gold.arguments)});
        for (const auto& sub : trace.sub_calls) {
            if (!sub.executed) continue;
            ++total;
            auto it = want.find({sub.tool, canonical_dump(sub.arguments)});
            if (it != want.end()) {
                ++correct;
                want.erase(it);
            }
        }
    }
    if (!any_gold) return std::nullopt;
    if (total == 0) return 100.0;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double filtered_mean(const std::vector<double>& samples) {
    if (samples.empty()) throw MetricsError("filtered_mean of empty sample set");
    double sum = 0;
    for (double x : samples) sum += x;
    const double mu = sum / static_cast<double>(samples.size());
    double sq = 0;
    for (double x : samples) sq += (x - mu) * (x - mu);
    const double sigma = std::sqrt(sq / static_cast<double>(samples.size()));
    if (sigma == 0) return mu;
    const double lo = mu - 2 * sigma;
    const double hi = mu + 2 * sigma;
    double kept_sum = 0;
    std::size_t kept = 0;
    for (double x : samples) {
        if (x < lo || x > hi) continue;
        kept_sum += x;
        ++kept;
    }
    return kept == 0 ? mu : kept_sum / static_cast<double>(kept);
}

double task_time(const TaskTrace& trace, TimeBasis basis) {
    return basis == TimeBasis::Wall ? trace.wall_time : trace.path_time();
}

double avg_tokens_per_task(const std::vector<TaskTrace>& traces) {
    if (traces.empty()) return 0;
    double sum = 0;
    for (const auto& trace : traces) sum += static_cast<double>(trace.total_tokens());
    return sum / static_cast<double>(traces.size());
}

double avg_time_per_task(const std::vector<TaskTrace>& traces, TimeBasis basis) {
    if (traces.empty()) return 0;
    std::vector<double> times;
    times.reserve(traces.size());
    for (const auto& trace : traces) times.push_back(task_time(trace, basis));
    return filtered_mean(times);
}

RunReport RunReport::build(std::string method, std::string model, std::vector<TaskTrace> traces,
                           TimeBasis basis) {
    RunReport report;
    report.method = std::move(method);
    report.model = std::move(model);
    report.basis = basis;
    report.traces = std::move(traces);
    report.aggregates.success_rate = success_rate(report.traces);
    report.aggregates.correctness_rate = correctness_rate(report.traces);
    report.aggregates.avg_tokens_per_task = avg_tokens_per_task(report.traces);
    report.aggregates.avg_time_per_task = avg_time_per_task(report.traces, basis);
    return report;
}

json RunReport::to_json() const {
    json doc = json::object();
    doc["method"] = method;
    doc["model"] = model;
    doc["basis"] = to_string(basis);
    doc["aggregates"] = aggregates.to_json();
    json traces_json = json::array();
    for (const auto& trace : traces) traces_json.push_back(trace.to_json());
    doc["traces"] = std::move(traces_json);
    return doc;
}

RunReport RunReport::from_json(const json& doc) {
    std::vector<TaskTrace> traces;
    if (doc.contains("traces"))
        for (const auto& t : doc["traces"]) traces.push_back(TaskTrace::from_json(t));
    RunReport report = build(doc.value("method", ""), doc.value("model", ""), std::move(traces),
                             time_basis_from_string(doc.value("basis", "path")));
    Aggregates stored = Aggregates::from_json(doc.value("aggregates", json::object()));
    // The comparison columns are not recomputable without the baseline run.
    stored.token_reduction.reset();
    stored.speedup.reset();
    Aggregates recomputed = report.aggregates;
    recomputed.token_reduction.reset();
    recomputed.speedup.reset();
    if (!(stored == recomputed))
        throw MetricsError("stored aggregates disagree with recomputation from traces");
    report.aggregates = Aggregates::from_json(doc.value("aggregates", json::object()));
    return report;
}

void RunReport::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MetricsError("cannot write report file '" + path + "'");
    out << to_json().dump(2) << "\n";
}

RunReport RunReport::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MetricsError("cannot open report file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw MetricsError("malformed report file '" + path + "': " + ex.what());
    }
    return from_json(doc);
}

void save_traces(const std::string& path, const std::vector<TaskTrace>& traces) {
    std::ofstream out(path);
    if (!out) throw MetricsError("cannot write trace file '" + path + "'");
    for (const auto& trace : traces) out << trace.to_json().dump() << "\n";
}

std::vector<TaskTrace> load_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MetricsError("cannot open trace file '" + path + "'");
    std::vector<TaskTrace> traces;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            traces.push_back(TaskTrace::from_json(json::parse(line)));
        } catch (const json::exception& ex) {
            throw MetricsError("malformed trace record at " + path + ":" +
                               std::to_string(line_no) + ": " + ex.what());
        }
    }
    return traces;
}

namespace {

void require_same_task_set(const RunReport& baseline, const RunReport& candidate) {
    auto ids = [](const RunReport& report) {
        std::multiset<std::string> out;
        for (const auto& trace : report.traces) out.insert(trace.task_id);
        return out;
    };
    if (ids(baseline) != ids(candidate))
        throw MetricsError("task sets differ between baseline '" + baseline.method +
                           "' and candidate '" + candidate.method + "'");
}

}  // namespace

double token_reduction(const RunReport& baseline, const RunReport& candidate) {
    require_same_task_set(baseline, candidate);
    const double denom = candidate.aggregates.avg_tokens_per_task;
    if (denom == 0) throw MetricsError("candidate average tokens per task is zero");
    return baseline.aggregates.avg_tokens_per_task / denom;
}

double speedup(const RunReport& baseline, const RunReport& candidate) {
    require_same_task_set(baseline, candidate);
    const double denom = candidate.aggregates.avg_time_per_task;
    if (denom == 0) throw MetricsError("candidate average time per task is zero");
    return baseline.aggregates.avg_time_per_task / denom;
}

double parallelization_rate(const std::vector<TaskTrace>& traces,
                            const std::map<std::string, OracleAnnotation>& annotations,
                            const std::string& category) {
    std::size_t numerator = 0;
    std::size_t denominator = 0;
    for (const auto& trace : traces) {
        auto ann = annotations.find(trace.task_id);
        if (ann == annotations.end())
            throw MetricsError("no oracle annotation for task '" + trace.task_id + "'");
        auto cat = ann->second.groups.find(category);
        if (cat == ann->second.groups.end()) continue;

        // First execution of each tool, by API call.
        std::map<std::string, int> first_call;
        for (const auto& sub : trace.sub_calls)
            if (sub.executed && !first_call.count(sub.tool)) first_call[sub.tool] = sub.api_call;

        for (const auto& group : cat->second) {
            denominator += group.size();
            for (const auto& tool : group) {
                auto self = first_call.find(tool);
                if (self == first_call.end()) continue;
                const bool grouped = std::any_of(
                    group.begin(), group.end(), [&](const std::string& other) {
                        if (other == tool) return false;
                        auto it = first_call.find(other);
                        return it != first_call.end() && it->second == self->second;
                    });
                if (grouped) ++numerator;
            }
        }
    }
    if (denominator == 0)
        throw MetricsError("category '" + category + "' absent from oracle annotations");
    return 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator);
}

double avg_tools_per_call(const std::vector<TaskTrace>& traces) {
    std::size_t calls = 0;
    double tools = 0;
    for (const auto& trace : traces) {
        calls += trace.api_calls.size();
        for (const auto& call : trace.api_calls) tools += call.constituent_tools;
    }
    return calls == 0 ? 0 : tools / static_cast<double>(calls);
}

std::map<int, double> tools_per_call_histogram(const std::vector<TaskTrace>& traces) {
    std::map<int, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& trace : traces)
        for (const auto& call : trace.api_calls) {
            ++counts[call.constituent_tools];
            ++total;
        }
    std::map<int, double> out;
    for (const auto& [bin, count] : counts)
        out[bin] = 100.0 * static_cast<double>(count) / static_cast<double>(total);
    return out;
}

json LatencyLUT::to_json() const {
    json out = json::object();
    for (const auto& [key, entry] : entries)
        out[key] = {{"mean", entry.mean}, {"samples", entry.samples}};
    return out;
}

LatencyLUT LatencyLUT::from_json(const json& doc) {
    LatencyLUT out;
    for (const auto& [key, entry] : doc.items())
        out.entries[key] = {entry.value("mean", 0.0), entry.value("samples", std::size_t{0})};
    return out;
}

LatencyLUT build_lut(const std::vector<TaskTrace>& traces) {
    std::map<std::string, std::vector<double>> samples;
    for (const auto& trace : traces) {
        for (const auto& call : trace.api_calls) samples["api:" + call.kind].push_back(call.latency);
        for (const auto& sub : trace.sub_calls)
            if (sub.executed) samples["tool:" + sub.tool].push_back(sub.duration);
    }
    LatencyLUT lut;
    for (const auto& [key, values] : samples)
        lut.entries[key] = {filtered_mean(values), values.size()};
    return lut;
}

RuntimePrediction predict_runtime(const LatencyLUT& lut, const TaskTrace& trace) {
    if (trace.api_calls.empty()) throw MetricsError("trace has no API calls to normalize by");
    RuntimePrediction prediction;
    double sum = 0;
    auto add = [&](const std::string& key) {
        auto it = lut.entries.find(key);
        if (it == lut.entries.end())
            prediction.missing.push_back(key);
        else
            sum += it->second.mean;
    };
    for (const auto& call : trace.api_calls) add("api:" + call.kind);
    for (const auto& sub : trace.sub_calls)
        if (sub.executed) add("tool:" + sub.tool);
    prediction.value = sum / static_cast<double>(trace.api_calls.size());
    return prediction;
}

double actual_normalized_runtime(const TaskTrace& trace) {
    if (trace.api_calls.empty()) throw MetricsError("trace has no API calls to normalize by");
    return trace.path_time() / static_cast<double>(trace.api_calls.size());
}

std::optional<double> lut_holdout_error(const std::vector<TaskTrace>& traces, double holdout,
                                        std::uint64_t seed) {
    if (traces.size() < 2) return std::nullopt;
    std::vector<std::size_t> order(traces.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t held = std::max<std::size_t>(
        1, static_cast<std::size_t>(holdout * static_cast<double>(traces.size())));

    std::vector<TaskTrace> fit;
    std::vector<const TaskTrace*> eval;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < order.size() - held)
            fit.push_back(traces[order[i]]);
        else
            eval.push_back(&traces[order[i]]);
    }
    LatencyLUT lut = build_lut(fit);
    std::vector<double> predictions, actuals;
    for (const TaskTrace* trace : eval) {
        RuntimePrediction prediction = predict_runtime(lut, *trace);
        if (prediction.partial()) continue;
        predictions.push_back(prediction.value);
        actuals.push_back(actual_normalized_runtime(*trace));
    }
    if (predictions.empty()) return std::nullopt;
    return modeling_error(predictions, actuals);
}

double modeling_error(const std::vector<double>& predictions,
                      const std::vector<double>& actuals) {
    if (predictions.size() != actuals.size())
        throw MetricsError("prediction and actual lists differ in length");
    if (predictions.empty()) throw MetricsError("modeling_error of empty lists");
    double sum = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (actuals[i] == 0) throw MetricsError("actual runtime is zero at index " +
                                                std::to_string(i));
        const double rel = (predictions[i] - actuals[i]) / actuals[i];
        sum += rel * rel;
    }
    return std::sqrt(sum / static_cast<double>(predictions.size())) * 100.0;
}

void write_histogram_csv(const std::string& path, const std::map<int, double>& histogram) {
    std::ofstream out(path);
    if (!out) throw MetricsError("cannot write histogram csv '" + path + "'");
    out << "tools_per_call,percent\n";
    for (const auto& [bin, percent] : histogram) out << bin << "," << percent << "\n";
}

void write_aggregates_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
    std::ofstream out(path);
    if (!out) throw MetricsError("cannot write aggregates csv '" + path + "'");
    out << "method,model,success_rate,correctness_rate,avg_tokens_per_task,avg_time_per_task,"
           "token_reduction,speedup\n";
    for (const auto& row : rows) {
        out << row.method << "," << row.model << "," << row.aggregates.success_rate << ",";
        if (row.aggregates.correctness_rate) out << *row.aggregates.correctness_rate;
        out << "," << row.aggregates.avg_tokens_per_task << ","
            << row.aggregates.avg_time_per_task << ",";
        if (row.aggregates.token_reduction) out << *row.aggregates.token_reduction;
        out << ",";
        if (row.aggregates.speedup) out << *row.aggregates.speedup;
        out << "\n";
    }
}

}  // namespace toolfuse
