#pragma once

#include "toolfuse/agent_loop.hpp"
#include "toolfuse/registry.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace toolfuse {

// Per-task oracle grouping: which operations an ideal agent would have
// bundled into single API calls, by category.
struct OracleAnnotation {
    std::map<std::string, std::vector<std::vector<std::string>>> groups;

    int count(const std::string& category) const;
    json to_json() const;
    static OracleAnnotation from_json(const json& doc);
    static OracleAnnotation from_plan(const FusionPlan& plan);

    bool operator==(const OracleAnnotation&) const = default;
};

enum class TimeBasis { Path, Wall };

const char* to_string(TimeBasis basis);
TimeBasis time_basis_from_string(const std::string& name);

struct Aggregates {
    double success_rate = 0;                  // %
    std::optional<double> correctness_rate;   // %, needs gold data
    double avg_tokens_per_task = 0;
    double avg_time_per_task = 0;             // s, outlier-filtered
    std::optional<double> token_reduction;    // x, vs a baseline
    std::optional<double> speedup;            // x, vs a baseline

    json to_json() const;
    static Aggregates from_json(const json& doc);
    bool operator==(const Aggregates&) const = default;
};

struct RunReport {
    std::string method;
    std::string model;
    TimeBasis basis = TimeBasis::Path;
    std::vector<TaskTrace> traces;
    Aggregates aggregates;  // cache; recomputed and verified on load

    static RunReport build(std::string method, std::string model, std::vector<TaskTrace> traces,
                           TimeBasis basis = TimeBasis::Path);
    json to_json() const;
    // Throws MetricsError when the stored aggregates disagree with a
    // recomputation from the embedded traces.
    static RunReport from_json(const json& doc);
    void save_file(const std::string& path) const;
    static RunReport load_file(const std::string& path);
};

// Trace files hold one task record per line (JSONL).
void save_traces(const std::string& path, const std::vector<TaskTrace>& traces);
std::vector<TaskTrace> load_traces(const std::string& path);

double success_rate(const std::vector<TaskTrace>& traces);  // %

// % of executed tool invocations matching the gold multiset (name +
// canonicalized arguments), judged at constituent granularity. Unavailable
// (nullopt) when no trace carries gold data.
std::optional<double> correctness_rate(const std::vector<TaskTrace>& traces);

// Mean of the samples within [mu - 2*sigma, mu + 2*sigma] (closed interval),
// where mu and the population sigma are computed once over all samples.
// sigma = 0 returns mu. Empty input throws.
double filtered_mean(const std::vector<double>& samples);

double avg_tokens_per_task(const std::vector<TaskTrace>& traces);
double avg_time_per_task(const std::vector<TaskTrace>& traces, TimeBasis basis);

double task_time(const TaskTrace& trace, TimeBasis basis);

// baseline avg / candidate avg. Both runs must cover the same task set.
double token_reduction(const RunReport& baseline, const RunReport& candidate);
double speedup(const RunReport& baseline, const RunReport& candidate);

// Share of oracle-parallelizable operations of `category` that the run
// executed grouped (same API call as another member of the same oracle
// group), as a percentage of the oracle total.
double parallelization_rate(const std::vector<TaskTrace>& traces,
                            const std::map<std::string, OracleAnnotation>& annotations,
                            const std::string& category);

// Mean number of constituent tools per API call (the per-call framing of
// parallelization; fuser and final-answer calls count 0 tools).
double avg_tools_per_call(const std::vector<TaskTrace>& traces);

// Normalized percentage histogram of tools per API call, constituent
// granularity.
std::map<int, double> tools_per_call_histogram(const std::vector<TaskTrace>& traces);

struct LatencyLUT {
    struct Entry {
        double mean = 0;
        std::size_t samples = 0;

        bool operator==(const Entry&) const = default;
    };
    std::map<std::string, Entry> entries;  // tool:<name>, api:<kind>

    json to_json() const;
    static LatencyLUT from_json(const json& doc);
};

// Outlier-filtered running means per tool and per API-call kind.
LatencyLUT build_lut(const std::vector<TaskTrace>& traces);

struct RuntimePrediction {
    double value = 0;                  // seconds per API call
    std::vector<std::string> missing;  // LUT keys absent for this trace

    bool partial() const { return !missing.empty(); }
};

// Sums LUT entries along the trace's solution path (every API call key +
// every executed tool key) and divides by the number of API calls.
RuntimePrediction predict_runtime(const LatencyLUT& lut, const TaskTrace& trace);

// The same normalization applied to the measured totals.
double actual_normalized_runtime(const TaskTrace& trace);

// Fits the LUT on a seeded (1 - holdout) split and scores the rest,
// skipping holdout traces that hit missing keys. nullopt when nothing
// scoreable remains.
std::optional<double> lut_holdout_error(const std::vector<TaskTrace>& traces, double holdout,
                                        std::uint64_t seed);

// Root-mean-square percentage error: sqrt(mean(((pred-actual)/actual)^2)) * 100.
double modeling_error(const std::vector<double>& predictions,
                      const std::vector<double>& actuals);

// CSV renderers; column order is part of the documented interface.
void write_histogram_csv(const std::string& path, const std::map<int, double>& histogram);

struct AggregateRow {
    std::string method;
    std::string model;
    Aggregates aggregates;
};
void write_aggregates_csv(const std::string& path, const std::vector<AggregateRow>& rows);

}  // namespace toolfuse
