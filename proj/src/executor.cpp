#include "toolfuse/executor.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <set>
#include <thread>

namespace toolfuse {

const char* to_string(CallOrigin origin) {
    switch (origin) {
        case CallOrigin::Direct: return "direct";
        case CallOrigin::Defused: return "defused";
        case CallOrigin::ProviderParallel: return "provider_parallel";
    }
    return "direct";
}

RunnerResult RunnerTable::Entry::run(const json& arguments) const {
    if (serial) {
        std::lock_guard<std::mutex> lock(*gate);
        return runner(arguments);
    }
    return runner(arguments);
}

void RunnerTable::add(const std::string& tool, ToolRunner runner, bool serial) {
    auto entry = std::make_shared<Entry>();
    entry->runner = std::move(runner);
    entry->serial = serial;
    if (serial) entry->gate = std::make_unique<std::mutex>();
    entries_[tool] = std::move(entry);
}

bool RunnerTable::has(const std::string& tool) const { return entries_.count(tool) > 0; }

bool RunnerTable::covers(const ExecutionPlan& plan) const {
    for (const auto& stage : plan.stages)
        for (const auto& call : stage)
            if (!has(call.tool)) return false;
    return true;
}

std::shared_ptr<const RunnerTable::Entry> RunnerTable::entry(const std::string& tool) const {
    auto it = entries_.find(tool);
    return it == entries_.end() ? nullptr : it->second;
}

RunnerResult RunnerTable::invoke(const std::string& tool, const json& arguments) const {
    auto e = entry(tool);
    if (!e) throw UnknownToolError(tool);
    return e->run(arguments);
}

namespace {

struct EffectSets {
    std::set<std::string> reads;
    std::set<std::string> writes;
};

EffectSets effect_sets(const ToolSpec& tool) {
    EffectSets out;
    for (const ResourceEffect& e : tool.effects)
        (e.mode == EffectMode::Write ? out.writes : out.reads).insert(e.resource);
    return out;
}

bool conflicts(const EffectSets& a, const EffectSets& b) {
    for (const auto& r : a.writes)
        if (b.writes.count(r) || b.reads.count(r)) return true;
    for (const auto& r : b.writes)
        if (a.reads.count(r)) return true;
    return false;
}

}  // namespace

ExecutionPlan plan_execution(const std::vector<SubCall>& subcalls, const ToolRegistry& registry) {
    ExecutionPlan plan;
    std::vector<std::pair<EffectSets, std::size_t>> placed;  // effects, stage
    for (const SubCall& call : subcalls) {
        EffectSets effects = effect_sets(registry.tool(call.tool));
        std::size_t stage = 0;
        for (const auto& [prior, prior_stage] : placed)
            if (conflicts(prior, effects)) stage = std::max(stage, prior_stage + 1);
        if (stage >= plan.stages.size()) plan.stages.resize(stage + 1);
        plan.stages[stage].push_back(call);
        placed.emplace_back(std::move(effects), stage);
    }
    return plan;
}

namespace {

using SteadyClock = std::chrono::steady_clock;

// Everything an abandoned worker may still touch after execute_plan returns
// is shared-owned: its runner entry, its slot, the stage gate, and the
// event sink. The worker never references the caller's stack.

struct EventSink {
    std::mutex m;
    std::vector<ExecEvent> events;

    void emit(const std::string& tool, int seq, int stage, bool start, double at) {
        std::lock_guard<std::mutex> lock(m);
        events.push_back({tool, seq, stage, start, at});
    }
};

struct CallSlot {
    std::mutex m;
    std::condition_variable cv;
    bool done = false;       // result decided (worker or timeout filler)
    bool started = false;    // worker emitted its start event
    bool timed_out = false;
    ToolResult result;
};

// Launched calls whose slot is still unfilled. A timed-out call stops
// counting toward the width once its slot is filled, so an abandoned hung
// runner does not stall the rest of the stage.
struct StageGate {
    std::mutex m;
    int pending = 0;
};

}  // namespace

ExecutionReport execute_plan(const ExecutionPlan& plan, const RunnerTable& runners,
                             const ExecutionBudget& budget, bool concurrent) {
    ExecutionReport report;
    auto sink = std::make_shared<EventSink>();

    const int width = concurrent ? std::max(1, budget.max_concurrency) : 1;

    for (std::size_t stage_idx = 0; stage_idx < plan.stages.size(); ++stage_idx) {
        const auto& stage = plan.stages[stage_idx];
        const int sidx = static_cast<int>(stage_idx);

        if (report.stage_failure) {
            for (const SubCall& call : stage) report.skipped.push_back(call);
            continue;
        }

        auto gate = std::make_shared<StageGate>();
        std::vector<std::shared_ptr<CallSlot>> slots(stage.size());
        std::vector<std::thread> workers(stage.size());
        std::vector<SteadyClock::time_point> deadline(stage.size());
        std::vector<double> launch_second(stage.size(), 0);
        std::size_t launched = 0;

        // Fills `slot` with a timeout error; caller must hold slot->m. The
        // filler owns the finish event (and the start event if the worker
        // never got scheduled).
        auto fill_timeout = [&](const std::shared_ptr<CallSlot>& slot, const SubCall& call,
                                double started_at) {
            slot->done = true;
            slot->timed_out = true;
            const double now = monotonic_seconds();
            slot->result.tool = call.tool;
            slot->result.seq = call.seq;
            slot->result.ok = false;
            slot->result.error =
                "timed out after " + std::to_string(budget.per_call_timeout) + " s";
            slot->result.started = started_at;
            slot->result.finished = now;
            slot->result.duration = now - started_at;
            if (!slot->started) sink->emit(call.tool, call.seq, sidx, true, started_at);
            sink->emit(call.tool, call.seq, sidx, false, now);
            std::lock_guard<std::mutex> lock(gate->m);
            --gate->pending;
        };

        auto reap_overdue = [&] {
            const auto now = SteadyClock::now();
            for (std::size_t j = 0; j < launched; ++j) {
                std::lock_guard<std::mutex> lock(slots[j]->m);
                if (!slots[j]->done && now >= deadline[j])
                    fill_timeout(slots[j], stage[j], launch_second[j]);
            }
        };

        for (std::size_t i = 0; i < stage.size(); ++i) {
            for (;;) {
                {
                    std::lock_guard<std::mutex> lock(gate->m);
                    if (gate->pending < width) {
                        ++gate->pending;
                        break;
                    }
                }
                reap_overdue();
                std::this_thread::sleep_for(std::chrono::microseconds(500));
            }

            slots[i] = std::make_shared<CallSlot>();
            deadline[i] = SteadyClock::now() +
                          std::chrono::duration_cast<SteadyClock::duration>(
                              std::chrono::duration<double>(budget.per_call_timeout));
            launch_second[i] = monotonic_seconds();
            launched = i + 1;

            const SubCall& call = stage[i];
            auto slot = slots[i];
            auto entry = runners.entry(call.tool);
            workers[i] = std::thread([entry, gate, sink, slot, call, sidx] {
                {
                    // Timed out before ever being scheduled: stay dead.
                    std::lock_guard<std::mutex> lock(slot->m);
                    if (slot->done) return;
                    slot->started = true;
                }
                const double started = monotonic_seconds();
                sink->emit(call.tool, call.seq, sidx, true, started);
                RunnerResult outcome;
                if (!entry) {
                    outcome.ok = false;
                    outcome.error = "unknown tool: " + call.tool;
                } else {
                    try {
                        outcome = entry->run(call.arguments);
                    } catch (const std::exception& ex) {
                        outcome.ok = false;
                        outcome.error = ex.what();
                    }
                }
                const double finished = monotonic_seconds();
                bool filled = false;
                {
                    std::lock_guard<std::mutex> lock(slot->m);
                    if (!slot->done) {
                        slot->done = true;
                        filled = true;
                        ToolResult& r = slot->result;
                        r.tool = call.tool;
                        r.seq = call.seq;
                        r.ok = outcome.ok;
                        r.value = outcome.value;
                        r.error = outcome.error;
                        r.started = started;
                        r.finished = finished;
                        r.duration = finished - started;
                        r.reported_duration = outcome.synthetic_duration;
                    }
                }
                slot->cv.notify_all();
                if (filled) {
                    sink->emit(call.tool, call.seq, sidx, false, finished);
                    std::lock_guard<std::mutex> lock(gate->m);
                    --gate->pending;
                }
            });
        }

        // Collect in member order, enforcing the per-call timeout from each
        // call's launch point. A timed-out worker is abandoned: its slot is
        // filled with an error and the gate reopened so the stage drains.
        for (std::size_t i = 0; i < stage.size(); ++i) {
            auto slot = slots[i];
            std::unique_lock<std::mutex> lock(slot->m);
            // The deadline is authoritative on the steady clock; the CV
            // waits in system-clock chunks and re-checks, which also keeps
            // the wait on the plain timedwait primitive.
            while (!slot->done) {
                const auto now = SteadyClock::now();
                if (now >= deadline[i]) {
                    fill_timeout(slot, stage[i], launch_second[i]);
                    break;
                }
                slot->cv.wait_until(lock,
                                    std::chrono::system_clock::now() + (deadline[i] - now));
            }
        }

        bool failed = false;
        for (std::size_t i = 0; i < stage.size(); ++i) {
            bool timed_out;
            {
                std::lock_guard<std::mutex> lock(slots[i]->m);
                timed_out = slots[i]->timed_out;
            }
            if (timed_out)
                workers[i].detach();
            else
                workers[i].join();
            report.results.push_back(slots[i]->result);
            if (!slots[i]->result.ok) failed = true;
        }

        if (failed) {
            report.stage_failure = true;
            report.failed_stage = sidx;
        }
    }

    {
        std::lock_guard<std::mutex> lock(sink->m);
        report.events = sink->events;
    }
    std::sort(report.results.begin(), report.results.end(),
              [](const ToolResult& a, const ToolResult& b) { return a.seq < b.seq; });
    return report;
}

}  // namespace toolfuse
