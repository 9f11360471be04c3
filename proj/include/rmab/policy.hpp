#pragma once

#include "rmab/errors.hpp"
#include "rmab/index.hpp"
#include "rmab/model.hpp"
#include "rmab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace rmab {

struct PolicySpec {
    enum class Kind { GittinsIndex, Myopic, RoundRobin, Fixed, Random };

    Kind kind = Kind::GittinsIndex;
    /// Tie-break order for GittinsIndex, priority list for Fixed. Empty means 0, 1, ..., d-1.
    std::vector<int> order;
    std::uint64_t seed = 0;

    static PolicySpec gittins(std::vector<int> tie_break = {}) {
        return {Kind::GittinsIndex, std::move(tie_break), 0};
    }
    static PolicySpec myopic() { return {Kind::Myopic, {}, 0}; }
    static PolicySpec round_robin() { return {Kind::RoundRobin, {}, 0}; }
    static PolicySpec fixed(std::vector<int> order) { return {Kind::Fixed, std::move(order), 0}; }
    static PolicySpec random(std::uint64_t seed) { return {Kind::Random, {}, seed}; }

    std::string label() const {
        auto join = [this] {
            std::string s;
            for (std::size_t i = 0; i < order.size(); ++i) s += (i ? "," : "") + std::to_string(order[i]);
            return s;
        };
        switch (kind) {
        case Kind::GittinsIndex: return order.empty() ? "gittins" : "gittins:" + join();
        case Kind::Myopic: return "myopic";
        case Kind::RoundRobin: return "round-robin";
        case Kind::Fixed: return "fixed:" + join();
        case Kind::Random: return "random:" + std::to_string(seed);
        }
        return "?";
    }
};

/**
 * Arm-selection weights of a Random(seed) policy. Each seed fixes one
 * stationary randomized rule; weights are uniform draws on [0.2, 1] normalized.
 */
inline std::vector<double> random_policy_weights(std::uint64_t seed, std::size_t arms) {
    Rng rng(seed);
    std::vector<double> w(arms);
    for (auto& x : w) x = 0.2 + 0.8 * rng.uniform();
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    return w;
}

// *******************************************************
// Allocation state shared by simulation and exact evaluation
// *******************************************************

struct ArmCursor {
    StateId state = 0;
    long local_time = 0;
    double carried = 0.0;
    double envelope = 0.0;
};

struct SystemState {
    std::vector<ArmCursor> arms;
    /// Arm that must be served next because its state is not switchable, or -1.
    int committed = -1;
    int last_served = -1;
};

/// Ordering on the decision-relevant part of the state (local times excluded).
struct DecisionKeyLess {
    bool operator()(const SystemState& a, const SystemState& b) const {
        if (a.committed != b.committed) return a.committed < b.committed;
        if (a.last_served != b.last_served) return a.last_served < b.last_served;
        for (std::size_t k = 0; k < a.arms.size(); ++k) {
            const auto& x = a.arms[k];
            const auto& y = b.arms[k];
            if (std::tie(x.state, x.carried, x.envelope) != std::tie(y.state, y.carried, y.envelope))
                return std::tie(x.state, x.carried, x.envelope) < std::tie(y.state, y.carried, y.envelope);
        }
        return false;
    }
};

struct PolicyContext {
    const Scenario& scenario;
    /// Index tables per arm; required for GittinsIndex and for envelope bookkeeping.
    const std::vector<IndexTable>* tables = nullptr;
};

inline SystemState initial_system_state(const PolicyContext& ctx) {
    SystemState sys;
    sys.arms.resize(ctx.scenario.arms.size());
    for (std::size_t k = 0; k < sys.arms.size(); ++k) {
        auto& c = sys.arms[k];
        c.state = ctx.scenario.arms[k].initial_state;
        if (ctx.tables) c.carried = c.envelope = (*ctx.tables)[k].entry(c.state);
    }
    return sys;
}

/// Serves `arm` for one step ending in `next_state`; updates carried index and envelope.
inline void advance(SystemState& sys, int arm, StateId next_state, const PolicyContext& ctx) {
    auto& c = sys.arms[arm];
    c.state = next_state;
    ++c.local_time;
    const bool feasible = ctx.scenario.arms[arm].switchable[next_state];
    if (ctx.tables) {
        const auto& table = (*ctx.tables)[arm];
        c.carried = carried_index_step(table, c.carried, next_state);
        c.envelope = lower_envelope_update(LowerEnvelope{c.envelope}, c.carried, feasible).value;
    }
    sys.committed = feasible ? -1 : arm;
    sys.last_served = arm;
}

/**
 * One decision of the index policy. A committed arm (mid-excursion or in a
 * non-switchable state) is always kept; otherwise the arm with the largest
 * carried index wins, ties going to the earliest arm in tie_break.
 */
inline int index_policy_step(const std::vector<double>& carried, std::optional<int> committed_arm,
                             const std::vector<int>& tie_break = {}) {
    if (committed_arm) return *committed_arm;
    std::vector<int> order = tie_break;
    if (order.empty()) {
        order.resize(carried.size());
        std::iota(order.begin(), order.end(), 0);
    }
    int best = order.front();
    for (int k : order)
        if (carried[k] > carried[best]) best = k;
    return best;
}

/// Arm the policy is not free to leave at this step, or -1.
inline int forced_arm(const PolicySpec& policy, const SystemState& sys) {
    if (sys.committed >= 0) return sys.committed;
    if (policy.kind == PolicySpec::Kind::GittinsIndex && sys.last_served >= 0) {
        const auto& c = sys.arms[sys.last_served];
        if (c.carried > c.envelope) return sys.last_served;
    }
    return -1;
}

using ActionDistribution = std::vector<std::pair<int, double>>;

/// The policy's (possibly randomized) choice of arm at the current state.
inline ActionDistribution action_distribution(const PolicySpec& policy, const SystemState& sys,
                                              const PolicyContext& ctx) {
    const int d = static_cast<int>(sys.arms.size());
    if (const int k = forced_arm(policy, sys); k >= 0) return {{k, 1.0}};
    switch (policy.kind) {
    case PolicySpec::Kind::GittinsIndex: {
        if (!ctx.tables) throw DomainError("the index policy needs index tables");
        std::vector<double> carried(d);
        for (int k = 0; k < d; ++k) carried[k] = sys.arms[k].carried;
        return {{index_policy_step(carried, std::nullopt, policy.order), 1.0}};
    }
    case PolicySpec::Kind::Myopic: {
        int best = 0;
        auto rate = [&](int k) { return ctx.scenario.arms[k].reward_rate[sys.arms[k].state]; };
        for (int k = 1; k < d; ++k)
            if (rate(k) > rate(best)) best = k;
        return {{best, 1.0}};
    }
    case PolicySpec::Kind::RoundRobin:
        return {{(sys.last_served + 1) % d, 1.0}};
    case PolicySpec::Kind::Fixed:
        return {{policy.order.empty() ? 0 : policy.order.front(), 1.0}};
    case PolicySpec::Kind::Random: {
        const auto w = random_policy_weights(policy.seed, d);
        ActionDistribution dist;
        for (int k = 0; k < d; ++k) dist.emplace_back(k, w[k]);
        return dist;
    }
    }
    return {{0, 1.0}};
}

// *******************************************************
// Traces
// *******************************************************

struct AllocationStep {
    long t = 0;
    int arm = 0;
    bool forced = false;
    std::vector<StateId> states;
    std::vector<long> local_times;
    std::vector<double> carried;
    std::vector<double> envelope;
    double rate = 0.0;
    /// gamma^t * rate * (1 - gamma) / beta
    double reward = 0.0;
    double cumulative = 0.0;
    /// gamma^t * (1 - gamma) * max_k envelope_k
    double envelope_term = 0.0;
};

struct AllocationTrace {
    std::vector<AllocationStep> steps;
    std::vector<double> arm_reward;
    double total_reward = 0.0;
    double envelope_value = 0.0;
    bool tail_warning = false;
};

/// Simulates one sample path of the policy for `horizon` steps.
inline AllocationTrace run_policy(const Scenario& sc, const std::vector<IndexTable>* tables,
                                  const PolicySpec& policy, std::uint64_t seed, long horizon) {
    const PolicyContext ctx{sc, tables};
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);
    const double one_minus = one_minus_discount(sc.beta, sc.delta);
    const std::size_t d = sc.arms.size();

    AllocationTrace trace;
    trace.arm_reward.assign(d, 0.0);
    trace.tail_warning = horizon_tail(sc, horizon) > sc.tail_tol;
    trace.steps.reserve(horizon);

    Rng rng(seed);
    SystemState sys = initial_system_state(ctx);
    double disc = 1.0;
    std::vector<double> probs;
    for (long t = 0; t < horizon; ++t) {
        AllocationStep step;
        step.t = t;
        step.forced = forced_arm(policy, sys) >= 0;
        const auto dist = action_distribution(policy, sys, ctx);
        if (dist.size() == 1) {
            step.arm = dist.front().first;
        } else {
            probs.assign(d, 0.0);
            for (auto [k, p] : dist) probs[k] = p;
            step.arm = rng.sample(probs);
        }
        double max_env = 0.0;
        for (const auto& c : sys.arms) {
            step.states.push_back(c.state);
            step.local_times.push_back(c.local_time);
            step.carried.push_back(c.carried);
            step.envelope.push_back(c.envelope);
            max_env = std::max(max_env, c.envelope);
        }
        const auto& arm = sc.arms[step.arm];
        const StateId s = sys.arms[step.arm].state;
        step.rate = arm.reward_rate[s];
        step.reward = disc * step.rate * factor;
        step.envelope_term = tables ? disc * one_minus * max_env : 0.0;
        trace.total_reward += step.reward;
        trace.arm_reward[step.arm] += step.reward;
        trace.envelope_value += step.envelope_term;
        step.cumulative = trace.total_reward;

        advance(sys, step.arm, rng.sample(arm.kernel[s]), ctx);
        trace.steps.push_back(std::move(step));
        disc *= gamma;
    }
    return trace;
}

/// Lists every violation of the allocation-process conditions in a trace.
inline std::vector<std::string> check_trace(const AllocationTrace& trace, const Scenario& sc) {
    std::vector<std::string> out;
    const std::size_t d = sc.arms.size();
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const auto& step = trace.steps[i];
        const long sum = std::accumulate(step.local_times.begin(), step.local_times.end(), 0L);
        if (sum != step.t) out.push_back("step " + std::to_string(step.t) + ": local times sum to " +
                                         std::to_string(sum));
        if (i == 0) {
            for (long u : step.local_times)
                if (u != 0) out.push_back("local times do not start at zero");
            continue;
        }
        const auto& prev = trace.steps[i - 1];
        for (std::size_t k = 0; k < d; ++k) {
            const long expected = prev.local_times[k] + (static_cast<int>(k) == prev.arm ? 1 : 0);
            if (step.local_times[k] != expected)
                out.push_back("step " + std::to_string(step.t) + ": local time of arm " +
                              std::to_string(k) + " is inconsistent");
        }
        const StateId s = step.states[prev.arm];
        if (!sc.arms[prev.arm].switchable[s] && step.arm != prev.arm)
            out.push_back("step " + std::to_string(step.t) + ": arm " + std::to_string(prev.arm) +
                          " left at a non-switchable instant");
    }
    return out;
}

struct Segment {
    int arm = 0;
    long start = 0;
    long end = 0; // exclusive
};

/// Maximal runs of uninterrupted service to one arm; they partition [0, horizon).
inline std::vector<Segment> excursion_segments(const AllocationTrace& trace) {
    std::vector<Segment> out;
    for (const auto& step : trace.steps) {
        if (out.empty() || out.back().arm != step.arm) out.push_back({step.arm, step.t, step.t + 1});
        else out.back().end = step.t + 1;
    }
    return out;
}

} // namespace rmab
