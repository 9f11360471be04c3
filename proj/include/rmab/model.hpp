#pragma once

#include "rmab/errors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace rmab {

using StateId = int;
using Matrix = std::vector<std::vector<double>>;

/**
 * A finite-state Markov arm observed on a uniform time grid.
 *
 * One grid step of service in state s earns reward_rate[s] per unit time over
 * the step and then moves to s' with probability kernel[s][s']. The arm may be
 * switched away from at a grid instant only if the state occupied at that
 * instant is switchable. Local time 0 is always a feasible switch point.
 *
 * Arms produced by compile_restriction carry their lineage: base_state maps
 * each (possibly augmented) state to the state of the arm the restriction was
 * compiled from, and lift maps every base state to its canonical "fresh"
 * augmented copy (phase 0, uncommitted).
 */
struct ArmModel {
    std::string name;
    std::vector<std::string> state_names;
    std::vector<double> reward_rate;
    Matrix kernel;
    std::vector<bool> switchable;
    StateId initial_state = 0;
    bool nonpreemptive = false;
    std::string restriction = "unrestricted";

    std::vector<StateId> base_state;
    std::vector<StateId> lift;

    std::size_t size() const noexcept { return reward_rate.size(); }
    std::size_t base_size() const noexcept { return lift.size(); }

    double max_rate() const {
        double r = 0.0;
        for (double x : reward_rate) r = std::max(r, x);
        return r;
    }

    StateId find_state(const std::string& state_name) const {
        for (std::size_t s = 0; s < state_names.size(); ++s)
            if (state_names[s] == state_name) return static_cast<StateId>(s);
        throw DomainError("arm '" + name + "' has no state named '" + state_name + "'");
    }
};

/// Builds an arm with every state switchable and identity lineage.
inline ArmModel make_arm(std::string name, std::vector<std::string> state_names,
                         std::vector<double> rates, Matrix kernel, StateId initial = 0) {
    ArmModel arm;
    arm.name = std::move(name);
    const std::size_t n = rates.size();
    if (state_names.empty())
        for (std::size_t s = 0; s < n; ++s) state_names.push_back("s" + std::to_string(s));
    arm.state_names = std::move(state_names);
    arm.reward_rate = std::move(rates);
    arm.kernel = std::move(kernel);
    arm.switchable.assign(n, true);
    arm.initial_state = initial;
    arm.base_state.resize(n);
    arm.lift.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        arm.base_state[s] = static_cast<StateId>(s);
        arm.lift[s] = static_cast<StateId>(s);
    }
    return arm;
}

/// The zero-reward arm that lets a policy idle the machine.
inline ArmModel make_idle_arm(std::string name = "idle") {
    return make_arm(std::move(name), {"idle"}, {0.0}, {{1.0}});
}

/**
 * Builds an arm from a continuous-time generator Q (rows sum to zero) by
 * exact exponentiation over one grid step of length delta.
 */
inline ArmModel arm_from_generator(std::string name, std::vector<std::string> state_names,
                                   std::vector<double> rates, const Matrix& generator,
                                   double delta, StateId initial = 0) {
    const auto n = static_cast<Eigen::Index>(rates.size());
    if (static_cast<Eigen::Index>(generator.size()) != n)
        throw InvalidModel("generator must be " + std::to_string(n) + "x" + std::to_string(n));
    Eigen::MatrixXd q(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(generator[i].size()) != n)
            throw InvalidModel("generator row " + std::to_string(i) + " has wrong length");
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = generator[i][j];
    }
    const Eigen::MatrixXd p = (q * delta).exp();
    Matrix kernel(n, std::vector<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            kernel[i][j] = std::max(0.0, p(i, j));
            sum += kernel[i][j];
        }
        for (auto& x : kernel[i]) x /= sum;
    }
    return make_arm(std::move(name), std::move(state_names), std::move(rates), std::move(kernel),
                    initial);
}

// *******************************************************
// Restrictions
// *******************************************************

struct RestrictionSpec {
    enum class Kind { Unrestricted, IntegerGrid, StateBased, Nonpreemptive };

    Kind kind = Kind::Unrestricted;
    int period = 1;
    std::vector<StateId> switchable_states;

    static RestrictionSpec unrestricted() { return {}; }
    static RestrictionSpec integer_grid(int period) { return {Kind::IntegerGrid, period, {}}; }
    static RestrictionSpec state_based(std::vector<StateId> states) {
        return {Kind::StateBased, 1, std::move(states)};
    }
    static RestrictionSpec nonpreemptive() { return {Kind::Nonpreemptive, 1, {}}; }

    std::string label() const {
        switch (kind) {
        case Kind::Unrestricted: return "unrestricted";
        case Kind::IntegerGrid: return "integer_grid(" + std::to_string(period) + ")";
        case Kind::StateBased: return "state_based";
        case Kind::Nonpreemptive: return "nonpreemptive";
        }
        return "?";
    }
};

namespace detail {

inline std::string compose_label(const std::string& prev, const std::string& next) {
    if (prev == "unrestricted") return next;
    if (next == "unrestricted") return prev;
    return prev + "+" + next;
}

} // namespace detail

/**
 * Compiles a restriction into the switchable map of an arm.
 *
 * The new feasibility predicate is intersected with the arm's existing one, so
 * restrictions compose and Unrestricted is the identity. IntegerGrid(p) and
 * Nonpreemptive augment the state with a phase counter or a commitment flag;
 * rewards and base dynamics are carried over unchanged.
 */
inline ArmModel compile_restriction(const RestrictionSpec& spec, const ArmModel& base) {
    using Kind = RestrictionSpec::Kind;
    const std::size_t n = base.size();
    switch (spec.kind) {
    case Kind::Unrestricted:
        return base;

    case Kind::StateBased: {
        ArmModel arm = base;
        std::vector<bool> allowed(n, false);
        for (StateId s : spec.switchable_states) {
            if (s < 0 || static_cast<std::size_t>(s) >= n)
                throw InvalidModel("state_based restriction names state " + std::to_string(s) +
                                   " outside arm '" + base.name + "'");
            allowed[s] = true;
        }
        for (std::size_t s = 0; s < n; ++s) arm.switchable[s] = base.switchable[s] && allowed[s];
        arm.restriction = detail::compose_label(base.restriction, spec.label());
        return arm;
    }

    case Kind::IntegerGrid: {
        const int p = spec.period;
        if (p < 1) throw InvalidModel("integer_grid period must be a positive integer");
        if (n == 0) throw InvalidModel("cannot restrict an arm with no states");
        if (p == 1) return base;
        ArmModel arm;
        arm.name = base.name;
        arm.nonpreemptive = base.nonpreemptive;
        arm.restriction = detail::compose_label(base.restriction, spec.label());
        const std::size_t m = n * static_cast<std::size_t>(p);
        arm.state_names.resize(m);
        arm.reward_rate.resize(m);
        arm.kernel.assign(m, std::vector<double>(m, 0.0));
        arm.switchable.resize(m);
        arm.base_state.resize(m);
        for (std::size_t s = 0; s < n; ++s) {
            for (int phase = 0; phase < p; ++phase) {
                const std::size_t id = s * p + phase;
                arm.state_names[id] = base.state_names[s] + "@" + std::to_string(phase);
                arm.reward_rate[id] = base.reward_rate[s];
                arm.switchable[id] = base.switchable[s] && phase == 0;
                arm.base_state[id] = base.base_state[s];
                const int next_phase = (phase + 1) % p;
                for (std::size_t t = 0; t < n; ++t)
                    arm.kernel[id][t * p + next_phase] = base.kernel[s][t];
            }
        }
        arm.initial_state = base.initial_state * p;
        arm.lift.resize(base.lift.size());
        for (std::size_t b = 0; b < base.lift.size(); ++b) arm.lift[b] = base.lift[b] * p;
        return arm;
    }

    case Kind::Nonpreemptive: {
        if (n == 0) throw InvalidModel("nonpreemptive restriction on an arm with zero states");
        ArmModel arm;
        arm.name = base.name;
        arm.nonpreemptive = true;
        arm.restriction = detail::compose_label(base.restriction, spec.label());
        const std::size_t m = 2 * n;
        arm.state_names.resize(m);
        arm.reward_rate.resize(m);
        arm.kernel.assign(m, std::vector<double>(m, 0.0));
        arm.switchable.resize(m);
        arm.base_state.resize(m);
        for (std::size_t s = 0; s < n; ++s) {
            // s: not yet entered; n + s: committed for good.
            arm.state_names[s] = base.state_names[s];
            arm.state_names[n + s] = base.state_names[s] + "*";
            arm.reward_rate[s] = arm.reward_rate[n + s] = base.reward_rate[s];
            arm.switchable[s] = base.switchable[s];
            arm.switchable[n + s] = false;
            arm.base_state[s] = arm.base_state[n + s] = base.base_state[s];
            for (std::size_t t = 0; t < n; ++t) {
                arm.kernel[s][n + t] = base.kernel[s][t];
                arm.kernel[n + s][n + t] = base.kernel[s][t];
            }
        }
        arm.initial_state = base.initial_state;
        arm.lift = base.lift;
        return arm;
    }
    }
    return base;
}

// *******************************************************
// Scenario
// *******************************************************

struct Scenario {
    std::vector<ArmModel> arms;
    double beta = 1.0;
    double delta = 1.0;
    long horizon_steps = 0;
    double tail_tol = 1e-8;

    double max_rate() const {
        double r = 0.0;
        for (const auto& a : arms) r = std::max(r, a.max_rate());
        return r;
    }
};

/// Per-step discount exp(-beta * delta).
inline double discount_per_step(double beta, double delta) { return std::exp(-beta * delta); }
inline double discount_per_step(const Scenario& sc) { return discount_per_step(sc.beta, sc.delta); }

/// 1 - exp(-beta * delta), computed without cancellation.
inline double one_minus_discount(double beta, double delta) { return -std::expm1(-beta * delta); }

/**
 * Present value at the start of a step of one unit of reward rate held over
 * the step: (1 - gamma) / beta.
 */
inline double step_reward_factor(const Scenario& sc) {
    return one_minus_discount(sc.beta, sc.delta) / sc.beta;
}

/// Bound on the value lost by truncating at `steps`: gamma^H * max_rate / beta.
inline double horizon_tail(double beta, double delta, double max_rate, long steps) {
    return std::exp(-beta * delta * static_cast<double>(steps)) * max_rate / beta;
}

inline double horizon_tail(const Scenario& sc, long steps) {
    return horizon_tail(sc.beta, sc.delta, sc.max_rate(), steps);
}

/// Smallest horizon whose truncation tail is at most tol.
inline long recommended_horizon(double beta, double delta, double max_rate, double tol) {
    if (max_rate <= 0.0) return 1;
    const double h = std::log(max_rate / (beta * tol)) / (beta * delta);
    long steps = std::max(1L, static_cast<long>(std::ceil(h)));
    while (horizon_tail(beta, delta, max_rate, steps) > tol) ++steps;
    return steps;
}

inline long recommended_horizon(const Scenario& sc, double tol) {
    return recommended_horizon(sc.beta, sc.delta, sc.max_rate(), tol);
}

struct Violation {
    std::string code;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline std::vector<bool> reachable_from(const ArmModel& arm, StateId start) {
    std::vector<bool> seen(arm.size(), false);
    std::vector<StateId> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const StateId s = stack.back();
        stack.pop_back();
        for (std::size_t t = 0; t < arm.size(); ++t) {
            if (arm.kernel[s][t] > 0.0 && !seen[t]) {
                seen[t] = true;
                stack.push_back(static_cast<StateId>(t));
            }
        }
    }
    return seen;
}

} // namespace detail

/// Checks every arm invariant; returns one entry per violation.
inline ValidationReport validate_arm(const ArmModel& arm) {
    ValidationReport report;
    const std::string who = "arm '" + arm.name + "'";
    const std::size_t n = arm.size();
    if (n == 0) {
        report.push_back({"empty-arm", who + " has no states"});
        return report;
    }
    if (arm.kernel.size() != n || arm.switchable.size() != n || arm.state_names.size() != n) {
        report.push_back({"shape", who + " has inconsistent state counts"});
        return report;
    }
    for (std::size_t s = 0; s < n; ++s) {
        const double r = arm.reward_rate[s];
        if (!std::isfinite(r)) report.push_back({"nonfinite-rate", who + " state " + arm.state_names[s]});
        else if (r < 0.0) report.push_back({"negative-rate", who + " state " + arm.state_names[s]});

        if (arm.kernel[s].size() != n) {
            report.push_back({"shape", who + " kernel row " + arm.state_names[s] + " has wrong length"});
            continue;
        }
        double sum = 0.0;
        bool negative = false;
        for (double p : arm.kernel[s]) {
            if (!(p >= 0.0)) negative = true;
            sum += p;
        }
        if (negative)
            report.push_back({"row-stochastic", who + " kernel row " + arm.state_names[s] +
                                                    " has a negative or NaN entry"});
        else if (std::abs(sum - 1.0) > 1e-12)
            report.push_back({"row-stochastic", who + " kernel row " + arm.state_names[s] +
                                                    " sums to " + std::to_string(sum)});
    }
    if (arm.initial_state < 0 || static_cast<std::size_t>(arm.initial_state) >= n) {
        report.push_back({"initial-state", who + " initial state out of range"});
        return report;
    }
    if (!arm.nonpreemptive) {
        const auto seen = detail::reachable_from(arm, arm.initial_state);
        bool any = false;
        for (std::size_t s = 0; s < n; ++s) any = any || (seen[s] && arm.switchable[s]);
        if (!any)
            report.push_back({"no-switchable", who + " never reaches a switchable state but is not "
                                                     "flagged nonpreemptive"});
    }
    return report;
}

/// Checks the scenario; an empty report means the scenario is accepted.
inline ValidationReport validate_scenario(const Scenario& sc) {
    ValidationReport report;
    if (!(sc.beta > 0.0) || !std::isfinite(sc.beta))
        report.push_back({"beta", "discount rate beta must be positive and finite"});
    if (!(sc.delta > 0.0) || !std::isfinite(sc.delta))
        report.push_back({"delta", "grid step delta must be positive and finite"});
    if (sc.arms.empty()) report.push_back({"no-arms", "scenario has no arms"});
    for (const auto& arm : sc.arms) {
        auto r = validate_arm(arm);
        report.insert(report.end(), r.begin(), r.end());
    }
    if (!report.empty()) return report;

    if (sc.horizon_steps < 1) {
        report.push_back({"horizon", "horizon must be at least one step"});
    } else {
        const double tail = horizon_tail(sc, sc.horizon_steps);
        if (tail > sc.tail_tol)
            report.push_back({"horizon-tail", "truncation tail " + std::to_string(tail) +
                                                  " exceeds tolerance " +
                                                  std::to_string(sc.tail_tol)});
    }
    return report;
}

} // namespace rmab
