#pragma once

#include "rmab/errors.hpp"
#include "rmab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace rmab {

struct SolverOptions {
    /// Bound on the sup-norm distance of the returned values to the fixed point.
    double tol_v = 1e-10;
    long max_iter = 1'000'000;
};

/// Retirement level for the calibrated stopping problem (unit q-process).
struct GainSpec {
    double m = 0.0;
};

/**
 * Solution of the retirement stopping problem at level m for one arm.
 *
 * Values are present values at the current instant: retiring pays exactly m,
 * one step of service in s pays reward_rate[s] * (1 - gamma) / beta.
 */
struct SnellSolution {
    std::vector<double> value;
    std::vector<double> continuation;
    std::vector<bool> stop_region;
    std::vector<double> phi;
    double m = 0.0;
    double stop_tol = 0.0;
    double residual = 0.0;
    long sweeps = 0;

    /// True if retiring at a feasible instant in s is optimal (ties stop).
    bool stop_if_feasible(StateId s) const { return continuation[s] <= m + stop_tol; }
};

namespace detail {

struct StepTerms {
    double gamma;
    double factor;
};

inline StepTerms step_terms(const Scenario& sc) {
    return {discount_per_step(sc), step_reward_factor(sc)};
}

inline double expect(const std::vector<double>& row, const std::vector<double>& v) {
    double acc = 0.0;
    for (std::size_t t = 0; t < row.size(); ++t) acc += row[t] * v[t];
    return acc;
}

inline double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

} // namespace detail

/**
 * Value iteration for the restricted Bellman equation
 *   V(s) = max(m, r(s) + gamma E V(s'))   if s is switchable,
 *   V(s) = r(s) + gamma E V(s')           otherwise.
 *
 * An optional warm start speeds up repeated solves along a bisection.
 */
inline SnellSolution solve_snell(const ArmModel& arm, const Scenario& sc, GainSpec gain,
                                 const SolverOptions& opts = {},
                                 const std::vector<double>* warm_start = nullptr) {
    if (gain.m < 0.0 || !std::isfinite(gain.m))
        throw DomainError("retirement level m must be finite and nonnegative");
    const auto [gamma, factor] = detail::step_terms(sc);
    const std::size_t n = arm.size();

    std::vector<double> v(n, gain.m);
    if (warm_start && warm_start->size() == n) v = *warm_start;
    std::vector<double> next(n), cont(n);

    // Stop once the contraction bound residual * gamma / (1 - gamma) is below tol_v.
    const double scale = gamma / one_minus_discount(sc.beta, sc.delta);
    double residual = std::numeric_limits<double>::infinity();
    long sweeps = 0;
    while (sweeps < opts.max_iter) {
        for (std::size_t s = 0; s < n; ++s) {
            cont[s] = arm.reward_rate[s] * factor + gamma * detail::expect(arm.kernel[s], v);
            next[s] = arm.switchable[s] ? std::max(gain.m, cont[s]) : cont[s];
        }
        residual = detail::sup_distance(next, v);
        v.swap(next);
        ++sweeps;
        if (residual * scale <= opts.tol_v) break;
    }
    if (residual * scale > opts.tol_v)
        throw SolverError("value iteration did not converge", residual, sweeps);

    SnellSolution sol;
    sol.m = gain.m;
    sol.residual = residual;
    sol.sweeps = sweeps;
    sol.stop_tol = 10.0 * opts.tol_v;
    sol.value = v;
    sol.continuation.resize(n);
    sol.stop_region.assign(n, false);
    sol.phi.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t s = 0; s < n; ++s) {
        sol.continuation[s] = arm.reward_rate[s] * factor + gamma * detail::expect(arm.kernel[s], v);
        if (arm.switchable[s]) {
            sol.stop_region[s] = sol.continuation[s] <= gain.m + sol.stop_tol;
            sol.phi[s] = v[s] - gain.m;
        }
    }
    return sol;
}

/// Backward-induction solution of the stopping problem truncated at a horizon.
struct FiniteSnellSolution {
    /// value[n][s] for local time n in [0, horizon]; value[horizon][s] = m.
    std::vector<std::vector<double>> value;
    std::vector<std::vector<bool>> stop;
    double m = 0.0;
    long horizon = 0;
};

/**
 * Exact finite-horizon alternative to solve_snell. The arm is retired at the
 * horizon, which plays the role of the point at infinity.
 */
inline FiniteSnellSolution solve_snell_finite(const ArmModel& arm, const Scenario& sc, GainSpec gain,
                                              long horizon) {
    if (horizon < 0) throw DomainError("horizon must be nonnegative");
    const auto [gamma, factor] = detail::step_terms(sc);
    const std::size_t n = arm.size();
    FiniteSnellSolution sol;
    sol.m = gain.m;
    sol.horizon = horizon;
    sol.value.assign(horizon + 1, std::vector<double>(n, gain.m));
    sol.stop.assign(horizon + 1, std::vector<bool>(n, true));
    for (long t = horizon - 1; t >= 0; --t) {
        for (std::size_t s = 0; s < n; ++s) {
            const double cont =
                arm.reward_rate[s] * factor + gamma * detail::expect(arm.kernel[s], sol.value[t + 1]);
            const bool stop = arm.switchable[s] && cont <= gain.m;
            sol.stop[t][s] = stop;
            sol.value[t][s] = stop ? gain.m : cont;
        }
    }
    return sol;
}

/**
 * Descriptor of a hitting-time stopping rule started at a feasible instant.
 *
 * The rule stops at the start if stop_now, and otherwise at the first later
 * instant whose state is flagged in stop_at. If it never stops along the
 * supplied path the horizon (the path length) is returned.
 */
struct StoppingRule {
    bool stop_now = false;
    std::vector<bool> stop_at;

    long first_stop(std::span<const StateId> path) const {
        if (stop_now) return 0;
        for (std::size_t n = 1; n < path.size(); ++n)
            if (stop_at[path[n]]) return static_cast<long>(n);
        return static_cast<long>(path.size());
    }
};

/// First entrance to the optimal stopping region at or after the start.
inline StoppingRule sigma(const SnellSolution& sol, StateId from_state) {
    StoppingRule rule;
    rule.stop_now = sol.stop_if_feasible(from_state);
    rule.stop_at = sol.stop_region;
    return rule;
}

/**
 * First feasible instant at which lambda times the value is no more than the
 * retirement payoff. Coincides with sigma at lambda = 1. The value at a
 * feasible instant is max(m, continuation).
 */
inline StoppingRule d_lambda(const SnellSolution& sol, const ArmModel& arm, double lambda,
                             StateId from_state) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in (0, 1]");
    StoppingRule rule;
    const double here = std::max(sol.m, sol.continuation[from_state]);
    rule.stop_now = lambda * here <= sol.m + sol.stop_tol;
    rule.stop_at.assign(arm.size(), false);
    for (std::size_t s = 0; s < arm.size(); ++s)
        rule.stop_at[s] = arm.switchable[s] &&
                          lambda * std::max(sol.m, sol.continuation[s]) <= sol.m + sol.stop_tol;
    return rule;
}

/// Optimal excess over immediate retirement at a switchable state.
inline double phi_value(const ArmModel& arm, const Scenario& sc, double m, StateId state,
                        const SolverOptions& opts = {}) {
    if (!arm.switchable.at(state))
        throw DomainError("phi is defined at switchable states only; state '" +
                          arm.state_names[state] + "' is not switchable");
    const auto sol = solve_snell(arm, sc, GainSpec{m}, opts);
    return sol.value[state] - m;
}

/**
 * E[gamma^sigma | s] for every state, with sigma the solution's stopping rule
 * started at s (stopping at once when s is in the stop region).
 */
inline std::vector<double> discount_at_stop(const ArmModel& arm, const Scenario& sc,
                                            const SnellSolution& sol, double tol = 1e-13) {
    const double gamma = discount_per_step(sc);
    const std::size_t n = arm.size();
    std::vector<double> h(n, 0.0), next(n);
    for (long it = 0; it < 10'000'000; ++it) {
        for (std::size_t s = 0; s < n; ++s)
            next[s] = sol.stop_region[s] ? 1.0 : gamma * detail::expect(arm.kernel[s], h);
        const double d = detail::sup_distance(next, h);
        h.swap(next);
        if (d <= tol * (1.0 - gamma)) break;
    }
    return h;
}

} // namespace rmab
