#pragma once

#include "rmab/errors.hpp"
#include "rmab/model.hpp"
#include "rmab/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

namespace rmab {

struct IndexOptions {
    /// Bisection stops when the bracket is narrower than tol_m_rel * max_rate / beta.
    double tol_m_rel = 1e-9;
    SolverOptions solver{1e-12, 1'000'000};
};

struct IndexResult {
    double value = 0.0;
    int iterations = 0;
    bool worthless = false;
};

/**
 * Gittins indices of one arm.
 *
 * entry_index[s] is the index of s computed as if the current instant were a
 * feasible switch point. For switchable states this is the index itself; for
 * a non-switchable state it is only used at local time 0, which is always
 * feasible. Along a path, non-switchable states carry the index of the last
 * feasible instant (see carried_index_step).
 */
struct IndexTable {
    std::vector<double> entry_index;
    std::vector<bool> switchable;
    std::vector<int> iterations;
    std::vector<bool> worthless;
    double tol_m = 0.0;

    std::size_t size() const noexcept { return entry_index.size(); }

    double index(StateId s) const {
        if (!switchable.at(s))
            throw DomainError("index requested at non-switchable state " + std::to_string(s));
        return entry_index[s];
    }

    double entry(StateId s) const { return entry_index.at(s); }
};

namespace detail {

inline double index_upper_bound(const ArmModel& arm, const Scenario& sc) {
    return arm.max_rate() / sc.beta;
}

/// Bisection on m for the sign change of continuation(s; m) - m.
inline IndexResult calibrate(const ArmModel& arm, const Scenario& sc, StateId state,
                             const IndexOptions& opts) {
    IndexResult out;
    const double upper = index_upper_bound(arm, sc);
    if (upper <= 0.0) {
        out.worthless = true;
        return out;
    }
    const double tol_m = opts.tol_m_rel * upper;

    auto sol = solve_snell(arm, sc, GainSpec{0.0}, opts.solver);
    if (sol.continuation[state] <= opts.solver.tol_v) {
        out.worthless = true;
        return out;
    }
    std::vector<double> warm = sol.value;
    double lo = 0.0, hi = upper;
    while (hi - lo > tol_m) {
        const double mid = 0.5 * (lo + hi);
        sol = solve_snell(arm, sc, GainSpec{mid}, opts.solver, &warm);
        warm = sol.value;
        if (sol.continuation[state] - mid > 0.0) lo = mid;
        else hi = mid;
        ++out.iterations;
    }
    out.value = 0.5 * (lo + hi);
    return out;
}

} // namespace detail

/**
 * Restricted Gittins index of a switchable state: the retirement level at
 * which retiring at once and continuing optimally are indifferent.
 */
inline IndexResult gittins_index(const ArmModel& arm, const Scenario& sc, StateId state,
                                 const IndexOptions& opts = {}) {
    if (!arm.switchable.at(state))
        throw DomainError("gittins_index requires a switchable state; '" + arm.state_names[state] +
                          "' is not (use the carried index)");
    return detail::calibrate(arm, sc, state, opts);
}

/// Index of every state of the arm.
inline IndexTable compute_index_table(const ArmModel& arm, const Scenario& sc,
                                      const IndexOptions& opts = {}) {
    IndexTable table;
    const std::size_t n = arm.size();
    table.entry_index.resize(n);
    table.iterations.resize(n);
    table.worthless.resize(n);
    table.switchable = arm.switchable;
    table.tol_m = opts.tol_m_rel * detail::index_upper_bound(arm, sc);
    for (std::size_t s = 0; s < n; ++s) {
        const auto r = detail::calibrate(arm, sc, static_cast<StateId>(s), opts);
        table.entry_index[s] = r.value;
        table.iterations[s] = r.iterations;
        table.worthless[s] = r.worthless;
    }
    return table;
}

inline std::vector<IndexTable> compute_index_tables(const Scenario& sc, const IndexOptions& opts = {}) {
    std::vector<IndexTable> tables;
    tables.reserve(sc.arms.size());
    for (const auto& arm : sc.arms) tables.push_back(compute_index_table(arm, sc, opts));
    return tables;
}

namespace detail {

/// Throws unless the restricted arm's feasible instants are a subset of the
/// unrestricted arm's along every coupled path started in `base`.
inline void check_nested(const ArmModel& restricted, const ArmModel& wider, StateId base) {
    if (restricted.base_size() != wider.base_size())
        throw DomainError("arms do not share base dynamics (different base state counts)");
    using Pair = std::pair<StateId, StateId>;
    std::map<Pair, bool> seen;
    std::vector<Pair> stack{{restricted.lift.at(base), wider.lift.at(base)}};
    seen[stack.back()] = true;
    bool first = true;
    while (!stack.empty()) {
        const auto [a, c] = stack.back();
        stack.pop_back();
        if (!first && restricted.switchable[a] && !wider.switchable[c])
            throw DomainError("restriction sets are not nested: '" + restricted.state_names[a] +
                              "' is feasible where '" + wider.state_names[c] + "' is not");
        first = false;
        for (std::size_t a2 = 0; a2 < restricted.size(); ++a2) {
            const double p = restricted.kernel[a][a2];
            if (p <= 0.0) continue;
            const StateId b2 = restricted.base_state[a2];
            StateId match = -1;
            for (std::size_t c2 = 0; c2 < wider.size(); ++c2) {
                if (wider.kernel[c][c2] > 0.0 && wider.base_state[c2] == b2) {
                    if (match >= 0) throw DomainError("augmented dynamics are not deterministic lifts");
                    match = static_cast<StateId>(c2);
                }
            }
            if (match < 0 || std::abs(wider.kernel[c][match] - p) > 1e-12)
                throw DomainError("arms do not share base dynamics");
            const Pair next{static_cast<StateId>(a2), match};
            if (!seen[next]) {
                seen[next] = true;
                stack.push_back(next);
            }
        }
    }
}

} // namespace detail

/**
 * Indices of the same base state under a restriction and under a wider one.
 * The first never exceeds the second: fewer feasible stopping times cannot
 * raise the supremal reward rate.
 */
inline std::pair<double, double> index_with_restriction_dominance(const ArmModel& restricted,
                                                                  const ArmModel& wider,
                                                                  const Scenario& sc,
                                                                  StateId base_state,
                                                                  const IndexOptions& opts = {}) {
    detail::check_nested(restricted, wider, base_state);
    const StateId a = restricted.lift.at(base_state);
    const StateId c = wider.lift.at(base_state);
    if (!restricted.switchable[a] || !wider.switchable[c])
        throw DomainError("base state must be switchable under both restrictions");
    return {gittins_index(restricted, sc, a, opts).value, gittins_index(wider, sc, c, opts).value};
}

/// Step 2 of the index definition: non-switchable states keep the last feasible index.
inline double carried_index_step(const IndexTable& table, double prev_carried, StateId new_state) {
    return table.switchable.at(new_state) ? table.entry_index[new_state] : prev_carried;
}

/// Running minimum of the index over feasible local instants.
struct LowerEnvelope {
    double value = std::numeric_limits<double>::infinity();
};

inline LowerEnvelope lower_envelope_update(LowerEnvelope env, double carried, bool is_feasible) {
    if (is_feasible) env.value = std::min(env.value, carried);
    return env;
}

/**
 * Both sides of the representation
 *   E sum_t gamma^t r(s_t) = sum_t gamma^t (1 - gamma) E[lower envelope at t],
 * in present-value units, by exact forward propagation of the joint law of
 * (state, envelope level) over `n_terms` steps from the initial state.
 */
inline std::pair<double, double> representation_check(const ArmModel& arm, const Scenario& sc,
                                                       const IndexTable& table, long n_terms) {
    const double tail = horizon_tail(sc.beta, sc.delta, arm.max_rate(), n_terms);
    if (tail > sc.tail_tol)
        throw DomainError("horizon tail " + std::to_string(tail) + " above tolerance");
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);
    const double one_minus = one_minus_discount(sc.beta, sc.delta);

    using Key = std::pair<StateId, double>;
    std::map<Key, double> dist{{{arm.initial_state, table.entry(arm.initial_state)}, 1.0}};
    double lhs = 0.0, rhs = 0.0, disc = 1.0;
    for (long t = 0; t < n_terms; ++t) {
        std::map<Key, double> next;
        for (const auto& [key, p] : dist) {
            const auto [s, env] = key;
            lhs += disc * p * arm.reward_rate[s] * factor;
            rhs += disc * p * one_minus * env;
            for (std::size_t s2 = 0; s2 < arm.size(); ++s2) {
                const double q = arm.kernel[s][s2];
                if (q <= 0.0) continue;
                const double env2 = arm.switchable[s2] ? std::min(env, table.entry_index[s2]) : env;
                next[{static_cast<StateId>(s2), env2}] += p * q;
            }
        }
        dist.swap(next);
        disc *= gamma;
    }
    return {lhs, rhs};
}

inline std::pair<double, double> representation_check(const ArmModel& arm, const Scenario& sc,
                                                       long n_terms, const IndexOptions& opts = {}) {
    return representation_check(arm, sc, compute_index_table(arm, sc, opts), n_terms);
}

} // namespace rmab
