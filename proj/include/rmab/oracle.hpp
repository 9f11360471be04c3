#pragma once

#include "rmab/errors.hpp"
#include "rmab/index.hpp"
#include "rmab/model.hpp"
#include "rmab/policy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rmab {

// *******************************************************
// Product MDP over all arms
// *******************************************************

/**
 * The bandit as one MDP: a state is the tuple of arm states plus the arm that
 * is committed (its state is not switchable), and an action serves one arm.
 * Unserved arms are frozen.
 */
struct ProductMDP {
    struct Transition {
        std::size_t next;
        double prob;
    };
    struct Action {
        int arm;
        double reward;
        std::vector<Transition> transitions;
    };

    Scenario scenario;
    std::vector<std::vector<StateId>> tuples;
    std::vector<int> committed;
    std::vector<std::vector<Action>> actions;
    std::size_t initial = 0;
    double gamma = 0.0;

    std::size_t size() const noexcept { return tuples.size(); }
};

inline ProductMDP build_product_mdp(const Scenario& sc, std::size_t cap = 200'000) {
    const std::size_t d = sc.arms.size();
    if (d == 0) throw InvalidModel("scenario has no arms");
    std::size_t tuples = 1;
    for (const auto& arm : sc.arms) {
        if (tuples > cap) break;
        tuples *= arm.size();
    }
    if (tuples * d > cap) throw SizeError("product state space exceeds cap", tuples * d);

    std::vector<std::size_t> stride(d);
    std::size_t acc = 1;
    for (std::size_t k = 0; k < d; ++k) {
        stride[k] = acc;
        acc *= sc.arms[k].size();
    }
    const std::size_t slots = d + 1;
    auto encode = [&](const std::vector<StateId>& tuple, int committed) {
        std::size_t id = 0;
        for (std::size_t k = 0; k < d; ++k) id += stride[k] * tuple[k];
        return id * slots + static_cast<std::size_t>(committed + 1);
    };

    ProductMDP mdp;
    mdp.scenario = sc;
    mdp.gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);

    std::vector<long> dense(tuples * slots, -1);
    std::vector<StateId> tuple(d);
    for (std::size_t t = 0; t < tuples; ++t) {
        std::size_t rem = t;
        for (std::size_t k = 0; k < d; ++k) {
            tuple[k] = static_cast<StateId>(rem % sc.arms[k].size());
            rem /= sc.arms[k].size();
        }
        for (int c = -1; c < static_cast<int>(d); ++c) {
            if (c >= 0 && sc.arms[c].switchable[tuple[c]]) continue;
            dense[encode(tuple, c)] = static_cast<long>(mdp.tuples.size());
            mdp.tuples.push_back(tuple);
            mdp.committed.push_back(c);
        }
    }

    mdp.actions.resize(mdp.size());
    for (std::size_t x = 0; x < mdp.size(); ++x) {
        const auto& tup = mdp.tuples[x];
        const int c = mdp.committed[x];
        for (int a = 0; a < static_cast<int>(d); ++a) {
            if (c >= 0 && a != c) continue;
            const auto& arm = sc.arms[a];
            ProductMDP::Action act{a, arm.reward_rate[tup[a]] * factor, {}};
            auto next = tup;
            for (std::size_t s2 = 0; s2 < arm.size(); ++s2) {
                const double p = arm.kernel[tup[a]][s2];
                if (p <= 0.0) continue;
                next[a] = static_cast<StateId>(s2);
                const int c2 = arm.switchable[s2] ? -1 : a;
                act.transitions.push_back({static_cast<std::size_t>(dense[encode(next, c2)]), p});
            }
            mdp.actions[x].push_back(std::move(act));
        }
    }
    std::vector<StateId> init(d);
    for (std::size_t k = 0; k < d; ++k) init[k] = sc.arms[k].initial_state;
    mdp.initial = static_cast<std::size_t>(dense[encode(init, -1)]);
    return mdp;
}

/// Optimal expected discounted reward over `horizon` steps, by backward induction.
inline double optimal_value(const ProductMDP& mdp, long horizon) {
    std::vector<double> v(mdp.size(), 0.0), next(mdp.size());
    for (long t = 0; t < horizon; ++t) {
        for (std::size_t x = 0; x < mdp.size(); ++x) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& act : mdp.actions[x]) {
                double q = act.reward;
                for (const auto& tr : act.transitions) q += mdp.gamma * tr.prob * v[tr.next];
                best = std::max(best, q);
            }
            next[x] = best;
        }
        v.swap(next);
    }
    return v[mdp.initial];
}

inline double optimal_value(const ProductMDP& mdp) {
    return optimal_value(mdp, mdp.scenario.horizon_steps);
}

/**
 * Expectimax over the full history tree, without merging states. Independent
 * of the product MDP's indexing; only usable for tiny instances.
 */
inline double exhaustive_tree_search(const Scenario& sc, long horizon, double node_cap = 1e8) {
    const std::size_t d = sc.arms.size();
    double branching = 0.0;
    for (const auto& arm : sc.arms) {
        std::size_t widest = 0;
        for (const auto& row : arm.kernel)
            widest = std::max<std::size_t>(widest, std::count_if(row.begin(), row.end(),
                                                                 [](double p) { return p > 0.0; }));
        branching += static_cast<double>(widest);
    }
    if (std::pow(branching, static_cast<double>(horizon)) > node_cap)
        throw SizeError("history tree too large", static_cast<std::size_t>(
                                                      std::min(1e18, std::pow(branching, double(horizon)))));
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);

    std::vector<StateId> states(d);
    for (std::size_t k = 0; k < d; ++k) states[k] = sc.arms[k].initial_state;

    std::function<double(long, int)> search = [&](long depth, int committed) -> double {
        if (depth == horizon) return 0.0;
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < static_cast<int>(d); ++a) {
            if (committed >= 0 && a != committed) continue;
            const auto& arm = sc.arms[a];
            const StateId s = states[a];
            double q = arm.reward_rate[s] * factor;
            for (std::size_t s2 = 0; s2 < arm.size(); ++s2) {
                const double p = arm.kernel[s][s2];
                if (p <= 0.0) continue;
                states[a] = static_cast<StateId>(s2);
                q += gamma * p * search(depth + 1, arm.switchable[s2] ? -1 : a);
            }
            states[a] = s;
            best = std::max(best, q);
        }
        return best;
    };
    return search(0, -1);
}

// *******************************************************
// Exact policy evaluation
// *******************************************************

struct PolicyEvaluation {
    /// Expected discounted reward of the policy.
    double value = 0.0;
    std::vector<double> arm_value;
    /// Per arm: expected discounted reward of the deteriorating surrogate whose
    /// rate is beta times the lower envelope of the served arm.
    std::vector<double> arm_surrogate;
    double surrogate = 0.0;
    /// Expected discounted integral of beta * max_k envelope_k.
    double envelope_value = 0.0;
};

/**
 * Exact finite-horizon evaluation of a policy by forward propagation of the
 * distribution of the allocation state. Randomized policies are averaged over
 * their action probabilities.
 */
inline PolicyEvaluation evaluate_policy_exact(const Scenario& sc, const std::vector<IndexTable>& tables,
                                              const PolicySpec& policy, long horizon) {
    const PolicyContext ctx{sc, &tables};
    const std::size_t d = sc.arms.size();
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);
    const double one_minus = one_minus_discount(sc.beta, sc.delta);

    PolicyEvaluation ev;
    ev.arm_value.assign(d, 0.0);
    ev.arm_surrogate.assign(d, 0.0);

    using Dist = std::map<SystemState, double, DecisionKeyLess>;
    Dist dist{{initial_system_state(ctx), 1.0}};
    double disc = 1.0;
    for (long t = 0; t < horizon; ++t) {
        Dist next;
        for (const auto& [sys, p] : dist) {
            double max_env = 0.0;
            for (const auto& c : sys.arms) max_env = std::max(max_env, c.envelope);
            ev.envelope_value += disc * p * one_minus * max_env;

            for (const auto& [a, pa] : action_distribution(policy, sys, ctx)) {
                const auto& arm = sc.arms[a];
                const StateId s = sys.arms[a].state;
                const double w = disc * p * pa;
                ev.arm_value[a] += w * arm.reward_rate[s] * factor;
                ev.arm_surrogate[a] += w * one_minus * sys.arms[a].envelope;
                for (std::size_t s2 = 0; s2 < arm.size(); ++s2) {
                    const double q = arm.kernel[s][s2];
                    if (q <= 0.0) continue;
                    SystemState nxt = sys;
                    advance(nxt, a, static_cast<StateId>(s2), ctx);
                    nxt.arms[a].local_time = 0;
                    next[nxt] += p * pa * q;
                }
            }
        }
        dist.swap(next);
        disc *= gamma;
    }
    for (std::size_t k = 0; k < d; ++k) {
        ev.value += ev.arm_value[k];
        ev.surrogate += ev.arm_surrogate[k];
    }
    return ev;
}

inline PolicyEvaluation evaluate_policy_exact(const ProductMDP& mdp, const std::vector<IndexTable>& tables,
                                              const PolicySpec& policy) {
    return evaluate_policy_exact(mdp.scenario, tables, policy, mdp.scenario.horizon_steps);
}

/// Expected discounted integral of beta * max_k (lower envelope of arm k) under the index policy.
inline double envelope_formula_value(const Scenario& sc, const std::vector<IndexTable>& tables,
                                     long horizon) {
    return evaluate_policy_exact(sc, tables, PolicySpec::gittins(), horizon).envelope_value;
}

inline double envelope_formula_value(const Scenario& sc, const std::vector<IndexTable>& tables) {
    return envelope_formula_value(sc, tables, sc.horizon_steps);
}

// *******************************************************
// Single-arm oracles
// *******************************************************

/**
 * Classical index of an unrestricted arm by the restart-in-state formulation:
 * in every state one may continue or restart from the reference state. Solved
 * exactly by policy iteration; the value at the reference state is the index.
 */
inline double classical_gittins_restart(const ArmModel& arm, const Scenario& sc, StateId reference) {
    for (std::size_t s = 0; s < arm.size(); ++s)
        if (!arm.switchable[s]) throw DomainError("restart-in-state needs an unrestricted arm");
    const auto n = static_cast<Eigen::Index>(arm.size());
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);

    std::vector<bool> restart(n, false);
    Eigen::VectorXd v(n);
    for (int iter = 0; iter < 10'000; ++iter) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd b(n);
        for (Eigen::Index x = 0; x < n; ++x) {
            const StateId src = restart[x] ? reference : static_cast<StateId>(x);
            b(x) = arm.reward_rate[src] * factor;
            for (Eigen::Index y = 0; y < n; ++y) a(x, y) -= gamma * arm.kernel[src][y];
        }
        v = a.partialPivLu().solve(b);

        bool changed = false;
        for (Eigen::Index x = 0; x < n; ++x) {
            auto q = [&](StateId src) {
                double acc = arm.reward_rate[src] * factor;
                for (Eigen::Index y = 0; y < n; ++y) acc += gamma * arm.kernel[src][y] * v(y);
                return acc;
            };
            const double keep = q(static_cast<StateId>(x));
            const double jump = q(reference);
            const bool want = restart[x] ? jump >= keep - 1e-14 : jump > keep + 1e-14;
            if (want != restart[x]) {
                restart[x] = want;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return v(reference);
}

enum class RuleFamily {
    /// Hitting times of a fixed set of switchable states.
    Stationary,
    /// Arbitrary stop/continue maps on (local time, switchable state).
    TimeDependent,
};

struct StoppingEnumeration {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<bool> best_stop_set;
    std::vector<std::vector<bool>> best_time_rule;
    bool best_stop_now = false;
    std::size_t rules = 0;
};

namespace detail {

struct RuleSums {
    /// E sum_{t < tau} gamma^t rate(s_t)
    double reward = 0.0;
    /// E sum_{t < tau} gamma^t
    double time = 0.0;
};

/// Propagates the law of the state under a stop rule; stop(n, s) is consulted for n >= 1.
template <class StopFn>
RuleSums evaluate_rule(const ArmModel& arm, double gamma, StateId from, bool stop_now, long horizon,
                       StopFn&& stop) {
    RuleSums out;
    if (stop_now) return out;
    std::vector<double> dist(arm.size(), 0.0), next(arm.size());
    dist[from] = 1.0;
    double disc = 1.0;
    for (long n = 0; n < horizon; ++n) {
        if (n > 0)
            for (std::size_t s = 0; s < arm.size(); ++s)
                if (dist[s] > 0.0 && arm.switchable[s] && stop(n, static_cast<StateId>(s))) dist[s] = 0.0;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s < arm.size(); ++s) {
            if (dist[s] == 0.0) continue;
            out.reward += disc * dist[s] * arm.reward_rate[s];
            out.time += disc * dist[s];
            for (std::size_t s2 = 0; s2 < arm.size(); ++s2) next[s2] += dist[s] * arm.kernel[s][s2];
        }
        dist.swap(next);
        disc *= gamma;
    }
    return out;
}

template <class Score>
StoppingEnumeration enumerate_rules(const ArmModel& arm, const Scenario& sc, StateId from, long horizon,
                                    RuleFamily family, bool allow_stop_now, std::size_t cap,
                                    Score&& score) {
    const double gamma = discount_per_step(sc);
    std::vector<StateId> feasible;
    for (std::size_t s = 0; s < arm.size(); ++s)
        if (arm.switchable[s]) feasible.push_back(static_cast<StateId>(s));

    const std::size_t bits = family == RuleFamily::Stationary
                                 ? feasible.size()
                                 : feasible.size() * static_cast<std::size_t>(std::max(0L, horizon - 1));
    if (bits >= 63 || (std::size_t{1} << bits) > cap)
        throw SizeError("stopping-rule family exceeds cap", bits >= 63 ? ~std::size_t{0} : std::size_t{1} << bits);

    StoppingEnumeration out;
    std::vector<int> slot(arm.size(), -1);
    for (std::size_t i = 0; i < feasible.size(); ++i) slot[feasible[i]] = static_cast<int>(i);

    auto consider = [&](bool stop_now, std::uint64_t mask) {
        RuleSums sums;
        if (family == RuleFamily::Stationary) {
            sums = evaluate_rule(arm, gamma, from, stop_now, horizon,
                                 [&](long, StateId s) { return (mask >> slot[s]) & 1U; });
        } else {
            sums = evaluate_rule(arm, gamma, from, stop_now, horizon, [&](long n, StateId s) {
                return (mask >> ((n - 1) * feasible.size() + slot[s])) & 1U;
            });
        }
        ++out.rules;
        const double value = score(sums);
        if (value > out.best) {
            out.best = value;
            out.best_stop_now = stop_now;
            if (family == RuleFamily::Stationary) {
                out.best_stop_set.assign(arm.size(), false);
                for (std::size_t i = 0; i < feasible.size(); ++i)
                    out.best_stop_set[feasible[i]] = (mask >> i) & 1U;
            } else {
                out.best_time_rule.assign(horizon, std::vector<bool>(arm.size(), false));
                for (long n = 1; n < horizon; ++n)
                    for (std::size_t i = 0; i < feasible.size(); ++i)
                        out.best_time_rule[n][feasible[i]] = (mask >> ((n - 1) * feasible.size() + i)) & 1U;
            }
        }
    };
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) consider(false, mask);
    if (allow_stop_now) consider(true, 0);
    return out;
}

} // namespace detail

/**
 * Brute-force maximization of the reward rate
 *   E sum_{t<tau} gamma^t rate(s_t) / (beta E sum_{t<tau} gamma^t)
 * over feasible stopping rules tau >= 1 started in `from`, truncated at
 * `horizon`. The result is directly comparable with the Gittins index.
 */
inline StoppingEnumeration enumerate_feasible_stopping(const ArmModel& arm, const Scenario& sc,
                                                       StateId from, long horizon,
                                                       RuleFamily family = RuleFamily::Stationary,
                                                       std::size_t cap = std::size_t{1} << 20) {
    if (horizon < 1) throw DomainError("horizon must be at least one step");
    return detail::enumerate_rules(arm, sc, from, horizon, family, false, cap,
                                   [&](const detail::RuleSums& r) { return r.reward / (sc.beta * r.time); });
}

/**
 * Brute-force maximization of the retirement payoff
 *   E[sum_{t<tau} gamma^t r(s_t) + gamma^tau m]
 * over feasible rules tau >= 0 started at a feasible instant in `from`. The
 * horizon is a forced retirement point.
 */
inline StoppingEnumeration enumerate_retirement_rules(const ArmModel& arm, const Scenario& sc,
                                                      StateId from, double m, long horizon,
                                                      RuleFamily family = RuleFamily::Stationary,
                                                      std::size_t cap = std::size_t{1} << 20) {
    const double factor = step_reward_factor(sc);
    const double one_minus = one_minus_discount(sc.beta, sc.delta);
    return detail::enumerate_rules(arm, sc, from, horizon, family, true, cap,
                                   [&](const detail::RuleSums& r) {
                                       return factor * r.reward + m * (1.0 - one_minus * r.time);
                                   });
}

/// Retirement payoff of a given hitting rule, same conventions as enumerate_retirement_rules.
inline double retirement_payoff(const ArmModel& arm, const Scenario& sc, const StoppingRule& rule,
                                StateId from, double m, long horizon) {
    const auto sums = detail::evaluate_rule(arm, discount_per_step(sc), from, rule.stop_now, horizon,
                                            [&](long, StateId s) { return rule.stop_at[s]; });
    return step_reward_factor(sc) * sums.reward +
           m * (1.0 - one_minus_discount(sc.beta, sc.delta) * sums.time);
}

// *******************************************************
// Report
// *******************************************************

struct PolicyValue {
    std::string label;
    double value = 0.0;
    double surrogate = 0.0;
};

struct OracleReport {
    long horizon = 0;
    std::size_t product_states = 0;
    double optimal = 0.0;
    double index_value = 0.0;
    double index_surrogate = 0.0;
    double envelope_value = 0.0;
    std::vector<PolicyValue> baselines;

    double index_gap() const { return std::abs(index_value - optimal); }
    double envelope_gap() const { return std::abs(envelope_value - optimal); }
};

/// The baselines every report compares against.
inline std::vector<PolicySpec> baseline_policies(std::size_t arms, int random_seeds = 5) {
    std::vector<PolicySpec> out{PolicySpec::myopic(), PolicySpec::round_robin()};
    for (std::size_t k = 0; k < arms; ++k) out.push_back(PolicySpec::fixed({static_cast<int>(k)}));
    for (int s = 1; s <= random_seeds; ++s) out.push_back(PolicySpec::random(static_cast<std::uint64_t>(s)));
    return out;
}

inline OracleReport make_oracle_report(const Scenario& sc, const std::vector<IndexTable>& tables,
                                       long horizon, std::size_t cap = 200'000) {
    OracleReport report;
    report.horizon = horizon;
    const auto mdp = build_product_mdp(sc, cap);
    report.product_states = mdp.size();
    report.optimal = optimal_value(mdp, horizon);
    const auto idx = evaluate_policy_exact(sc, tables, PolicySpec::gittins(), horizon);
    report.index_value = idx.value;
    report.index_surrogate = idx.surrogate;
    report.envelope_value = idx.envelope_value;
    for (const auto& policy : baseline_policies(sc.arms.size())) {
        const auto ev = evaluate_policy_exact(sc, tables, policy, horizon);
        report.baselines.push_back({policy.label(), ev.value, ev.surrogate});
    }
    return report;
}

} // namespace rmab
