#include "suite.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rmab;
using namespace rmab::testing;

namespace {

/// Rates 2 then 1 (absorbing), leaving the first state with probability 0.3 per step.
ArmModel two_step_decay() {
    return make_arm("decay2", {"high", "low"}, {2.0, 1.0}, {{0.7, 0.3}, {0.0, 1.0}});
}

/// Every path of the arm of length n started in `from`.
void all_paths(const ArmModel& arm, StateId from, int n, std::vector<std::vector<StateId>>& out) {
    std::vector<std::vector<StateId>> cur{{from}};
    for (int k = 1; k < n; ++k) {
        std::vector<std::vector<StateId>> next;
        for (const auto& p : cur)
            for (std::size_t t = 0; t < arm.size(); ++t)
                if (arm.kernel[p.back()][t] > 0.0) {
                    auto q = p;
                    q.push_back(static_cast<StateId>(t));
                    next.push_back(std::move(q));
                }
        cur.swap(next);
    }
    out = cur;
}

} // namespace

TEST(SolveSnell, ConstantArmRetiresWhenLevelDominates) {
    const auto arm = steady_arm(1.8);
    const auto sc = make_scenario({arm});
    for (double m : {1.8, 2.0, 5.0}) {
        const auto sol = solve_snell(arm, sc, GainSpec{m});
        EXPECT_NEAR(sol.value[0], m, 1e-10);
        EXPECT_TRUE(sol.stop_region[0]);
    }
}

TEST(SolveSnell, ConstantArmNeverRetiresAtZero) {
    const auto arm = steady_arm(1.8);
    const auto sc = make_scenario({arm});
    const auto sol = solve_snell(arm, sc, GainSpec{0.0});
    EXPECT_NEAR(sol.value[0], 1.8, 1e-9);
    EXPECT_FALSE(sol.stop_region[0]);
    // The finite-horizon solve gives the truncated value c / beta * (1 - gamma^H).
    const long h = 40;
    const auto fin = solve_snell_finite(arm, sc, GainSpec{0.0}, h);
    EXPECT_NEAR(fin.value[0][0], 1.8 * (1.0 - std::pow(discount_per_step(sc), h)), 1e-12);
}

TEST(SolveSnell, DeterioratingArmStopsAtLowState) {
    const auto arm = two_step_decay();
    const auto sc = make_scenario({arm}, 1.0, 0.1);
    const auto sol = solve_snell(arm, sc, GainSpec{1.5});
    EXPECT_FALSE(sol.stop_region[0]);
    EXPECT_TRUE(sol.stop_region[1]);
    // Brute force over every stationary retirement rule from each state.
    for (StateId s : {0, 1}) {
        const auto best = enumerate_retirement_rules(arm, sc, s, 1.5, 600);
        EXPECT_NEAR(best.best, sol.value[s], 1e-9);
    }
    const auto best = enumerate_retirement_rules(arm, sc, 0, 1.5, 600);
    EXPECT_FALSE(best.best_stop_now);
    EXPECT_TRUE(best.best_stop_set[1]);
}

TEST(SolveSnell, BellmanResidual) {
    for (const auto& arm : {mixing_arm(), breakdown_sb(), compile_restriction(RestrictionSpec::integer_grid(3), peak_arm())}) {
        const auto sc = make_scenario({arm});
        const double gamma = discount_per_step(sc), f = step_reward_factor(sc);
        const auto sol = solve_snell(arm, sc, GainSpec{1.0});
        for (std::size_t s = 0; s < arm.size(); ++s) {
            double ev = 0.0;
            for (std::size_t t = 0; t < arm.size(); ++t) ev += arm.kernel[s][t] * sol.value[t];
            const double cont = arm.reward_rate[s] * f + gamma * ev;
            const double want = arm.switchable[s] ? std::max(1.0, cont) : cont;
            EXPECT_NEAR(sol.value[s], want, 1e-10);
            if (arm.switchable[s]) EXPECT_GE(sol.value[s], 1.0);
        }
    }
}

TEST(SolveSnell, Errors) {
    const auto arm = flip_arm();
    const auto sc = make_scenario({arm});
    EXPECT_THROW(solve_snell(arm, sc, GainSpec{-1.0}), DomainError);
    try {
        solve_snell(arm, sc, GainSpec{0.5}, SolverOptions{1e-10, 2});
        FAIL() << "expected SolverError";
    } catch (const SolverError& e) {
        EXPECT_GT(e.residual(), 0.0);
        EXPECT_EQ(e.sweeps(), 2);
    }
}

TEST(SolveSnell, FiniteHorizonConvergesToInfinite) {
    const auto arm = breakdown_sb();
    const auto sc = make_scenario({arm});
    const auto inf = solve_snell(arm, sc, GainSpec{1.2});
    const auto fin = solve_snell_finite(arm, sc, GainSpec{1.2}, sc.horizon_steps);
    for (std::size_t s = 0; s < arm.size(); ++s) EXPECT_NEAR(fin.value[0][s], inf.value[s], 1e-9);
}

TEST(Sigma, StopsAtOnceInsideRegion) {
    const auto arm = two_step_decay();
    const auto sc = make_scenario({arm}, 1.0, 0.1);
    const auto sol = solve_snell(arm, sc, GainSpec{1.5});
    const auto rule = sigma(sol, 1);
    EXPECT_TRUE(rule.stop_now);
    const std::vector<StateId> path{1, 1, 1};
    EXPECT_EQ(rule.first_stop(path), 0);
}

TEST(Sigma, EmptyRegionRunsToHorizon) {
    const auto arm = steady_arm();
    const auto sc = make_scenario({arm});
    const auto rule = sigma(solve_snell(arm, sc, GainSpec{0.0}), 0);
    const std::vector<StateId> path(17, 0);
    EXPECT_EQ(rule.first_stop(path), 17);
}

TEST(Sigma, MatchesExhaustiveSearchOnThresholdChain) {
    // Unit grid step: 30 steps leave a tail below 1e-12.
    const auto arm = decay_arm();
    const auto sc = make_scenario({arm}, 1.0, 1.0);
    for (double m : {0.7, 1.5, 2.2, 2.9}) {
        const auto sol = solve_snell(arm, sc, GainSpec{m});
        for (StateId s = 0; s < 3; ++s) {
            const auto best = enumerate_retirement_rules(arm, sc, s, m, 30);
            const double achieved = retirement_payoff(arm, sc, sigma(sol, s), s, m, 30);
            EXPECT_NEAR(achieved, best.best, 1e-9) << "m=" << m << " s=" << s;
            EXPECT_NEAR(sol.value[s], best.best, 1e-9);
        }
    }
}

TEST(Sigma, OptimalAmongFeasibleRulesWithRestrictions) {
    // Optimality of the first entrance rule and Z = G at the stopping time.
    using R = RestrictionSpec;
    for (const auto& base : {flip_arm(), decay_arm(), rising_arm(), breakdown_arm()}) {
        for (const auto& arm : {compile_restriction(R::integer_grid(2), base), compile_restriction(R::nonpreemptive(), base),
                                compile_restriction(R::state_based({0, static_cast<StateId>(base.size() - 1)}), base)}) {
            const auto sc = make_scenario({arm}, 1.0, 1.5);
            for (double frac : {0.2, 0.5, 0.8}) {
                const double m = frac * arm.max_rate();
                const auto sol = solve_snell(arm, sc, GainSpec{m});
                for (std::size_t s = 0; s < arm.size(); ++s) {
                    if (!arm.switchable[s]) continue;
                    const auto from = static_cast<StateId>(s);
                    const auto best = enumerate_retirement_rules(arm, sc, from, m, 20);
                    EXPECT_NEAR(retirement_payoff(arm, sc, sigma(sol, from), from, m, 20), best.best, 1e-9);
                }
                for (std::size_t s = 0; s < arm.size(); ++s)
                    if (sol.stop_region[s]) EXPECT_NEAR(sol.value[s], m, sol.stop_tol);
            }
        }
    }
}

TEST(Phi, IndifferenceAndSigns) {
    const auto arm = steady_arm(1.8);
    const auto sc = make_scenario({arm});
    EXPECT_NEAR(phi_value(arm, sc, 1.8, 0), 0.0, 1e-9);
    EXPECT_GT(phi_value(flip_arm(), make_scenario({flip_arm()}), 0.0, 0), 0.0);

    // Between the two indices the low state retires and the high state continues.
    const auto flip = flip_arm();
    const auto fsc = make_scenario({flip});
    const double lo = gittins_index(flip, fsc, 0).value, hi = gittins_index(flip, fsc, 1).value;
    const double m = 0.5 * (lo + hi);
    EXPECT_LE(phi_value(flip, fsc, m, 0), 1e-10);
    EXPECT_GT(phi_value(flip, fsc, m, 1), 0.0);
    // Same pattern from brute force.
    EXPECT_TRUE(enumerate_retirement_rules(flip, fsc, 0, m, 200).best_stop_now);
    EXPECT_FALSE(enumerate_retirement_rules(flip, fsc, 1, m, 200).best_stop_now);
}

TEST(Phi, NonSwitchableThrows) {
    const auto arm = breakdown_sb();
    EXPECT_THROW(phi_value(arm, make_scenario({arm}), 1.0, arm.find_state("repair")), DomainError);
}

TEST(DLambda, OneCoincidesWithSigma) {
    for (const auto& arm : {decay_arm(), flip_arm(), breakdown_sb(), mixing_arm()}) {
        const auto sc = make_scenario({arm});
        for (double m : {0.3, 1.0, 2.0}) {
            const auto sol = solve_snell(arm, sc, GainSpec{m});
            for (std::size_t s = 0; s < arm.size(); ++s) {
                const auto a = sigma(sol, static_cast<StateId>(s));
                const auto b = d_lambda(sol, arm, 1.0, static_cast<StateId>(s));
                EXPECT_EQ(a.stop_now, b.stop_now);
                EXPECT_EQ(a.stop_at, b.stop_at);
            }
        }
    }
}

TEST(DLambda, SmallLambdaStopsAtFirstFeasibleInstant) {
    const auto arm = breakdown_sb();
    const auto sc = make_scenario({arm});
    const auto sol = solve_snell(arm, sc, GainSpec{0.4});
    const auto rule = d_lambda(sol, arm, 1e-12, 0);
    EXPECT_TRUE(rule.stop_now);
    for (std::size_t s = 0; s < arm.size(); ++s) EXPECT_EQ(rule.stop_at[s], arm.switchable[s]);
    EXPECT_THROW(d_lambda(sol, arm, 0.0, 0), DomainError);
    EXPECT_THROW(d_lambda(sol, arm, 1.5, 0), DomainError);
}

TEST(DLambda, SmallerLambdaStopsNoLater) {
    const auto arm = decay_arm();
    const auto sc = make_scenario({arm});
    std::vector<std::vector<StateId>> paths;
    all_paths(arm, 0, 10, paths);
    for (double m : {0.5, 1.0, 1.8}) {
        const auto sol = solve_snell(arm, sc, GainSpec{m});
        const auto r1 = d_lambda(sol, arm, 1.0, 0);
        const auto r9 = d_lambda(sol, arm, 0.9, 0);
        for (const auto& p : paths) EXPECT_LE(r9.first_stop(p), r1.first_stop(p));
    }
}

TEST(ValueInM, NondecreasingAndConvex) {
    for (const auto& arm : {mixing_arm(), breakdown_sb(), compile_restriction(RestrictionSpec::nonpreemptive(), rising_arm())}) {
        const auto sc = make_scenario({arm});
        std::vector<std::vector<double>> v;
        const double top = 1.2 * arm.max_rate();
        for (int i = 0; i < 50; ++i) v.push_back(solve_snell(arm, sc, GainSpec{top * i / 49.0}).value);
        for (std::size_t s = 0; s < arm.size(); ++s) {
            for (int i = 0; i + 1 < 50; ++i) EXPECT_GE(v[i + 1][s], v[i][s] - 1e-9);
            for (int i = 1; i + 1 < 50; ++i) EXPECT_LE(v[i][s], 0.5 * (v[i - 1][s] + v[i + 1][s]) + 1e-9);
        }
    }
}

TEST(ValueInM, RightDerivativeIsDiscountAtStop) {
    const auto arm = mixing_arm();
    const auto sc = make_scenario({arm});
    const auto table = compute_index_table(arm, sc);
    const double delta = 1e-6;
    for (double m : {0.5, 1.3, 2.0, 2.7}) {
        bool near_index = false;
        for (double x : table.entry_index) near_index = near_index || std::abs(x - m) < 1e-3;
        if (near_index) continue;
        const auto a = solve_snell(arm, sc, GainSpec{m}, SolverOptions{1e-13, 1'000'000});
        const auto b = solve_snell(arm, sc, GainSpec{m + delta}, SolverOptions{1e-13, 1'000'000});
        const auto h = discount_at_stop(arm, sc, a);
        for (std::size_t s = 0; s < arm.size(); ++s)
            EXPECT_NEAR((b.value[s] - a.value[s]) / delta, h[s], 1e-5) << "m=" << m << " s=" << s;
    }
}

TEST(Martingale, OneStepDrift) {
    for (const auto& arm : {mixing_arm(), breakdown_sb(), compile_restriction(RestrictionSpec::integer_grid(2), peak_arm())}) {
        const auto sc = make_scenario({arm});
        const double gamma = discount_per_step(sc), f = step_reward_factor(sc);
        for (double m : {0.2, 1.0, 2.5}) {
            const auto sol = solve_snell(arm, sc, GainSpec{m});
            for (std::size_t s = 0; s < arm.size(); ++s) {
                double ev = 0.0;
                for (std::size_t t = 0; t < arm.size(); ++t) ev += arm.kernel[s][t] * sol.value[t];
                const double drift = arm.reward_rate[s] * f + gamma * ev - sol.value[s];
                EXPECT_LE(drift, 1e-9);
                if (!arm.switchable[s] || !sol.stop_region[s]) EXPECT_NEAR(drift, 0.0, 1e-9);
            }
        }
    }
}
