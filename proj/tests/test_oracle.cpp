#include "suite.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rmab;
using namespace rmab::testing;

TEST(ProductMDP, SingleArmIsTheArm) {
    const auto sc = make_scenario({mixing_arm()});
    const auto mdp = build_product_mdp(sc);
    EXPECT_EQ(mdp.size(), 4u);
    for (const auto& acts : mdp.actions) EXPECT_EQ(acts.size(), 1u);
}

TEST(ProductMDP, TwoUnrestrictedTwoStateArms) {
    const auto sc = make_scenario({flip_arm(), make_arm("b", {}, {0.5, 2.0}, {{0.25, 0.75}, {0.5, 0.5}})});
    const auto mdp = build_product_mdp(sc);
    EXPECT_EQ(mdp.size(), 4u);
    for (std::size_t x = 0; x < mdp.size(); ++x) {
        EXPECT_EQ(mdp.actions[x].size(), 2u);
        EXPECT_EQ(mdp.committed[x], -1);
    }
}

TEST(ProductMDP, NonpreemptiveCommitmentStates) {
    // The compiled arm has 2S states; its S committed states add one commitment copy each.
    const auto np = restrict(rising_arm(), RestrictionSpec::nonpreemptive());
    const auto sc = make_scenario({np, flip_arm()});
    const auto mdp = build_product_mdp(sc);
    std::size_t committed = 0, singletons = 0;
    for (std::size_t x = 0; x < mdp.size(); ++x) {
        committed += mdp.committed[x] >= 0;
        singletons += mdp.actions[x].size() == 1;
        ASSERT_FALSE(mdp.actions[x].empty());
    }
    EXPECT_EQ(mdp.size(), 6u * 2u + 3u * 2u);
    EXPECT_EQ(committed, 3u * 2u);
    EXPECT_EQ(singletons, committed);
    for (std::size_t x = 0; x < mdp.size(); ++x)
        for (const auto& act : mdp.actions[x]) {
            double total = 0.0;
            for (const auto& tr : act.transitions) total += tr.prob;
            EXPECT_NEAR(total, 1.0, 1e-15);
        }
}

TEST(ProductMDP, SizeCap) {
    const auto big = restrict(mixing_arm(), RestrictionSpec::integer_grid(60));
    const auto sc = make_scenario({big, big, big});
    try {
        build_product_mdp(sc);
        FAIL() << "expected SizeError";
    } catch (const SizeError& e) {
        EXPECT_EQ(e.count(), 240u * 240u * 240u * 3u);
    }
}

TEST(OptimalValue, DominantConstantArm) {
    const auto sc = make_scenario({steady_arm(1.0), steady_arm(2.0)}, 1.0, 0.2);
    const double want = 2.0 * (1.0 - std::pow(discount_per_step(sc), sc.horizon_steps));
    EXPECT_NEAR(optimal_value(build_product_mdp(sc)), want, 1e-12);
}

TEST(OptimalValue, SingleDeterioratingArm) {
    const auto arm = decay_arm();
    const auto sc = make_scenario({arm});
    // Exact discounted reward of the arm's own path, by forward propagation.
    std::vector<double> dist{1.0, 0.0, 0.0};
    double want = 0.0, disc = 1.0;
    for (long t = 0; t < sc.horizon_steps; ++t) {
        std::vector<double> next(3, 0.0);
        for (int s = 0; s < 3; ++s) {
            want += disc * dist[s] * arm.reward_rate[s] * step_reward_factor(sc);
            for (int u = 0; u < 3; ++u) next[u] += dist[s] * arm.kernel[s][u];
        }
        dist.swap(next);
        disc *= discount_per_step(sc);
    }
    EXPECT_NEAR(optimal_value(build_product_mdp(sc)), want, 1e-12);
}

TEST(OptimalValue, AgreesWithExhaustiveTreeSearch) {
    const auto a = restrict(flip_arm(), RestrictionSpec::integer_grid(2));
    const auto b = restrict(make_arm("b", {"up", "down"}, {2.5, 0.0}, {{0.75, 0.25}, {0.5, 0.5}}),
                            RestrictionSpec::state_based({0}));
    const auto sc = make_scenario({a, b});
    const auto mdp = build_product_mdp(sc);
    const long h = 12;
    EXPECT_NEAR(optimal_value(mdp, h), exhaustive_tree_search(sc, h), 1e-12);
    EXPECT_THROW(exhaustive_tree_search(sc, 40), SizeError);
}

TEST(EvaluatePolicy, IndexPolicyOnDominantScenario) {
    const auto sc = make_scenario({steady_arm(1.0), steady_arm(2.0)});
    const auto tables = compute_index_tables(sc);
    const auto mdp = build_product_mdp(sc);
    EXPECT_NEAR(evaluate_policy_exact(mdp, tables, PolicySpec::gittins()).value, optimal_value(mdp), 1e-12);
}

TEST(EvaluatePolicy, RoundRobinClosedForm) {
    const auto sc = make_scenario({steady_arm(1.0), steady_arm(2.0)});
    const auto tables = compute_index_tables(sc);
    const double g = discount_per_step(sc), f = step_reward_factor(sc);
    double want = 0.0;
    for (long t = 0; t < sc.horizon_steps; ++t) want += std::pow(g, double(t)) * (t % 2 == 0 ? 1.0 : 2.0) * f;
    const auto mdp = build_product_mdp(sc);
    const double rr = evaluate_policy_exact(mdp, tables, PolicySpec::round_robin()).value;
    EXPECT_NEAR(rr, want, 1e-12);
    EXPECT_LT(rr, optimal_value(mdp) - 0.1);
}

TEST(EvaluatePolicy, RandomAveragesOverActions) {
    // With constant arms the value is the weighted average rate.
    const auto sc = make_scenario({steady_arm(1.0), steady_arm(2.0)});
    const auto tables = compute_index_tables(sc);
    const auto w = random_policy_weights(3, 2);
    const double want = (w[0] * 1.0 + w[1] * 2.0) * (1.0 - std::pow(discount_per_step(sc), sc.horizon_steps));
    EXPECT_NEAR(evaluate_policy_exact(sc, tables, PolicySpec::random(3), sc.horizon_steps).value, want, 1e-12);
}

TEST(EnvelopeFormula, SingleConstantArm) {
    const auto sc = make_scenario({steady_arm(1.8)});
    const auto tables = compute_index_tables(sc);
    EXPECT_NEAR(envelope_formula_value(sc, tables), 1.8 * (1.0 - std::pow(discount_per_step(sc), sc.horizon_steps)),
                1e-8);
}

TEST(EnvelopeFormula, SingleDeterioratingArm) {
    const auto sc = make_scenario({decay_arm()});
    const auto tables = compute_index_tables(sc);
    EXPECT_NEAR(envelope_formula_value(sc, tables), optimal_value(build_product_mdp(sc)), 1e-8);
}

TEST(EnvelopeFormula, MixedRestrictionsMatchOptimum) {
    const auto sc = make_scenario({breakdown_sb(), restrict(rising_arm(), RestrictionSpec::integer_grid(2))});
    const auto tables = compute_index_tables(sc);
    EXPECT_NEAR(envelope_formula_value(sc, tables), optimal_value(build_product_mdp(sc)), 1e-6);
}

TEST(Restart, ClosedForms) {
    const auto c = steady_arm(1.8);
    EXPECT_NEAR(classical_gittins_restart(c, make_scenario({c}, 2.0), 0), 0.9, 1e-12);
    const auto d = decay_arm();
    const auto sc = make_scenario({d});
    for (StateId s = 0; s < 3; ++s) EXPECT_NEAR(classical_gittins_restart(d, sc, s), d.reward_rate[s], 1e-12);
    const auto f = flip_arm();
    const auto fsc = make_scenario({f});
    for (StateId s = 0; s < 2; ++s)
        EXPECT_NEAR(classical_gittins_restart(f, fsc, s), gittins_index(f, fsc, s).value, 1e-8);
    EXPECT_THROW(classical_gittins_restart(breakdown_sb(), sc, 0), DomainError);
}

TEST(Enumerate, ConstantAndDeteriorating) {
    const auto c = steady_arm(1.8);
    const auto csc = make_scenario({c}, 1.0, 1.0);
    EXPECT_NEAR(enumerate_feasible_stopping(c, csc, 0, 25).best, 1.8, 1e-12);

    // Strictly deteriorating without self-loops: stopping after one step is the unique maximizer.
    const auto d = make_arm("steps", {}, {3.0, 2.0, 1.0}, {{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}});
    const auto dsc = make_scenario({d}, 1.0, 1.0);
    const auto best = enumerate_feasible_stopping(d, dsc, 0, 25);
    EXPECT_NEAR(best.best, 3.0, 1e-12);
    EXPECT_TRUE(best.best_stop_set[1]);
    EXPECT_NEAR(enumerate_feasible_stopping(decay_arm(), dsc, 0, 25).best, 3.0, 1e-12);
}

TEST(Enumerate, PeakArmOnEvenGridStopsAfterThePeak) {
    const auto arm = restrict(peak_arm(), RestrictionSpec::integer_grid(2));
    const auto sc = make_scenario({arm}, 1.0, 1.0);
    const auto best = enumerate_feasible_stopping(arm, sc, arm.initial_state, 25);
    const auto id = [&](const char* name) { return arm.find_state(name); };
    EXPECT_TRUE(best.best_stop_set[id("p3@0")]);
    EXPECT_FALSE(best.best_stop_set[id("p1@0")]);
    EXPECT_FALSE(best.best_stop_set[id("p2@0")]);
    EXPECT_NEAR(best.best, gittins_index(arm, sc, arm.initial_state).value, 1e-6);
}

TEST(Enumerate, TimeDependentRulesDoNotBeatTheIndex) {
    const auto arm = make_arm("pair", {"a", "b"}, {2.0, 0.5}, {{0.25, 0.75}, {0.5, 0.5}});
    const auto sc = make_scenario({arm}, 1.0, 3.0);
    for (StateId s : {0, 1}) {
        const auto td = enumerate_feasible_stopping(arm, sc, s, 8, RuleFamily::TimeDependent);
        const auto st = enumerate_feasible_stopping(arm, sc, s, 8);
        EXPECT_EQ(td.rules, std::size_t{1} << 14);
        EXPECT_GE(td.best, st.best - 1e-15);
        EXPECT_NEAR(td.best, gittins_index(arm, sc, s).value, 1e-8);
    }
    EXPECT_THROW(enumerate_feasible_stopping(arm, sc, 0, 25, RuleFamily::TimeDependent), SizeError);
}

TEST(OracleReport, SuiteInvariants) {
    for (const auto& [name, sc] : acceptance_suite()) {
        const auto tables = compute_index_tables(sc);
        const auto rep = make_oracle_report(sc, tables, sc.horizon_steps);
        EXPECT_LE(rep.index_value, rep.optimal + 1e-12) << name;
        EXPECT_LE(rep.index_gap(), 1e-8) << name;
        EXPECT_LE(rep.envelope_gap(), 1e-6) << name;
        // The index policy's value equals its deteriorating surrogate.
        EXPECT_NEAR(rep.index_value, rep.index_surrogate, 1e-8) << name;
        ASSERT_EQ(rep.baselines.size(), 2 + sc.arms.size() + 5);
        for (const auto& b : rep.baselines) {
            EXPECT_LE(b.value, rep.index_value + 1e-8) << name << " " << b.label;
            EXPECT_LE(b.surrogate, rep.index_surrogate + 1e-8) << name << " " << b.label;
        }
    }
}
