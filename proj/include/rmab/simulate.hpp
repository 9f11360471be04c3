#pragma once

#include "rmab/errors.hpp"
#include "rmab/index.hpp"
#include "rmab/model.hpp"
#include "rmab/policy.hpp"
#include "rmab/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

namespace rmab {

struct SimResult {
    long n_paths = 0;
    double mean = 0.0;
    /// Sample standard deviation over sqrt(n_paths).
    double se = 0.0;
    std::vector<double> arm_mean;
    /// Mean local time T^k(H) of each arm at the horizon.
    std::vector<double> arm_occupancy;
    /// Largest per-path gap between the global-time and local-time (q_u) forms of each arm's reward.
    double max_q_discrepancy = 0.0;
};

struct SimOptions {
    /// 0 means one worker per hardware thread.
    unsigned threads = 0;
    long block = 1024;
};

namespace detail {

/// Running moments of a block of paths; merged with Chan's update so equal samples give zero spread.
struct Moments {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    std::vector<double> arm_mean;
    std::vector<double> arm_occupancy;
    double max_q = 0.0;

    void add(double x, const std::vector<double>& arm, const std::vector<long>& occ) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
        for (std::size_t k = 0; k < arm.size(); ++k) {
            arm_mean[k] += (arm[k] - arm_mean[k]) / static_cast<double>(n);
            arm_occupancy[k] += (static_cast<double>(occ[k]) - arm_occupancy[k]) / static_cast<double>(n);
        }
    }
};

inline Moments merge(const Moments& a, const Moments& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    Moments out = a;
    out.n = a.n + b.n;
    const double w = static_cast<double>(b.n) / static_cast<double>(out.n);
    const double delta = b.mean - a.mean;
    out.mean = a.mean + delta * w;
    out.m2 = a.m2 + b.m2 + delta * delta * static_cast<double>(a.n) * w;
    for (std::size_t k = 0; k < a.arm_mean.size(); ++k) {
        out.arm_mean[k] = a.arm_mean[k] + (b.arm_mean[k] - a.arm_mean[k]) * w;
        out.arm_occupancy[k] = a.arm_occupancy[k] + (b.arm_occupancy[k] - a.arm_occupancy[k]) * w;
    }
    out.max_q = std::max(a.max_q, b.max_q);
    return out;
}

/// Pairwise reduction in fixed order.
inline Moments reduce(const std::vector<Moments>& blocks, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) return blocks[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    return merge(reduce(blocks, lo, mid), reduce(blocks, mid, hi));
}

struct PathOutcome {
    double reward = 0.0;
    double envelope = 0.0;
    std::vector<double> arm_reward;
    std::vector<double> arm_reward_local;
    std::vector<long> occupancy;
};

/// One sample path without storing a trace.
inline void simulate_path(const PolicyContext& ctx, const PolicySpec& policy,
                          const std::vector<double>& random_weights, Rng& rng, long horizon,
                          PathOutcome& out) {
    const auto& sc = ctx.scenario;
    const std::size_t d = sc.arms.size();
    const double gamma = discount_per_step(sc);
    const double factor = step_reward_factor(sc);
    const double one_minus = one_minus_discount(sc.beta, sc.delta);

    out.reward = out.envelope = 0.0;
    out.arm_reward.assign(d, 0.0);
    out.arm_reward_local.assign(d, 0.0);
    out.occupancy.assign(d, 0);

    SystemState sys = initial_system_state(ctx);
    double disc = 1.0;
    for (long t = 0; t < horizon; ++t) {
        int a;
        if (policy.kind == PolicySpec::Kind::Random && sys.committed < 0) {
            a = rng.sample(random_weights);
        } else {
            a = action_distribution(policy, sys, ctx).front().first;
        }
        if (ctx.tables) {
            double max_env = 0.0;
            for (const auto& c : sys.arms) max_env = std::max(max_env, c.envelope);
            out.envelope += disc * one_minus * max_env;
        }
        const auto& arm = sc.arms[a];
        const StateId s = sys.arms[a].state;
        const double r = arm.reward_rate[s] * factor;
        out.reward += disc * r;
        out.arm_reward[a] += disc * r;
        // zeta(u) = t for local time u = T^a(t); q_u = gamma^(t - u).
        const long u = sys.arms[a].local_time;
        const double q = std::pow(gamma, static_cast<double>(t - u));
        out.arm_reward_local[a] += std::pow(gamma, static_cast<double>(u)) * q * r;

        advance(sys, a, rng.sample(arm.kernel[s]), ctx);
        disc *= gamma;
    }
    for (std::size_t k = 0; k < d; ++k) out.occupancy[k] = sys.arms[k].local_time;
}

enum class Estimand { Reward, Envelope };

inline SimResult run_monte_carlo(const Scenario& sc, const std::vector<IndexTable>* tables,
                                 const PolicySpec& policy, long n_paths, std::uint64_t seed, long horizon,
                                 Estimand what, const SimOptions& opts) {
    if (n_paths < 1) throw DomainError("n_paths must be at least 1");
    if (horizon < 0) throw DomainError("horizon must be nonnegative");
    if (policy.kind == PolicySpec::Kind::GittinsIndex && !tables)
        throw DomainError("the index policy needs index tables");
    const PolicyContext ctx{sc, tables};
    const std::size_t d = sc.arms.size();
    const auto weights = random_policy_weights(policy.seed, d);

    const long block = std::max(1L, opts.block);
    const std::size_t n_blocks = static_cast<std::size_t>((n_paths + block - 1) / block);
    std::vector<Moments> blocks(n_blocks);
    std::atomic<std::size_t> next_block{0};

    auto worker = [&] {
        PathOutcome path;
        for (std::size_t b; (b = next_block.fetch_add(1)) < n_blocks;) {
            Moments m;
            m.arm_mean.assign(d, 0.0);
            m.arm_occupancy.assign(d, 0.0);
            const long first = static_cast<long>(b) * block;
            const long last = std::min(n_paths, first + block);
            for (long i = first; i < last; ++i) {
                Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
                simulate_path(ctx, policy, weights, rng, horizon, path);
                for (std::size_t k = 0; k < d; ++k) {
                    const double scale = std::max(1.0, std::abs(path.arm_reward[k]));
                    m.max_q = std::max(m.max_q, std::abs(path.arm_reward[k] - path.arm_reward_local[k]) / scale);
                }
                m.add(what == Estimand::Reward ? path.reward : path.envelope, path.arm_reward, path.occupancy);
            }
            blocks[b] = std::move(m);
        }
    };
    unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_blocks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    const Moments total = reduce(blocks, 0, n_blocks);
    SimResult res;
    res.n_paths = n_paths;
    res.mean = total.mean;
    res.se = n_paths > 1 ? std::sqrt(total.m2 / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths))
                         : 0.0;
    res.arm_mean = total.arm_mean;
    res.arm_occupancy = total.arm_occupancy;
    res.max_q_discrepancy = total.max_q;
    return res;
}

} // namespace detail

/**
 * Monte Carlo estimate of the policy's expected discounted reward. Path i
 * uses stream i of the master seed, so results do not depend on threading.
 */
inline SimResult monte_carlo(const Scenario& sc, const std::vector<IndexTable>* tables,
                             const PolicySpec& policy, long n_paths, std::uint64_t seed, long horizon,
                             const SimOptions& opts = {}) {
    return detail::run_monte_carlo(sc, tables, policy, n_paths, seed, horizon, detail::Estimand::Reward,
                                   opts);
}

inline SimResult monte_carlo(const Scenario& sc, const std::vector<IndexTable>* tables,
                             const PolicySpec& policy, long n_paths, std::uint64_t seed) {
    return monte_carlo(sc, tables, policy, n_paths, seed, sc.horizon_steps);
}

/// Monte Carlo estimate of the envelope formula under the index policy.
inline SimResult estimate_envelope_value(const Scenario& sc, const std::vector<IndexTable>& tables,
                                         long n_paths, std::uint64_t seed, long horizon,
                                         const SimOptions& opts = {}) {
    return detail::run_monte_carlo(sc, &tables, PolicySpec::gittins(), n_paths, seed, horizon,
                                   detail::Estimand::Envelope, opts);
}

inline SimResult estimate_envelope_value(const Scenario& sc, const std::vector<IndexTable>& tables,
                                         long n_paths, std::uint64_t seed) {
    return estimate_envelope_value(sc, tables, n_paths, seed, sc.horizon_steps);
}

} // namespace rmab
