#pragma once

#include "rmab/rmab.hpp"

#include <algorithm>
#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rmab::cli {

enum ExitCode { Ok = 0, RuntimeFailure = 1, ValidationFailure = 2 };

struct RunConfig {
    std::string subcommand;
    std::string scenario;
    std::string policy = "gittins";
    double tol_m = 1e-9;
    double tol_v = 1e-12;
    long paths = 10'000;
    std::uint64_t seed = 1;
    std::string seeds;
    long horizon = 0;
    std::string out;
    std::string trace;
    double gap_tol = 1e-8;
};

/// Rejected command line or scenario; reported with exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

inline PolicySpec parse_policy(const std::string& text, std::size_t arms) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto ids = [&] {
        std::vector<int> out;
        std::stringstream ss(tail);
        for (std::string item; std::getline(ss, item, ',');) {
            std::size_t used = 0;
            int k = -1;
            try {
                k = std::stoi(item, &used);
            } catch (const std::exception&) {
            }
            if (used != item.size() || k < 0 || static_cast<std::size_t>(k) >= arms)
                throw UsageError("bad arm id '" + item + "' in policy '" + text + "'");
            if (std::find(out.begin(), out.end(), k) != out.end())
                throw UsageError("arm id " + item + " repeated in policy '" + text + "'");
            out.push_back(k);
        }
        return out;
    };
    if (head == "gittins") return PolicySpec::gittins(tail.empty() ? std::vector<int>{} : ids());
    if (head == "myopic" && tail.empty()) return PolicySpec::myopic();
    if (head == "round-robin" && tail.empty()) return PolicySpec::round_robin();
    if (head == "fixed" && !tail.empty()) return PolicySpec::fixed(ids());
    if (head == "random" && !tail.empty()) {
        try {
            std::size_t used = 0;
            const auto seed = std::stoull(tail, &used);
            if (used == tail.size()) return PolicySpec::random(seed);
        } catch (const std::exception&) {
        }
    }
    throw UsageError("unknown policy '" + text + "' (gittins | myopic | round-robin | fixed:i,j | random:SEED)");
}

inline std::vector<std::uint64_t> seed_list(const RunConfig& cfg) {
    if (cfg.seeds.empty()) return {cfg.seed};
    const auto colon = cfg.seeds.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument("range");
        const auto a = std::stoull(cfg.seeds.substr(0, colon));
        const auto b = std::stoull(cfg.seeds.substr(colon + 1));
        if (b < a) throw std::invalid_argument("range");
        std::vector<std::uint64_t> out;
        for (auto s = a; s <= b; ++s) out.push_back(s);
        return out;
    } catch (const std::exception&) {
        throw UsageError("--seeds expects A:B with A <= B");
    }
}

namespace detail {

inline std::ofstream open_csv(const std::string& path, const std::string& schema) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write '" + path + "'");
    f << "# rmab " << schema << '\n' << std::setprecision(17);
    return f;
}

/// Loads and validates; every problem is a validation failure.
inline Scenario checked_scenario(const RunConfig& cfg, std::ostream& err) {
    Scenario sc = load_scenario(cfg.scenario);
    if (cfg.horizon > 0) sc.horizon_steps = cfg.horizon;
    const auto report = validate_scenario(sc);
    if (!report.empty()) {
        for (const auto& v : report) err << cfg.scenario << ": " << v.code << ": " << v.message << '\n';
        throw UsageError("scenario '" + cfg.scenario + "' failed validation");
    }
    return sc;
}

inline IndexOptions index_options(const RunConfig& cfg) {
    IndexOptions opts;
    opts.tol_m_rel = cfg.tol_m;
    opts.solver.tol_v = cfg.tol_v;
    return opts;
}

inline int run_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto sc = checked_scenario(cfg, err);
    out << "ok: " << sc.arms.size() << " arms, beta " << sc.beta << ", delta " << sc.delta << ", horizon "
        << sc.horizon_steps << " steps, tail " << horizon_tail(sc, sc.horizon_steps) << '\n';
    return Ok;
}

inline int run_index(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto sc = checked_scenario(cfg, err);
    const auto tables = compute_index_tables(sc, index_options(cfg));
    std::optional<std::ofstream> csv;
    if (!cfg.out.empty()) {
        csv = open_csv(cfg.out, "index v1");
        *csv << "arm_id,state_id,switchable,index_value,bisection_iterations\n";
    }
    out << std::setprecision(10);
    for (std::size_t k = 0; k < sc.arms.size(); ++k) {
        const auto& arm = sc.arms[k];
        out << "arm " << k << " (" << arm.name << ", " << arm.restriction << ")\n";
        for (std::size_t s = 0; s < arm.size(); ++s) {
            const auto& t = tables[k];
            out << "  " << std::left << std::setw(16) << arm.state_names[s] << std::right
                << (t.switchable[s] ? "  index " : "  entry ") << t.entry_index[s] << '\n';
            if (csv)
                *csv << k << ',' << s << ',' << (t.switchable[s] ? 1 : 0) << ',' << t.entry_index[s] << ','
                     << t.iterations[s] << '\n';
        }
    }
    return Ok;
}

inline int run_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto sc = checked_scenario(cfg, err);
    const auto policy = parse_policy(cfg.policy, sc.arms.size());
    const auto seeds = seed_list(cfg);
    std::vector<IndexTable> tables = compute_index_tables(sc, index_options(cfg));
    const std::size_t d = sc.arms.size();

    std::optional<std::ofstream> csv;
    if (!cfg.out.empty()) {
        csv = open_csv(cfg.out, "simulate v1");
        *csv << "policy,seed,n_paths,horizon,mean,se";
        for (std::size_t k = 0; k < d; ++k) *csv << ",arm" << k << "_mean";
        for (std::size_t k = 0; k < d; ++k) *csv << ",arm" << k << "_occupancy";
        *csv << '\n';
    }
    out << std::setprecision(10);
    for (auto seed : seeds) {
        const auto r = monte_carlo(sc, &tables, policy, cfg.paths, seed, sc.horizon_steps);
        out << policy.label() << " seed " << seed << ": mean " << r.mean << " se " << r.se << " (" << r.n_paths
            << " paths)\n";
        if (csv) {
            *csv << policy.label() << ',' << seed << ',' << r.n_paths << ',' << sc.horizon_steps << ','
                 << r.mean << ',' << r.se;
            for (double x : r.arm_mean) *csv << ',' << x;
            for (double x : r.arm_occupancy) *csv << ',' << x;
            *csv << '\n';
        }
    }
    if (!cfg.trace.empty()) {
        const auto trace = run_policy(sc, &tables, policy, seeds.front(), sc.horizon_steps);
        auto f = open_csv(cfg.trace, "trace v1");
        f << "t,arm,forced,rate,reward,cumulative,envelope_term";
        for (std::size_t k = 0; k < d; ++k)
            f << ",state" << k << ",local_time" << k << ",carried" << k << ",envelope" << k;
        f << '\n';
        for (const auto& st : trace.steps) {
            f << st.t << ',' << st.arm << ',' << (st.forced ? 1 : 0) << ',' << st.rate << ',' << st.reward << ','
              << st.cumulative << ',' << st.envelope_term;
            for (std::size_t k = 0; k < d; ++k)
                f << ',' << sc.arms[k].state_names[st.states[k]] << ',' << st.local_times[k] << ','
                  << st.carried[k] << ',' << st.envelope[k];
            f << '\n';
        }
    }
    return Ok;
}

inline void write_report(const OracleReport& rep, std::ostream& out) {
    out << std::setprecision(12);
    out << "horizon " << rep.horizon << ", product states " << rep.product_states << '\n';
    out << std::left << std::setw(16) << "policy" << std::right << std::setw(20) << "value" << std::setw(20)
        << "gap to optimal" << '\n';
    auto row = [&](const std::string& name, double v) {
        out << std::left << std::setw(16) << name << std::right << std::setw(20) << v << std::setw(20)
            << rep.optimal - v << '\n';
    };
    row("optimal", rep.optimal);
    row("gittins", rep.index_value);
    row("envelope", rep.envelope_value);
    for (const auto& b : rep.baselines) row(b.label, b.value);
}

inline void write_report_csv(const OracleReport& rep, const std::string& path) {
    auto f = open_csv(path, "oracle v1");
    f << "policy,value,gap_to_optimal\n";
    auto row = [&](const std::string& name, double v) { f << name << ',' << v << ',' << rep.optimal - v << '\n'; };
    row("optimal", rep.optimal);
    row("gittins", rep.index_value);
    row("envelope", rep.envelope_value);
    for (const auto& b : rep.baselines) row(b.label, b.value);
}

inline int run_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err, bool compare) {
    const auto sc = checked_scenario(cfg, err);
    const auto tables = compute_index_tables(sc, index_options(cfg));
    const auto rep = make_oracle_report(sc, tables, sc.horizon_steps);
    write_report(rep, out);
    if (!cfg.out.empty()) write_report_csv(rep, cfg.out);
    if (compare) {
        const bool ok = rep.index_gap() <= cfg.gap_tol;
        out << "gap |V_idx - V*| = " << rep.index_gap() << (ok ? " <= " : " > ") << cfg.gap_tol
            << (ok ? " ok" : " FAILED") << '\n';
        out << "gap |V_env - V*| = " << rep.envelope_gap() << '\n';
        if (!ok) return RuntimeFailure;
    }
    return Ok;
}

} // namespace detail

/// Runs one command line. Returns the process exit status.
inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
    CLI::App app{"Restricted multi-armed bandits: indices, index policy, exact oracle."};
    app.require_subcommand(1, 1);
    RunConfig cfg;
    app.add_option("--tol-m", cfg.tol_m, "relative bisection tolerance on the index")
        ->check(CLI::PositiveNumber);
    app.add_option("--tol-v", cfg.tol_v, "value-iteration tolerance")->check(CLI::PositiveNumber);

    auto scenario_opt = [&](CLI::App* sub) {
        sub->add_option("--scenario,scenario", cfg.scenario, "scenario YAML file")->required();
        sub->add_option("--horizon", cfg.horizon, "override the horizon (steps)")->check(CLI::PositiveNumber);
    };
    auto* validate = app.add_subcommand("validate", "check a scenario file");
    scenario_opt(validate);
    auto* index = app.add_subcommand("index", "compute index tables");
    scenario_opt(index);
    index->add_option("--out", cfg.out, "CSV output path");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation of a policy");
    scenario_opt(simulate);
    simulate->add_option("--policy", cfg.policy, "gittins | myopic | round-robin | fixed:i,j | random:SEED");
    simulate->add_option("--paths", cfg.paths, "sample paths per seed")->check(CLI::PositiveNumber);
    auto* seed_opt = simulate->add_option("--seed", cfg.seed, "master seed");
    simulate->add_option("--seeds", cfg.seeds, "inclusive seed range A:B")->excludes(seed_opt);
    simulate->add_option("--out", cfg.out, "CSV output path");
    simulate->add_option("--trace", cfg.trace, "write the allocation trace of the first seed");
    auto* oracle = app.add_subcommand("oracle", "exact optimum and policy values");
    scenario_opt(oracle);
    oracle->add_option("--out", cfg.out, "CSV output path");
    auto* compare = app.add_subcommand("compare", "index policy against the exact optimum");
    scenario_opt(compare);
    compare->add_option("--out", cfg.out, "CSV output path");
    compare->add_option("--gap-tol", cfg.gap_tol, "tolerance on |V_idx - V*|")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return Ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return ValidationFailure;
    }

    try {
        if (*validate) return detail::run_validate(cfg, out, err);
        if (*index) return detail::run_index(cfg, out, err);
        if (*simulate) return detail::run_simulate(cfg, out, err);
        if (*oracle) return detail::run_oracle(cfg, out, err, false);
        if (*compare) return detail::run_oracle(cfg, out, err, true);
    } catch (const ScenarioFormatError& e) {
        err << cfg.scenario << ": " << e.what() << '\n';
        return ValidationFailure;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return ValidationFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return RuntimeFailure;
    }
    return RuntimeFailure;
}

} // namespace rmab::cli
