#pragma once

#include "rmab/errors.hpp"
#include "rmab/model.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rmab {

/// Malformed scenario text. line() is 1-based, 0 when unknown.
class ScenarioFormatError : public Error {
public:
    ScenarioFormatError(const std::string& what, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

namespace detail {

inline int line_of(const YAML::Node& node) {
    const auto mark = node.Mark();
    return mark.line >= 0 ? mark.line + 1 : 0;
}

inline void only_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) {
    if (!map.IsMap()) throw ScenarioFormatError(where + " must be a mapping", line_of(map));
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key))
            throw ScenarioFormatError("unknown key '" + key + "' in " + where, line_of(kv.first));
    }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& what) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ScenarioFormatError(what + " has the wrong type", line_of(node));
    }
}

inline std::vector<double> vector_of(const YAML::Node& node, const std::string& what) {
    if (!node.IsSequence()) throw ScenarioFormatError(what + " must be a list", line_of(node));
    std::vector<double> out;
    for (const auto& x : node) out.push_back(scalar<double>(x, what));
    return out;
}

inline Matrix matrix_of(const YAML::Node& node, const std::string& what) {
    if (!node.IsSequence()) throw ScenarioFormatError(what + " must be a list of rows", line_of(node));
    Matrix out;
    for (const auto& row : node) out.push_back(vector_of(row, what));
    return out;
}

/// A state given either by name or by 0-based index.
inline StateId state_ref(const YAML::Node& node, const std::vector<std::string>& names, const std::string& what) {
    if (!node.IsScalar()) throw ScenarioFormatError(what + " must be a state name or index", line_of(node));
    const auto text = node.Scalar();
    for (std::size_t s = 0; s < names.size(); ++s)
        if (names[s] == text) return static_cast<StateId>(s);
    try {
        std::size_t used = 0;
        const int id = std::stoi(text, &used);
        if (used == text.size() && id >= 0 && static_cast<std::size_t>(id) < names.size()) return id;
    } catch (const std::exception&) {
    }
    throw ScenarioFormatError(what + ": no state '" + text + "'", line_of(node));
}

inline RestrictionSpec parse_restriction(const YAML::Node& node, const std::vector<std::string>& names) {
    only_keys(node, {"type", "period", "switchable"}, "restriction");
    if (!node["type"]) throw ScenarioFormatError("restriction needs a type", line_of(node));
    const auto type = scalar<std::string>(node["type"], "restriction type");
    if (type == "unrestricted") return RestrictionSpec::unrestricted();
    if (type == "nonpreemptive") return RestrictionSpec::nonpreemptive();
    if (type == "integer_grid") {
        if (!node["period"]) throw ScenarioFormatError("integer_grid needs a period", line_of(node));
        const int period = scalar<int>(node["period"], "period");
        if (period < 1) throw ScenarioFormatError("period must be at least 1", line_of(node["period"]));
        return RestrictionSpec::integer_grid(period);
    }
    if (type == "state_based") {
        const auto list = node["switchable"];
        if (!list || !list.IsSequence())
            throw ScenarioFormatError("state_based needs a switchable list", line_of(node));
        std::vector<StateId> states;
        for (const auto& s : list) states.push_back(state_ref(s, names, "switchable"));
        return RestrictionSpec::state_based(std::move(states));
    }
    throw ScenarioFormatError("unknown restriction type '" + type + "'", line_of(node["type"]));
}

inline ArmModel parse_arm(const YAML::Node& node, double delta, std::size_t position) {
    const std::string where = "arm " + std::to_string(position);
    if (node.IsMap() && node["idle"]) {
        only_keys(node, {"idle", "name"}, where);
        if (!scalar<bool>(node["idle"], "idle")) throw ScenarioFormatError("idle must be true", line_of(node));
        return make_idle_arm(node["name"] ? scalar<std::string>(node["name"], "name") : "idle");
    }
    only_keys(node, {"name", "states", "rates", "kernel", "generator", "initial", "restriction"}, where);
    const std::string name = node["name"] ? scalar<std::string>(node["name"], "name") : where;
    if (!node["rates"]) throw ScenarioFormatError(where + " needs rates", line_of(node));
    auto rates = vector_of(node["rates"], "rates");

    std::vector<std::string> names;
    if (node["states"]) {
        if (!node["states"].IsSequence())
            throw ScenarioFormatError("states must be a list", line_of(node["states"]));
        for (const auto& s : node["states"]) names.push_back(scalar<std::string>(s, "state name"));
        if (names.size() != rates.size())
            throw ScenarioFormatError("states and rates differ in length", line_of(node["states"]));
    } else {
        for (std::size_t s = 0; s < rates.size(); ++s) names.push_back("s" + std::to_string(s));
    }

    StateId initial = 0;
    if (node["initial"]) initial = state_ref(node["initial"], names, "initial");

    const bool has_kernel = static_cast<bool>(node["kernel"]);
    const bool has_generator = static_cast<bool>(node["generator"]);
    if (has_kernel == has_generator)
        throw ScenarioFormatError(where + " needs exactly one of kernel or generator", line_of(node));
    ArmModel arm;
    if (has_kernel) {
        arm = make_arm(name, names, rates, matrix_of(node["kernel"], "kernel"), initial);
    } else {
        try {
            arm = arm_from_generator(name, names, rates, matrix_of(node["generator"], "generator"), delta, initial);
        } catch (const InvalidModel& e) {
            throw ScenarioFormatError(e.what(), line_of(node["generator"]));
        }
    }

    if (const auto r = node["restriction"]) {
        // Restrictions are compiled only onto a well-formed arm; otherwise validation reports the arm.
        if (!validate_arm(arm).empty()) return arm;
        std::vector<YAML::Node> parts;
        if (r.IsSequence()) for (const auto& p : r) parts.push_back(p);
        else parts.push_back(r);
        for (const auto& p : parts) {
            const auto spec = parse_restriction(p, arm.state_names);
            try {
                arm = compile_restriction(spec, arm);
            } catch (const Error& e) {
                throw ScenarioFormatError(e.what(), line_of(p));
            }
        }
    }
    return arm;
}

} // namespace detail

/**
 * Parses a scenario document. The horizon defaults to the smallest one whose
 * truncation tail is within tail_tol. Structural problems throw
 * ScenarioFormatError; modelling problems are left for validate_scenario.
 */
inline Scenario parse_scenario(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ScenarioFormatError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
    }
    if (!root || root.IsNull()) throw ScenarioFormatError("empty scenario", 0);
    detail::only_keys(root, {"beta", "delta", "horizon", "tail_tol", "arms"}, "scenario");

    Scenario sc;
    if (!root["beta"] || !root["delta"] || !root["arms"])
        throw ScenarioFormatError("scenario needs beta, delta and arms", detail::line_of(root));
    sc.beta = detail::scalar<double>(root["beta"], "beta");
    sc.delta = detail::scalar<double>(root["delta"], "delta");
    sc.tail_tol = root["tail_tol"] ? detail::scalar<double>(root["tail_tol"], "tail_tol") : 1e-10;
    if (!(sc.delta > 0.0)) throw ScenarioFormatError("delta must be positive", detail::line_of(root["delta"]));

    const auto arms = root["arms"];
    if (!arms.IsSequence()) throw ScenarioFormatError("arms must be a list", detail::line_of(arms));
    std::size_t position = 0;
    for (const auto& a : arms) sc.arms.push_back(detail::parse_arm(a, sc.delta, position++));

    if (root["horizon"]) {
        sc.horizon_steps = detail::scalar<long>(root["horizon"], "horizon");
    } else if (sc.beta > 0.0 && sc.tail_tol > 0.0) {
        sc.horizon_steps = recommended_horizon(sc, sc.tail_tol);
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

} // namespace rmab
