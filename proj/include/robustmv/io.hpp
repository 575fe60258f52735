// JSON model files and report serialization.
//
// Schema (snake_case keys):
//   market:    {sigmas: [..], T, lambda, x0}
//   ambiguity: {type: "ellipsoidal", b_hat: [..], delta, gamma}
//            | {type: "product", delta_lower: [..], delta_upper: [..], gamma}
//   gamma:     {lower: [..], upper: [..]} | {full_ambiguity: true}   (omit when d = 1)
//   simulate:  {n_paths, n_steps, seed, antithetic, schedule: [{t, b, rho}]}   (optional)
//   output:    {format: "json" | "csv", path}                               (optional)
//   sweep:     [override, ...]   merge-patched onto the base config          (optional)
#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustmv/simulator.hpp"

namespace robustmv::io {

using Json = nlohmann::json;

struct OutputSpec {
    std::string format = "json";
    std::string path;  // empty: stdout
};

struct ModelConfig {
    MarketParams market;
    AmbiguitySpec ambiguity;
    std::optional<SimConfig> simulate;
    std::optional<ThetaProcessSchedule> schedule;
    OutputSpec output;
    std::vector<Json> sweep;
    Json raw;
};

namespace detail {

inline const Json& need(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key))
        throw InputError(where + ": missing key '" + key + "'");
    return j.at(key);
}

inline double number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw InputError(where + ": expected a number");
    return j.get<double>();
}

inline Vector vector_of(const Json& j, const std::string& where) {
    if (!j.is_array()) throw InputError(where + ": expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], where);
    return v;
}

inline Json array_of(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline GammaBox parse_gamma(const Json& j, int d) {
    if (j.is_null()) {
        if (d == 1) return GammaBox::box(RhoVector::zeros(1), RhoVector::zeros(1));
        throw InputError("ambiguity.gamma is required when d > 1");
    }
    if (!j.is_object()) throw InputError("ambiguity.gamma must be an object");
    if (j.value("full_ambiguity", false)) return GammaBox::full(d);
    return GammaBox::box(RhoVector(vector_of(need(j, "lower", "gamma"), "gamma.lower")),
                         RhoVector(vector_of(need(j, "upper", "gamma"), "gamma.upper")));
}

}  // namespace detail

inline MarketParams parse_market(const Json& j) {
    MarketParams p;
    p.sigmas = detail::vector_of(detail::need(j, "sigmas", "market"), "market.sigmas");
    p.horizon = detail::number(detail::need(j, "T", "market"), "market.T");
    p.lambda = detail::number(detail::need(j, "lambda", "market"), "market.lambda");
    p.x0 = detail::number(detail::need(j, "x0", "market"), "market.x0");
    p.validate();
    return p;
}

inline AmbiguitySpec parse_ambiguity(const Json& j, int d) {
    const std::string type = detail::need(j, "type", "ambiguity").is_string()
                                 ? j.at("type").get<std::string>()
                                 : "";
    const GammaBox gamma = detail::parse_gamma(j.contains("gamma") ? j.at("gamma") : Json(), d);
    if (type == "ellipsoidal")
        return make_ellipsoidal(detail::vector_of(detail::need(j, "b_hat", "ambiguity"), "b_hat"),
                                detail::number(detail::need(j, "delta", "ambiguity"), "delta"),
                                gamma);
    if (type == "product")
        return make_product(
            detail::vector_of(detail::need(j, "delta_lower", "ambiguity"), "delta_lower"),
            detail::vector_of(detail::need(j, "delta_upper", "ambiguity"), "delta_upper"), gamma);
    throw InputError("ambiguity.type must be 'ellipsoidal' or 'product'");
}

inline ThetaPoint parse_theta(const Json& j, const std::string& where) {
    return ThetaPoint{detail::vector_of(detail::need(j, "b", where), where + ".b"),
                      RhoVector(detail::vector_of(j.contains("rho") ? j.at("rho") : Json::array(),
                                                  where + ".rho"))};
}

inline ModelConfig parse_config(const Json& j) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    ModelConfig c;
    c.raw = j;
    c.market = parse_market(detail::need(j, "market", "config"));
    c.ambiguity = parse_ambiguity(detail::need(j, "ambiguity", "config"), c.market.dim());
    c.ambiguity.validate(c.market);
    if (j.contains("simulate")) {
        const Json& s = j.at("simulate");
        SimConfig cfg;
        cfg.n_paths = s.value("n_paths", cfg.n_paths);
        cfg.n_steps = s.value("n_steps", cfg.n_steps);
        cfg.seed = s.value("seed", cfg.seed);
        cfg.antithetic = s.value("antithetic", cfg.antithetic);
        c.simulate = cfg;
        if (s.contains("schedule")) {
            const Json& pieces = s.at("schedule");
            if (!pieces.is_array() || pieces.empty())
                throw InputError("simulate.schedule must be a non-empty array");
            ThetaProcessSchedule sched;
            for (std::size_t k = 0; k < pieces.size(); ++k) {
                const std::string where = "simulate.schedule[" + std::to_string(k) + "]";
                sched.breakpoints.push_back(detail::number(detail::need(pieces[k], "t", where), where + ".t"));
                sched.values.push_back(parse_theta(pieces[k], where));
            }
            for (const ThetaPoint& v : sched.values) check_theta_dim(v, c.market);
            sched.validate(c.ambiguity, c.market);
            c.schedule = sched;
        }
    }
    if (j.contains("output")) {
        const Json& o = j.at("output");
        c.output.format = o.value("format", c.output.format);
        c.output.path = o.value("path", c.output.path);
        if (c.output.format != "json" && c.output.format != "csv")
            throw InputError("output.format must be 'json' or 'csv'");
    }
    if (j.contains("sweep")) {
        if (!j.at("sweep").is_array()) throw InputError("sweep must be an array of overrides");
        for (const Json& o : j.at("sweep")) c.sweep.push_back(o);
    }
    return c;
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InputError(std::string("malformed JSON: ") + e.what());
    }
}

inline ModelConfig load_config(const std::string& path) {
    try {
        return parse_config(read_json_file(path));
    } catch (const Json::exception& e) {
        throw InputError(std::string("invalid config: ") + e.what());
    }
}

/// Base config with one sweep override merged in.
inline ModelConfig apply_override(const ModelConfig& base, const Json& patch) {
    Json merged = base.raw;
    merged.erase("sweep");
    merged.merge_patch(patch);
    return parse_config(merged);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline Json to_json(const ThetaPoint& t) {
    return Json{{"b", detail::array_of(t.b)}, {"rho", detail::array_of(t.rho.entries())}};
}

inline Json to_json(const Diagnostics& d) {
    return Json{{"iterations", d.iterations},         {"starts", d.starts},
                {"converged", d.converged},           {"residual", d.residual},
                {"grid_resolution", d.grid_resolution}, {"grid_nodes", d.grid_nodes},
                {"root_residual", d.root_residual},   {"zeroed_component", d.zeroed_component},
                {"fallthrough", d.fallthrough}};
}

inline Json to_json(const WorstCaseSolution& s) {
    return Json{{"theta_star", to_json(s.theta_star)},
                {"r_star", s.r_star},
                {"case_label", to_string(s.case_label)},
                {"no_trade", s.no_trade},
                {"diagnostics", to_json(s.diagnostics)}};
}

inline WorstCaseSolution solution_from_json(const Json& j) {
    WorstCaseSolution s;
    s.theta_star = parse_theta(detail::need(j, "theta_star", "solution"), "theta_star");
    s.r_star = j.at("r_star").get<double>();
    s.case_label = parse_case_label(j.at("case_label").get<std::string>());
    s.no_trade = j.at("no_trade").get<bool>();
    if (j.contains("diagnostics")) {
        const Json& d = j.at("diagnostics");
        s.diagnostics.iterations = d.value("iterations", 0);
        s.diagnostics.starts = d.value("starts", 0);
        s.diagnostics.converged = d.value("converged", true);
        s.diagnostics.residual = d.value("residual", 0.0);
        s.diagnostics.grid_resolution = d.value("grid_resolution", 0);
        s.diagnostics.grid_nodes = d.value("grid_nodes", 0LL);
        s.diagnostics.root_residual = d.value("root_residual", 0.0);
        s.diagnostics.zeroed_component = d.value("zeroed_component", -1);
        s.diagnostics.fallthrough = d.value("fallthrough", false);
    }
    return s;
}

inline Json to_json(const DiversificationReport& r) {
    return Json{{"class", to_string(r.cls)}, {"asset", r.asset},
                {"mode", to_string(r.mode)}, {"signs", r.signs},
                {"case_label", r.case_label}, {"summary", r.summary()},
                {"narrative", r.narrative}};
}

/// theta_star, r_star, V0, direction, class, case_label.
inline Json strategy_report(const WorstCaseSolution& s, const MarketParams& params) {
    const FeedbackStrategy strategy = robust_strategy(s, params);
    const DiversificationReport cls = classify(s, params);
    return Json{{"theta_star", to_json(s.theta_star)},
                {"r_star", s.r_star},
                {"V0", value_v0(s, params)},
                {"direction", detail::array_of(strategy.allocation_direction)},
                {"class", cls.summary()},
                {"case_label", to_string(s.case_label)}};
}

inline Json to_json(const ObjectiveEstimate& e) {
    return Json{{"mean_XT", e.mean_XT}, {"var_XT", e.var_XT},       {"J", e.J},
                {"std_error_J", e.std_error_J}, {"std_error_mean", e.std_error_mean},
                {"n_paths", e.n_paths}};
}

inline Json to_json(const WeakPrincipleReport& r) {
    Json strategies = Json::array(), schedules = Json::array();
    for (const auto& s : r.strategies)
        strategies.push_back({{"name", s.name}, {"max_increase", s.max_increase}, {"J", s.J},
                              {"se_J", s.se_J}, {"monotone", s.monotone},
                              {"below_value", s.below_value}});
    for (const auto& s : r.schedules)
        schedules.push_back({{"name", s.name}, {"gap", s.gap}, {"se", s.se}, {"ok", s.ok}});
    return Json{{"V0", r.v0},
                {"strategies", strategies},
                {"schedules", schedules},
                {"martingale_max_z", r.martingale_max_z},
                {"passed", r.passed()}};
}

/// 17 significant digits.
inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// t, mean, var, se for every node.
inline std::string path_table_csv(const PathSummary& paths) {
    std::ostringstream out;
    out << "t,mean,var,se\r\n";
    for (std::size_t k = 0; k < paths.times.size(); ++k) {
        const Estimate m = paths.mean(k);
        out << fmt(paths.times[k]) << ',' << fmt(m.value) << ',' << fmt(paths.variance(k)) << ','
            << fmt(m.se) << "\r\n";
    }
    return out.str();
}

}  // namespace robustmv::io
