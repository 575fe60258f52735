// robustmv <solve|classify|simulate|oracle|gradcheck> --config FILE [flags]
//
// Exit codes: 0 success, 1 input error, 2 verification failure,
// 3 NoMinimum / ZeroDrift.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "robustmv/robustmv.hpp"

namespace {

using namespace robustmv;
using io::Json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitVerify = 2;
constexpr int kExitFlagged = 3;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NoMinimum:
        case ErrorKind::ZeroDrift: return kExitFlagged;
        case ErrorKind::SaddleViolated:
        case ErrorKind::PrincipleViolated:
        case ErrorKind::NonConvergence: return kExitVerify;
        default: return kExitInput;
    }
}

/// Everything a command produces, emitted only once the command has succeeded.
struct Output {
    std::string body;
    std::string notes;  // stderr
    int code = kExitOk;
};

void emit(const Output& out, const io::OutputSpec& spec) {
    if (spec.path.empty()) {
        std::cout << out.body;
    } else {
        std::ofstream file(spec.path, std::ios::binary);
        if (!file) throw InputError("cannot write output file '" + spec.path + "'");
        file << out.body;
    }
    std::cerr << out.notes;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveFlags {
    bool oracle_check = false;
    int resolution = 0;  // 0: default per dimension
};

int default_resolution(int d) { return d == 2 ? 2001 : (d == 3 ? 51 : 11); }

double oracle_bound(int d) { return d == 2 ? 1e-3 : (d == 3 ? 5e-3 : 1e-2); }

Json solve_json(const io::ModelConfig& cfg, const SolveFlags& flags, bool& oracle_failed) {
    const WorstCaseSolution sol = solve(cfg.ambiguity, cfg.market);
    Json out{{"solution", io::to_json(sol)}, {"strategy", io::strategy_report(sol, cfg.market)}};
    oracle_failed = false;
    if (flags.oracle_check) {
        const int d = cfg.market.dim();
        const int res = flags.resolution > 0 ? flags.resolution : default_resolution(d);
        const WorstCaseSolution oracle = grid_oracle(cfg.ambiguity, cfg.market, res);
        const double gap = std::abs(sol.r_star - oracle.r_star);
        const double bound = oracle_bound(d);
        // The grid only sees a subset of the set, so it can never beat the true minimum.
        const bool ok = gap <= bound && sol.r_star <= oracle.r_star + 1e-9;
        oracle_failed = !ok;
        out["oracle"] = Json{{"r_star", oracle.r_star},  {"gap", gap},
                             {"bound", bound},           {"resolution", res},
                             {"nodes", oracle.diagnostics.grid_nodes},
                             {"theta_star", io::to_json(oracle.theta_star)},
                             {"passed", ok}};
    }
    return out;
}

std::string solve_csv_header(int d) {
    std::string h = "r_star,case_label,no_trade,V0,class";
    for (int i = 0; i < d; ++i) h += ",b_star_" + std::to_string(i + 1);
    for (int k = 0; k < RhoVector::pair_count(d); ++k) {
        const auto [i, j] = RhoVector::pair_at(k, d);
        h += ",rho_star_" + std::to_string(i + 1) + std::to_string(j + 1);
    }
    return h;
}

std::string solve_csv_row(const WorstCaseSolution& s, const MarketParams& params) {
    std::string row = io::fmt(s.r_star) + "," + to_string(s.case_label) + "," +
                      (s.no_trade ? "true" : "false") + "," + io::fmt(value_v0(s, params)) + "," +
                      csv_quote(classify(s, params).summary());
    for (Eigen::Index i = 0; i < s.theta_star.b.size(); ++i) row += "," + io::fmt(s.theta_star.b[i]);
    for (int k = 0; k < s.theta_star.rho.size(); ++k) row += "," + io::fmt(s.theta_star.rho[k]);
    return row;
}

/// One row per sweep override; failures become an error column instead of
/// aborting the whole matrix.
Output run_sweep(const io::ModelConfig& base) {
    std::ostringstream body;
    body << "index," << solve_csv_header(base.market.dim()) << ",error\r\n";
    Output out;
    for (std::size_t k = 0; k < base.sweep.size(); ++k) {
        body << k << ',';
        try {
            const io::ModelConfig cfg = io::apply_override(base, base.sweep[k]);
            if (cfg.market.dim() != base.market.dim())
                throw InputError("sweep overrides may not change the dimension");
            body << solve_csv_row(solve(cfg.ambiguity, cfg.market), cfg.market) << ",\r\n";
        } catch (const Error& e) {
            const int cols = 5 + base.market.dim() + RhoVector::pair_count(base.market.dim());
            for (int c = 0; c < cols; ++c) body << ',';
            body << csv_quote(std::string(to_string(e.kind())) + ": " + e.what()) << "\r\n";
            out.code = std::max(out.code, exit_code_for(e.kind()));
        }
    }
    out.body = body.str();
    return out;
}

Output cmd_solve(const io::ModelConfig& cfg, const SolveFlags& flags) {
    if (!cfg.sweep.empty()) return run_sweep(cfg);
    Output out;
    bool oracle_failed = false;
    const Json j = solve_json(cfg, flags, oracle_failed);
    if (cfg.output.format == "csv") {
        const WorstCaseSolution sol = io::solution_from_json(j.at("solution"));
        out.body = solve_csv_header(cfg.market.dim()) + "\r\n" + solve_csv_row(sol, cfg.market) + "\r\n";
    } else {
        out.body = j.dump(2) + "\n";
    }
    if (oracle_failed) {
        out.code = kExitVerify;
        out.notes = "oracle check failed: closed form r* = " + io::fmt(j["solution"]["r_star"]) +
                    ", grid r* = " + io::fmt(j["oracle"]["r_star"]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

Output cmd_classify(const io::ModelConfig& cfg) {
    const WorstCaseSolution sol = solve(cfg.ambiguity, cfg.market);
    const DiversificationReport report = classify(sol, cfg.market);
    Output out;
    if (!cfg.output.path.empty() && cfg.output.format == "json")
        out.body = io::to_json(report).dump(2) + "\n";
    else
        out.body = report.summary() + "\n" + report.narrative + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateFlags {
    int paths = -1;
    int steps = -1;
    long long seed = -1;
    int probes = 8;
};

Output cmd_simulate(const io::ModelConfig& cfg, const SimulateFlags& flags) {
    SimConfig sim = cfg.simulate.value_or(SimConfig{});
    if (flags.paths >= 0) sim.n_paths = flags.paths;
    if (flags.steps >= 0) sim.n_steps = flags.steps;
    if (flags.seed >= 0) sim.seed = static_cast<std::uint64_t>(flags.seed);
    if (sim.antithetic && sim.n_paths % 2) sim.n_paths += 1;
    sim.validate();
    if (flags.probes < 0) throw InputError("--probes must be nonnegative");

    const WorstCaseSolution sol = solve(cfg.ambiguity, cfg.market);
    const FeedbackStrategy strategy = robust_strategy(sol, cfg.market);
    const bool under_star = !cfg.schedule.has_value();
    const ThetaProcessSchedule schedule =
        cfg.schedule.value_or(ThetaProcessSchedule::constant(sol.theta_star));
    schedule.validate(cfg.ambiguity, cfg.market);

    const PathSummary paths = simulate_wealth(strategy, schedule, cfg.market, sim);
    const ObjectiveEstimate est = estimate_objective(paths, cfg.market.lambda);
    const double v0 = value_v0(sol, cfg.market);
    const double z = est.std_error_J > 0 ? (est.J - v0) / est.std_error_J : 0.0;

    Output out;
    Json j{{"solution", io::to_json(sol)},
           {"V0", v0},
           {"objective", io::to_json(est)},
           {"z_score", z},
           {"schedule", under_star ? "theta_star" : "config"}};

    bool failed = false;
    if (under_star && std::abs(est.J - v0) > 3.0 * est.std_error_J) {
        failed = true;
        out.notes += "J differs from V0 by more than 3 standard errors\n";
    } else if (!under_star && est.J < v0 - 3.0 * est.std_error_J) {
        failed = true;
        out.notes += "J lies more than 3 standard errors below V0 under the configured scenario\n";
    }

    if (flags.probes > 0) {
        std::vector<ProbeStrategy> strategies = default_probe_strategies(sol, cfg.market);
        std::vector<ProbeSchedule> schedules = default_probe_schedules(sol, cfg.ambiguity, cfg.market);
        if (static_cast<int>(strategies.size()) > flags.probes) strategies.resize(flags.probes);
        if (static_cast<int>(schedules.size()) > flags.probes) schedules.resize(flags.probes);
        const WeakPrincipleReport report = verify_weak_principle(
            sol, cfg.ambiguity, cfg.market, sim, strategies, schedules, /*throw_on_failure=*/false);
        j["weak_principle"] = io::to_json(report);
        if (!report.passed()) {
            failed = true;
            out.notes += PrincipleViolated(report).what() + std::string("\n");
        }
    }
    if (est.n_paths < 100)
        out.notes += "note: only " + std::to_string(est.n_paths) +
                     " paths, standard errors are wide\n";

    if (cfg.output.format == "csv")
        out.body = io::path_table_csv(paths);
    else
        out.body = j.dump(2) + "\n";
    if (failed) out.code = kExitVerify;
    return out;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

Output cmd_oracle(const io::ModelConfig& cfg, int resolution) {
    const int res = resolution > 0 ? resolution : default_resolution(cfg.market.dim());
    const WorstCaseSolution s = grid_oracle(cfg.ambiguity, cfg.market, res);
    Output out;
    out.body = cfg.output.format == "csv"
                   ? solve_csv_header(cfg.market.dim()) + "\r\n" + solve_csv_row(s, cfg.market) + "\r\n"
                   : Json{{"solution", io::to_json(s)}}.dump(2) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

constexpr double kGradTolerance = 1e-5;
constexpr double kInteriorPivot = 1e-4;

Output cmd_gradcheck(const io::ModelConfig& cfg, int samples, long long seed) {
    if (samples < 0) throw InputError("--samples must be nonnegative");
    const std::vector<ThetaPoint> points =
        sample(cfg.ambiguity, cfg.market, samples, static_cast<std::uint64_t>(seed));
    const int d = cfg.market.dim();
    int checked = 0, skipped = 0, failures = 0;
    double worst = 0.0;
    for (const ThetaPoint& theta : points) {
        if (factorize(correlation_matrix(theta.rho, d)).min_pivot < kInteriorPivot) {
            ++skipped;
            continue;
        }
        const Vector analytic = stacked_gradient(theta, cfg.market);
        const Vector numeric = finite_difference_gradient(theta, cfg.market);
        const double err = (analytic - numeric).norm() / std::max(analytic.norm(), 1e-6);
        worst = std::max(worst, err);
        ++checked;
        if (err >= kGradTolerance) ++failures;
    }
    Output out;
    out.body = Json{{"samples", samples},   {"checked", checked},
                    {"skipped", skipped},   {"max_relative_error", worst},
                    {"tolerance", kGradTolerance}, {"failures", failures}}
                   .dump(2) +
               "\n";
    if (skipped > 0)
        out.notes = "skipped " + std::to_string(skipped) +
                    " points too close to the boundary of the positive definite cone\n";
    if (failures > 0) out.code = kExitVerify;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust mean-variance worst case solver"};
    app.require_subcommand(1);

    std::string config;
    std::string output_path, output_format;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "JSON model file")->required();
        sub->add_option("--output", output_path, "write the report here instead of stdout");
        sub->add_option("--format", output_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    };

    SolveFlags solve_flags;
    auto* solve_cmd = app.add_subcommand("solve", "worst-case parameters and robust strategy");
    add_common(solve_cmd);
    solve_cmd->add_flag("--oracle-check", solve_flags.oracle_check, "compare with the grid oracle");
    solve_cmd->add_option("--resolution", solve_flags.resolution, "grid points per coordinate");

    auto* classify_cmd = app.add_subcommand("classify", "diversification class of the robust strategy");
    add_common(classify_cmd);

    SimulateFlags sim_flags;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo check of the robust strategy");
    add_common(sim_cmd);
    sim_cmd->add_option("--paths", sim_flags.paths, "number of paths");
    sim_cmd->add_option("--steps", sim_flags.steps, "time steps");
    sim_cmd->add_option("--seed", sim_flags.seed, "random seed");
    sim_cmd->add_option("--probes", sim_flags.probes, "probes per family (0 disables)");

    int oracle_resolution = 0;
    auto* oracle_cmd = app.add_subcommand("oracle", "brute-force grid minimum");
    add_common(oracle_cmd);
    oracle_cmd->add_option("--resolution", oracle_resolution, "grid points per coordinate");

    int grad_samples = 100;
    long long grad_seed = 7;
    auto* grad_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradient");
    add_common(grad_cmd);
    grad_cmd->add_option("--samples", grad_samples, "random points from the set");
    grad_cmd->add_option("--seed", grad_seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        io::ModelConfig cfg = io::load_config(config);
        if (!output_path.empty()) cfg.output.path = output_path;
        if (!output_format.empty()) cfg.output.format = output_format;

        Output out;
        if (*solve_cmd) out = cmd_solve(cfg, solve_flags);
        else if (*classify_cmd) out = cmd_classify(cfg);
        else if (*sim_cmd) out = cmd_simulate(cfg, sim_flags);
        else if (*oracle_cmd) out = cmd_oracle(cfg, oracle_resolution);
        else out = cmd_gradcheck(cfg, grad_samples, grad_seed);

        emit(out, cfg.output);
        return out.code;
    } catch (const NoMinimum& e) {
        std::cerr << "NoMinimum: " << e.what()
                  << "\nthe two largest absolute Sharpe ratios tie, so no worst case is attained\n";
        return kExitFlagged;
    } catch (const ZeroDrift& e) {
        std::cerr << "ZeroDrift: " << e.what()
                  << "\nevery estimated drift is zero, so the robust investor never trades\n";
        return kExitFlagged;
    } catch (const Error& e) {
        std::cerr << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const Json::exception& e) {
        std::cerr << "InputError: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
