#include "ocpfem/app.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ocpfem/io.hpp"
#include "ocpfem/mesh.hpp"
#include "ocpfem/multiscale.hpp"
#include "ocpfem/verify.hpp"

namespace ocpfem {

namespace {

/// Writes through `emit` to `path`, or to `fallback` when the path is empty.
void emit_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& emit) {
    if (path.empty()) {
        emit(fallback);
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open output file '" + path + "'");
    emit(file);
    if (!file) throw std::runtime_error("error writing '" + path + "'");
}

void print_rates(std::ostream& out, const ConvergenceTable& table) {
    out << "mode " << table.mode << '\n';
    for (const auto& col : error_columns()) out << "rate " << col << " = " << format_number(table.rates.at(col)) << '\n';
    for (const auto& [name, value] : table.spreads) out << "spread " << name << " = " << format_number(value) << '\n';
}

void report_failures(std::ostream& err, const ConvergenceTable& table) {
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (!r.failed) continue;
        err << "level " << i << " (n=" << r.n << ") failed: " << r.error << '\n';
        err << "residual history:";
        for (double h : r.residual_history) err << ' ' << format_number(h);
        err << '\n';
    }
}

StudyOptions study_options(const RunConfig& cfg) {
    StudyOptions o;
    o.control = cfg.control;
    o.schedule = cfg.schedule;
    o.control_n = cfg.control_n;
    o.pdas = {cfg.max_iter, cfg.tol};
    o.seed = cfg.seed;
    return o;
}

LodStudyOptions lod_options(const RunConfig& cfg) {
    LodStudyOptions o;
    o.schedule = cfg.coarse_n;
    o.fine_n = cfg.fine_n;
    o.c_loc = cfg.c_loc;
    o.layers = cfg.layers;
    o.period = cfg.period;
    o.pdas = {cfg.max_iter, cfg.tol};
    o.seed = cfg.seed;
    return o;
}

void dump_mesh_if_requested(const RunConfig& cfg, const Mesh& m, std::ostream& out) {
    if (cfg.dump_mesh.empty()) return;
    emit_to(cfg.dump_mesh, out, [&](std::ostream& os) { write_mesh(os, m); });
}

int run_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const ManufacturedProblem mp = manufacture_m1(cfg.gamma, cfg.bound);
    const MeshPtr mesh = unit_square_mesh(cfg.n);
    dump_mesh_if_requested(cfg, *mesh, out);
    std::shared_ptr<const ControlSpace> control;
    if (cfg.control == ControlRule::variational) {
        control = std::make_shared<const ControlSpace>(ControlSpace::variational(mesh));
    } else {
        int nc = cfg.n;
        if (cfg.control == ControlRule::fixed_n) nc = cfg.control_n;
        if (cfg.control == ControlRule::h_squared) {
            if ((cfg.n * cfg.n) % cfg.schedule.front() != 0)
                throw ConfigError("control=h-squared needs n*n divisible by the first schedule entry");
            nc = cfg.n * cfg.n / cfg.schedule.front();
        }
        control = std::make_shared<const ControlSpace>(
            ControlSpace::piecewise_constant(mesh, nc == cfg.n ? mesh : unit_square_mesh(nc)));
    }
    try {
        const KktSolution sol =
            DiscreteOcp(mp.prob, StateSpace::standard(mesh, mp.prob.coeff), control).solve({cfg.max_iter, cfg.tol});
        emit_to(cfg.json, out, [&](std::ostream& os) { write_solve_json(os, sol, cfg); });
        if (!cfg.fields.empty()) {
            emit_to(cfg.fields + "_y.csv", out, [&](std::ostream& os) { write_field_csv(os, sol.y, cfg); });
            emit_to(cfg.fields + "_p.csv", out, [&](std::ostream& os) { write_field_csv(os, sol.p, cfg); });
            emit_to(cfg.fields + "_u.csv", out, [&](std::ostream& os) { write_control_csv(os, *control, sol.u, cfg); });
        }
        out << "converged in " << sol.iterations << " iterations, KKT residual "
            << format_number(sol.kkt_residual) << '\n';
        return exit_ok;
    } catch (const ConvergenceError& e) {
        err << e.what() << '\n' << "residual history:";
        for (double h : e.history()) err << ' ' << format_number(h);
        err << '\n';
        emit_to(cfg.json, out, [&](std::ostream& os) { write_failure_json(os, e.what(), e.history(), cfg); });
        return exit_solver_failure;
    }
}

int run_study_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const ManufacturedProblem mp = manufacture_m1(cfg.gamma, cfg.bound);
    dump_mesh_if_requested(cfg, *unit_square_mesh(cfg.schedule.back()), out);
    const ConvergenceTable table = run_study(mp, study_options(cfg));
    emit_to(cfg.output, out, [&](std::ostream& os) { write_table_csv(os, table, cfg); });
    if (!cfg.json.empty()) emit_to(cfg.json, out, [&](std::ostream& os) { write_table_json(os, table, cfg); });
    print_rates(out, table);
    report_failures(err, table);
    return table.any_failed() ? exit_solver_failure : exit_ok;
}

int run_lod_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    ManufacturedProblem mp = manufacture_m1(cfg.gamma, cfg.bound);
    mp.prob.coeff = CoefficientSet::checkerboard(cfg.contrast, cfg.period);
    const LodStudyOptions opts = lod_options(cfg);
    const LodSourceStudy source = lod_source_study(mp.prob.coeff, Function::constant(1.0), opts);
    const ConvergenceTable table = run_lod_study(mp.prob, opts);
    emit_to(cfg.output, out, [&](std::ostream& os) { write_table_csv(os, table, cfg); });
    if (!cfg.json.empty()) emit_to(cfg.json, out, [&](std::ostream& os) { write_table_json(os, table, cfg, &source); });
    print_rates(out, table);
    out << "source study: energy rate = " << format_number(source.energy_rate)
        << ", L2 rate = " << format_number(source.l2_rate) << '\n';
    report_failures(err, table);
    return table.any_failed() ? exit_solver_failure : exit_ok;
}

int run_check_theorems(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const ManufacturedProblem mp = manufacture_m1(cfg.gamma, cfg.bound);
    const ConvergenceTable table = run_study(mp, study_options(cfg));
    if (!cfg.json.empty()) emit_to(cfg.json, out, [&](std::ostream& os) { write_table_json(os, table, cfg); });
    if (!cfg.output.empty()) emit_to(cfg.output, out, [&](std::ostream& os) { write_table_csv(os, table, cfg); });
    report_failures(err, table);
    if (table.any_failed()) return exit_solver_failure;

    bool ok = true;
    auto line = [&](const std::string& name, bool pass, const std::string& detail) {
        out << (pass ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        ok = ok && pass;
    };
    for (const auto& r : table.rows) {
        out << "n=" << r.n << " thm41=" << format_number(r.thm41.ratio) << " thm43=" << format_number(r.thm43.ratio)
            << " tight=" << format_number(r.tight.ratio) << " misfit=" << format_number(r.misfit)
            << " c_sharp=" << format_number(r.c_sharp) << '\n';
    }
    for (const auto& [name, value] : table.spreads)
        line(name + " boundedness", std::isfinite(value) && value <= 5.0, "max/median = " + format_number(value));
    for (const auto& r : table.rows) {
        const std::string lvl = "n=" + std::to_string(r.n);
        line("kkt " + lvl, r.kkt.passed() && r.iters <= 30,
             "complementarity " + format_number(r.kkt.complementarity) + ", iterations " + std::to_string(r.iters));
        line("stability " + lvl, r.stability.violations == 0,
             std::to_string(r.stability.violations) + " violations of " + std::to_string(r.stability.samples));
        line("a-priori bound " + lvl, r.misfit <= r.c_sharp,
             format_number(r.misfit) + " <= " + format_number(r.c_sharp));
    }
    return ok ? exit_ok : exit_solver_failure;
}

int run_dump_mesh(const RunConfig& cfg, std::ostream& out) {
    const MeshPtr m = unit_square_mesh(cfg.n);
    emit_to(cfg.dump_mesh, out, [&](std::ostream& os) { write_mesh(os, *m); });
    return exit_ok;
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        validate(cfg);
        switch (cfg.command) {
            case Command::solve: return run_solve(cfg, out, err);
            case Command::study: return run_study_command(cfg, out, err);
            case Command::lod_study: return run_lod_command(cfg, out, err);
            case Command::check_theorems: return run_check_theorems(cfg, out, err);
            case Command::dump_mesh: return run_dump_mesh(cfg, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_solver_failure;
    }
    return exit_ok;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Finite element solver and verification harness for control-constrained elliptic problems",
                 "ocpfem"};
    app.require_subcommand(1, 1);
    std::string config_path;
    app.add_option("--config", config_path, "key=value configuration file (flags override it)");
    std::map<std::string, std::string> values;
    for (const auto& key : config_keys()) {
        if (key == "command") continue;
        app.add_option("--" + key, values[key], "configuration key '" + key + "'");
    }
    const std::vector<std::pair<std::string, std::string>> commands{
        {"solve", "solve the manufactured problem on one mesh"},
        {"study", "convergence study against the exact solution"},
        {"lod-study", "multiscale (LOD) studies with a checkerboard coefficient"},
        {"check-theorems", "check the error bounds, stability and KKT conditions"},
        {"dump-mesh", "write the mesh of size n as plain text"}};
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return exit_ok;
        }
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
    }

    std::vector<Setting> overrides{{"command", app.get_subcommands().front()->get_name()}};
    for (const auto& key : config_keys())
        if (key != "command" && app.count("--" + key) > 0) overrides.emplace_back(key, values[key]);

    RunConfig cfg;
    try {
        std::string text;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot read config file '" + config_path + "'");
            std::ostringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        }
        cfg = parse_config(text, overrides);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
    }
    return run(cfg, out, err);
}

}  // namespace ocpfem
