#include "ocpfem/io.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

namespace ocpfem {

namespace {

using nlohmann::ordered_json;

ordered_json config_json(const RunConfig& cfg) {
    ordered_json j = ordered_json::object();
    for (const auto& line : format_config(cfg)) {
        const auto eq = line.find('=');
        j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

ordered_json number(double x) { return std::isfinite(x) ? ordered_json(x) : ordered_json(nullptr); }

}  // namespace

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10e", x);
    return buf;
}

void write_config_header(std::ostream& os, const RunConfig& cfg) {
    for (const auto& line : format_config(cfg)) os << "# " << line << '\n';
}

void write_table_csv(std::ostream& os, const ConvergenceTable& table, const RunConfig& cfg) {
    write_config_header(os, cfg);
    os << "# mode=" << table.mode << '\n';
    os << "h,rho,err_y_l2,err_u_l2,err_p_l2,err_y_a,err_p_a,thm41_ratio,thm43_ratio,iters\n";
    for (const auto& r : table.rows) {
        if (r.failed) {
            os << format_number(r.h) << ',' << format_number(r.rho) << ",nan,nan,nan,nan,nan,nan,nan," << r.iters
               << '\n';
            continue;
        }
        os << format_number(r.h) << ',' << format_number(r.rho) << ',' << format_number(r.err_y_l2) << ','
           << format_number(r.err_u_l2) << ',' << format_number(r.err_p_l2) << ',' << format_number(r.err_y_a) << ','
           << format_number(r.err_p_a) << ',' << format_number(r.thm41.ratio) << ','
           << format_number(r.thm43.ratio) << ',' << r.iters << '\n';
    }
    for (const auto& col : error_columns()) os << "# rate " << col << '=' << format_number(table.rates.at(col)) << '\n';
    for (const auto& [name, value] : table.spreads) os << "# spread " << name << '=' << format_number(value) << '\n';
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        if (table.rows[i].failed) os << "# failed level " << i << ": " << table.rows[i].error << '\n';
}

void write_table_json(std::ostream& os, const ConvergenceTable& table, const RunConfig& cfg,
                      const LodSourceStudy* source) {
    ordered_json j;
    j["config"] = config_json(cfg);
    j["mode"] = table.mode;
    ordered_json rates = ordered_json::object();
    for (const auto& col : error_columns()) rates[col] = number(table.rates.at(col));
    j["rates"] = rates;
    ordered_json spreads = ordered_json::object();
    for (const auto& [name, value] : table.spreads) spreads[name] = number(value);
    j["spreads"] = spreads;
    ordered_json levels = ordered_json::array();
    for (const auto& r : table.rows) {
        ordered_json l;
        l["n"] = r.n;
        l["control_n"] = r.control_n;
        l["h"] = number(r.h);
        l["rho"] = number(r.rho);
        l["failed"] = r.failed;
        if (r.failed) l["error"] = r.error;
        l["iterations"] = r.iters;
        l["kkt_residual"] = number(r.kkt_residual);
        l["residual_history"] = r.residual_history;
        l["err_y_l2"] = number(r.err_y_l2);
        l["err_u_l2"] = number(r.err_u_l2);
        l["err_p_l2"] = number(r.err_p_l2);
        l["err_y_a"] = number(r.err_y_a);
        l["err_p_a"] = number(r.err_p_a);
        for (const auto& [name, t] : {std::pair{"thm41", r.thm41}, {"thm43", r.thm43}, {"tight", r.tight}})
            l[name] = {{"lhs", number(t.lhs)}, {"rhs", number(t.rhs)}, {"ratio", number(t.ratio)}};
        l["complementarity"] = number(r.kkt.complementarity);
        l["feasibility"] = number(r.kkt.feasibility);
        l["multiplier"] = number(r.kkt.multiplier);
        l["misfit"] = number(r.misfit);
        l["c_sharp"] = number(r.c_sharp);
        l["stability"] = {{"c_pf", number(r.stability.c_pf)},
                          {"samples", r.stability.samples},
                          {"violations", r.stability.violations},
                          {"max_l2_ratio", number(r.stability.max_l2_ratio)},
                          {"max_energy_ratio", number(r.stability.max_energy_ratio)}};
        levels.push_back(l);
    }
    j["levels"] = levels;
    if (source) {
        ordered_json s;
        s["energy_rate"] = number(source->energy_rate);
        s["l2_rate"] = number(source->l2_rate);
        ordered_json rows = ordered_json::array();
        for (const auto& r : source->rows)
            rows.push_back({{"coarse_n", r.coarse_n},
                            {"layers", r.layers},
                            {"H", number(r.H)},
                            {"energy", number(r.energy)},
                            {"l2", number(r.l2)}});
        s["levels"] = rows;
        j["source_study"] = s;
    }
    os << j.dump(2) << '\n';
}

void write_field_csv(std::ostream& os, const P1Field& field, const RunConfig& cfg) {
    write_config_header(os, cfg);
    os << "vertex_index,x,y,value\n";
    const Mesh& m = *field.mesh;
    for (int v = 0; v < m.num_vertices(); ++v)
        os << v << ',' << format_number(m.vertex(v).x()) << ',' << format_number(m.vertex(v).y()) << ','
           << format_number(field.values[v]) << '\n';
}

void write_control_csv(std::ostream& os, const ControlSpace& control, const Vector& values, const RunConfig& cfg) {
    write_config_header(os, cfg);
    os << "index,x,y,value\n";
    for (int k = 0; k < control.size(); ++k) {
        const Point& x = control.points()[static_cast<std::size_t>(k)];
        os << k << ',' << format_number(x.x()) << ',' << format_number(x.y()) << ',' << format_number(values[k])
           << '\n';
    }
}

void write_solve_json(std::ostream& os, const KktSolution& sol, const RunConfig& cfg) {
    const auto [c1, c2] = sol.complementarity();
    ordered_json j;
    j["config"] = config_json(cfg);
    j["gamma"] = cfg.gamma;
    j["iterations"] = sol.iterations;
    j["kkt_residual"] = number(sol.kkt_residual);
    j["objective"] = number(sol.objective);
    j["active_lower"] = sol.active_lower;
    j["active_upper"] = sol.active_upper;
    j["complementarity"] = {number(c1), number(c2)};
    j["residual_history"] = sol.residual_history;
    os << j.dump(2) << '\n';
}

void write_failure_json(std::ostream& os, const std::string& error, const std::vector<double>& history,
                        const RunConfig& cfg) {
    ordered_json j;
    j["config"] = config_json(cfg);
    j["error"] = error;
    j["residual_history"] = history;
    os << j.dump(2) << '\n';
}

}  // namespace ocpfem
