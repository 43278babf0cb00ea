#pragma once

#include <iosfwd>
#include <string>

#include "ocpfem/config.hpp"
#include "ocpfem/ocp.hpp"
#include "ocpfem/verify.hpp"

namespace ocpfem {

/// Fixed-width scientific formatting used by every table ("nan" for NaN).
std::string format_number(double x);

/// Resolved configuration as '#'-prefixed lines.
void write_config_header(std::ostream& os, const RunConfig& cfg);

/// Header h,rho,err_y_l2,err_u_l2,err_p_l2,err_y_a,err_p_a,thm41_ratio,
/// thm43_ratio,iters; one row per level; fitted rates and ratio spreads in a
/// trailing comment block.
void write_table_csv(std::ostream& os, const ConvergenceTable& table, const RunConfig& cfg);

/// Rates, spreads and per-level diagnostics as one JSON object.
void write_table_json(std::ostream& os, const ConvergenceTable& table, const RunConfig& cfg,
                      const LodSourceStudy* source = nullptr);

/// "vertex_index,x,y,value" per mesh vertex.
void write_field_csv(std::ostream& os, const P1Field& field, const RunConfig& cfg);

/// "index,x,y,value" per control unknown (cell centroid or quadrature point).
void write_control_csv(std::ostream& os, const ControlSpace& control, const Vector& values, const RunConfig& cfg);

/// Summary of one solve: gamma, iterations, KKT residual, objective, active
/// counts and the residual history.
void write_solve_json(std::ostream& os, const KktSolution& sol, const RunConfig& cfg);

/// Residual history of a failed solve.
void write_failure_json(std::ostream& os, const std::string& error, const std::vector<double>& history,
                        const RunConfig& cfg);

}  // namespace ocpfem
