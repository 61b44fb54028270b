#pragma once

#include <cmath>

#include "kru/measure_json.hpp"
#include "kru/solver.hpp"

namespace kru {

/// Everything outside "meta" is a pure function of the inputs and the seed;
/// "meta" holds wall-clock facts that differ between identical runs.
inline Json solve_report_to_json(const SolveReport& rep) {
    Json j;
    j["measure"] = measure_to_json(rep.measure);
    j["objective"] =
        rep.objective_trace.empty() ? Json() : Json(rep.objective_trace.back());
    j["objective_trace"] = rep.objective_trace;
    j["iterations"] = rep.iterations;
    j["atom_count"] = rep.atom_count;
    j["oracle_exhausted"] = rep.oracle_exhausted;
    j["inner_converged"] = rep.inner_converged;
    j["stationarity_residual"] = std::isfinite(rep.stationarity_residual)
                                     ? Json(rep.stationarity_residual)
                                     : Json();
    if (rep.certificate_gap) {
        j["certificate_gap"] = *rep.certificate_gap;
    } else {
        j["certificate_gap"] = nullptr;
    }
    j["certificate_note"] =
        "heuristic gap from multi-start local search; not a global optimality certificate";
    j["warnings"] = rep.warnings;
    j["meta"]["wall_time_seconds"] = rep.wall_time_seconds;
    return j;
}

}  // namespace kru
