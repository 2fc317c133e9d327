#pragma once

// Coordinate search over (core area scale, k, c, a, grid inductance) until
// the inrush, steady-current and remanence bands hold on a coarse grid.

#include "inrush/circuit.hpp"
#include "inrush/config.hpp"
#include "inrush/errors.hpp"

#include <functional>
#include <string>
#include <vector>

namespace inrush::harness {

struct CalibrationMetrics {
    double worst_pu = 0.0;         ///< largest peak over the coarse grid
    double max_row_min_pu = 0.0;   ///< largest per-opening minimum
    double steady_fraction = 0.0;  ///< steady line current rms / rated
    double zero_best_pu = 0.0;
    double zero_worst_pu = 0.0;
    double zero_ratio = 0.0;
    double remanence = 0.0;        ///< max |phi1| over openings / phi_nom
};

/// Coarse-grid metrics with the energization window shortened to the proxy.
CalibrationMetrics measure_calibration(const circuit::CircuitConfig& cfg, const CalibrationTargets& targets,
                                       unsigned jobs = 0);

/// Sum of log-distances of each metric outside its band; 0 when all hold.
double band_violation(const CalibrationMetrics& m, const CalibrationTargets& targets);

/// Human-readable band check, one line per metric.
std::vector<std::string> describe(const CalibrationMetrics& m, const CalibrationTargets& targets);

struct CalibrationResult {
    circuit::CircuitConfig config;
    CalibrationMetrics metrics;
    double violation = 0.0;
    int evaluations = 0;
    double area_scale = 1.0; ///< leg and yoke area relative to the start
    bool changed = false;
};

class CalibrationFailed : public Error {
public:
    CalibrationFailed(const std::string& what, CalibrationResult best) : Error(what), best_(std::move(best)) {}
    const CalibrationResult& best() const { return best_; }

private:
    CalibrationResult best_;
};

/// Called after every evaluated candidate.
using CalibrationObserver = std::function<void(int evaluation, const CalibrationResult& candidate, bool accepted)>;

/// Returns `start` unchanged when it already satisfies every band. Throws
/// CalibrationFailed with the best candidate when the evaluation cap is hit
/// or the search stalls.
CalibrationResult calibrate(const circuit::CircuitConfig& start, const CalibrationTargets& targets,
                            unsigned jobs = 0, const CalibrationObserver& observer = {});

/// Header comments recording the calibration outcome.
std::vector<std::string> provenance(const CalibrationResult& r, const CalibrationTargets& targets);

}  // namespace inrush::harness
