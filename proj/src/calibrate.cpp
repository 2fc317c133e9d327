#include "inrush/calibrate.hpp"

#include "inrush/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace inrush::harness {

namespace {

double below(double x, double lo) { return x < lo ? std::log(lo / std::max(x, 1e-12)) : 0.0; }
double above(double x, double hi) { return x > hi ? std::log(x / hi) + 1e-3 : 0.0; }
double outside(double x, double lo, double hi) { return below(x, lo) + above(x, hi); }

struct Knob {
    const char* name;
    double lo;
    double hi;
    double step; ///< initial log step
};

// Order matters: the area scale moves every metric, the others refine.
constexpr std::array<Knob, 5> kKnobs{{
    {"area_scale", 0.25, 8.0, 0.2},
    {"k", 1.0, 1.0e4, 0.5},
    {"c", 0.01, 0.99, 0.3},
    {"a", 1.0, 1.0e3, 0.3},
    {"grid_l", 1.0e-5, 0.1, 0.5},
}};

using Point = std::array<double, kKnobs.size()>;

Point point_of(const circuit::CircuitConfig& cfg) { return {1.0, cfg.ja.k, cfg.ja.c, cfg.ja.a, cfg.grid.l}; }

circuit::CircuitConfig apply(const circuit::CircuitConfig& start, const Point& x) {
    circuit::CircuitConfig c = start;
    c.leg.area = start.leg.area * x[0];
    c.yoke.area = start.yoke.area * x[0];
    c.ja.k = x[1];
    c.ja.c = x[2];
    c.ja.a = x[3];
    c.grid.l = x[4];
    return c;
}

}  // namespace

CalibrationMetrics measure_calibration(const circuit::CircuitConfig& cfg, const CalibrationTargets& targets,
                                       unsigned jobs) {
    cfg.validate();
    CalibrationMetrics m;
    const circuit::SteadyState ss = circuit::simulate_steady_state(cfg, 10);
    m.steady_fraction = ss.line_current_rms / cfg.i_rated_primary;

    std::vector<double> openings;
    for (int a = 0; a < 360; a += targets.opening_step_deg) openings.push_back(a);
    const std::vector<circuit::Phase3> remanent = circuit::deenergization_sweep(cfg, openings);
    const double phi_nom = circuit::nominal_peak_flux(cfg);
    for (const auto& r : remanent) m.remanence = std::max(m.remanence, std::abs(r[0]) / phi_nom);

    // Rows sharing a remanent state share their closing sweep; the zero state
    // is appended last.
    std::map<circuit::Phase3, std::size_t> index;
    std::vector<circuit::Phase3> states;
    for (const auto& r : remanent) {
        if (index.emplace(r, states.size()).second) states.push_back(r);
    }
    states.push_back({0.0, 0.0, 0.0});
    std::vector<int> closings;
    for (int a = 0; a < 360; a += targets.closing_step_deg) closings.push_back(a);

    circuit::CircuitConfig proxy = cfg;
    proxy.energization_time = std::min(cfg.energization_time, targets.proxy_energization_time);
    const circuit::CircuitModel model(proxy);
    std::vector<double> peak(states.size() * closings.size());
    parallel_for(peak.size(), jobs, [&](std::size_t j) {
        peak[j] = circuit::peak_inrush_pu(model, states[j / closings.size()], closings[j % closings.size()]);
    });

    const std::size_t n_rows = states.size() - 1;
    for (std::size_t s = 0; s <= n_rows; ++s) {
        const auto first = peak.begin() + static_cast<std::ptrdiff_t>(s * closings.size());
        const auto last = first + static_cast<std::ptrdiff_t>(closings.size());
        const double lo = *std::min_element(first, last);
        const double hi = *std::max_element(first, last);
        if (s < n_rows) {
            m.worst_pu = std::max(m.worst_pu, hi);
            m.max_row_min_pu = std::max(m.max_row_min_pu, lo);
        } else {
            m.zero_best_pu = lo;
            m.zero_worst_pu = hi;
            m.zero_ratio = hi / std::max(lo, 1e-12);
        }
    }
    return m;
}

double band_violation(const CalibrationMetrics& m, const CalibrationTargets& t) {
    return outside(m.worst_pu, t.worst_min_pu, t.worst_max_pu) +
           outside(m.steady_fraction, t.steady_min, t.steady_max) + below(m.zero_ratio, t.zero_ratio_min) +
           (m.max_row_min_pu >= t.row_min_max_pu ? std::log(m.max_row_min_pu / t.row_min_max_pu) + 1e-3 : 0.0) +
           outside(m.remanence, t.remanence_min, t.remanence_max);
}

std::vector<std::string> describe(const CalibrationMetrics& m, const CalibrationTargets& t) {
    auto mark = [](bool ok) { return ok ? "ok" : "OUT"; };
    return {
        fmt::format("worst peak        {:.4f} pu in [{}, {}]: {}", m.worst_pu, t.worst_min_pu, t.worst_max_pu,
                    mark(m.worst_pu >= t.worst_min_pu && m.worst_pu <= t.worst_max_pu)),
        fmt::format("largest row min   {:.4f} pu < {}: {}", m.max_row_min_pu, t.row_min_max_pu,
                    mark(m.max_row_min_pu < t.row_min_max_pu)),
        fmt::format("steady current    {:.4f} % of rated in [{}, {}] %: {}", 100.0 * m.steady_fraction,
                    100.0 * t.steady_min, 100.0 * t.steady_max,
                    mark(m.steady_fraction >= t.steady_min && m.steady_fraction <= t.steady_max)),
        fmt::format("zero remanence    best {:.4f} pu, worst {:.4f} pu, ratio {:.2f} >= {}: {}", m.zero_best_pu,
                    m.zero_worst_pu, m.zero_ratio, t.zero_ratio_min, mark(m.zero_ratio >= t.zero_ratio_min)),
        fmt::format("remanence (leg 1) {:.4f} phi_nom in [{}, {}]: {}", m.remanence, t.remanence_min,
                    t.remanence_max, mark(m.remanence >= t.remanence_min && m.remanence <= t.remanence_max)),
    };
}

CalibrationResult calibrate(const circuit::CircuitConfig& start, const CalibrationTargets& targets, unsigned jobs,
                            const CalibrationObserver& observer) {
    int evaluations = 0;
    auto evaluate = [&](const Point& x) {
        CalibrationResult r;
        r.config = apply(start, x);
        r.area_scale = x[0];
        r.metrics = measure_calibration(r.config, targets, jobs);
        r.violation = band_violation(r.metrics, targets);
        r.evaluations = ++evaluations;
        return r;
    };

    Point x = point_of(start);
    CalibrationResult best = evaluate(x);
    best.config = start;
    if (observer) observer(evaluations, best, true);
    if (best.violation == 0.0) return best;

    Point step;
    for (std::size_t j = 0; j < kKnobs.size(); ++j) step[j] = kKnobs[j].step;
    auto exhausted = [&] { return evaluations >= targets.max_evaluations; };

    while (!exhausted()) {
        bool improved = false;
        for (std::size_t j = 0; j < kKnobs.size() && !exhausted(); ++j) {
            for (const double dir : {1.0, -1.0}) {
                bool moved = false;
                // Keep walking while the violation decreases.
                while (!exhausted()) {
                    Point cand = x;
                    cand[j] = std::clamp(x[j] * std::exp(dir * step[j]), kKnobs[j].lo, kKnobs[j].hi);
                    if (cand[j] == x[j]) break;
                    CalibrationResult r = evaluate(cand);
                    const bool accept = r.violation < best.violation;
                    if (observer) observer(evaluations, r, accept);
                    if (!accept) break;
                    x = cand;
                    best = std::move(r);
                    best.changed = true;
                    moved = improved = true;
                    if (best.violation == 0.0) return best;
                }
                if (moved) break;
            }
        }
        if (!improved) {
            bool alive = false;
            for (double& s : step) {
                s *= 0.5;
                alive = alive || s > 1e-3;
            }
            if (!alive) break;
        }
    }
    best.evaluations = evaluations;
    throw CalibrationFailed(fmt::format("calibration did not reach every band after {} evaluations "
                                        "(best violation {:.4g})",
                                        evaluations, best.violation),
                            best);
}

std::vector<std::string> provenance(const CalibrationResult& r, const CalibrationTargets& targets) {
    std::vector<std::string> out{
        fmt::format("calibrated after {} candidate evaluations{}", r.evaluations,
                    r.changed ? "" : " (start already inside every band)"),
        fmt::format("leg and yoke area scaled by {:.6g}; k = {:.6g}, c = {:.6g}, a = {:.6g}, grid l = {:.6g}",
                    r.area_scale, r.config.ja.k, r.config.ja.c, r.config.ja.a, r.config.grid.l),
        fmt::format("coarse grid: openings every {} deg, closings every {} deg, {} s window",
                    targets.opening_step_deg, targets.closing_step_deg, targets.proxy_energization_time),
    };
    for (auto& line : describe(r.metrics, targets)) out.push_back(std::move(line));
    return out;
}

}  // namespace inrush::harness
