#pragma once

// Scalar Jiles-Atherton hysteresis for one core limb.
//
// The differential form used throughout is
//
//   dM/dH = dM * (Man - M) / (d*k - alpha*(Man - M)) + c * dMan/dH
//
// with He = H + alpha*M, dMan/dH = dMan/dHe * (1 + alpha * dM/dH),
// d = sign(dH) and dM = 0 whenever (Man - M)*d < 0.
// Man is the Langevin anhysteretic Ms*(coth(He/a) - a/He).

#include <numbers>
#include <span>
#include <vector>

namespace inrush::ja {

inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;

struct JaParameters {
    double m_s = 1.38e6;   ///< saturation magnetization [A/m]
    double a = 15.0;       ///< anhysteretic shape [A/m]
    double alpha = 2.0e-5; ///< inter-domain coupling
    double k = 30.0;       ///< pinning [A/m]
    double c = 0.25;       ///< reversibility, 0..1

    /// Throws InvalidArgument when an invariant is violated, including
    /// alpha * c * m_s / (3a) >= 1, where the reversible feedback diverges.
    void validate() const;

    bool operator==(const JaParameters&) const = default;
};

struct LimbState {
    double h = 0.0; ///< field [A/m]
    double m = 0.0; ///< magnetization [A/m]
    double b = 0.0; ///< flux density [T]

    static LimbState from_hm(double h, double m) { return {h, m, kMu0 * (h + m)}; }

    /// State at H = 0 carrying flux density `b` (remanence).
    static LimbState from_remanence(double b) { return {0.0, b / kMu0, b}; }

    bool operator==(const LimbState&) const = default;
};

/// Langevin anhysteretic magnetization at effective field `h_e`.
double anhysteretic(double h_e, const JaParameters& p);

/// dMan/dHe.
double anhysteretic_slope(double h_e, const JaParameters& p);

/// Differential susceptibility dM/dH at `s` for a field moving in
/// `direction` (+1 or -1).
double susceptibility(const LimbState& s, double direction, const JaParameters& p);

struct StepOptions {
    double max_dh = 1.0; ///< largest internal field sub-step [A/m]
};

/// Advance the limb by a field increment `dh`, subdividing into sub-steps no
/// larger than `opts.max_dh`. Throws NonFiniteState.
LimbState ja_step(const LimbState& s, double dh, const JaParameters& p,
                  const StepOptions& opts = {});

struct InverseOptions {
    double h_max = 1.0e7;    ///< bound on |H| reachable by the search [A/m]
    int max_iterations = 100;
    StepOptions step{};
};

/// Find the state reached from `s` by a monotone field excursion whose flux
/// density equals `b_target` within tol*max(|b_target|, 0.1 T).
/// Throws NoConvergence, InvalidArgument.
LimbState inverse_step_to_b(const LimbState& s, double b_target, const JaParameters& p,
                            double tol, const InverseOptions& opts = {});

struct FluxDrivenStep {
    LimbState state;
    double dh_db = 0.0; ///< incremental dH/dB at the end point [A/(m T)]
};

/// Sub-step boundaries of a flux-driven excursion, as cumulative fractions of
/// the total change. The last entry is 1.
using FluxPath = std::vector<double>;

struct FluxDrivenOptions {
    double max_db = 1.0e-2; ///< largest sub-step [T]
    double h_tol = 0.05;    ///< absolute local error bound on H per sub-step [A/m]
};

/// Flux-driven form of the same differential equation, integrated in B with
/// adaptive sub-steps; no root search is needed. When `path` is given it
/// receives the accepted partition.
FluxDrivenStep advance_to_b(const LimbState& s, double b_target, const JaParameters& p,
                            const FluxDrivenOptions& opts = {}, FluxPath* path = nullptr);

/// Replays a partition from advance_to_b. For a fixed partition the result is
/// a continuous function of `b_target`.
FluxDrivenStep advance_along(const LimbState& s, double b_target, const JaParameters& p,
                             std::span<const double> path);

/// Incremental dH/dB for a flux change in `direction` from `s`.
double incremental_dh_db(const LimbState& s, double direction, const JaParameters& p);

}  // namespace inrush::ja
