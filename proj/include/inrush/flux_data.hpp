#pragma once

// Remanent-flux scenarios: sine curves of remanence versus opening angle,
// noisy sampling inside their tolerance band, and CSV ingestion.

#include "inrush/circuit.hpp"

#include <array>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace inrush::flux {

using circuit::Phase3;

/// phi(theta) = amplitude * sin(theta + phase) with a +/- tolerance band.
struct FittedFluxCurve {
    double amplitude = 0.0; ///< [Wb]
    double phase = 0.0;     ///< [rad]
    double tolerance = 0.0; ///< band half-width [Wb]
    double omega = 2.0 * std::numbers::pi * 50.0; ///< [rad/s]

    /// Throws InvalidArgument.
    void validate() const;

    bool operator==(const FittedFluxCurve&) const = default;
};

using CurveSet = std::array<FittedFluxCurve, 3>;

/// Published fits for the three legs of the reference transformer.
CurveSet reference_curves();

struct SwitchingScenario {
    double theta_open_deg = 0.0;
    Phase3 flux{};
    std::optional<double> theta_close_deg;

    bool operator==(const SwitchingScenario&) const = default;
};

/// Noise-free curve value at `theta_open_deg`.
double fitted_flux(double theta_open_deg, const FittedFluxCurve& curve);

/// Curve values plus Normal(0, (tolerance/1.96)^2) noise clamped to the band.
SwitchingScenario sample_scenario(double theta_open_deg, const CurveSet& curves, std::mt19937_64& rng);

/// `count` scenarios at uniformly random opening angles.
std::vector<SwitchingScenario> sample_scenarios(std::size_t count, const CurveSet& curves, std::uint64_t seed);

struct FluxPoint {
    double theta_open_deg;
    double flux;
};

/// Linear least squares on p*sin + q*cos; tolerance is 1.96 residual standard
/// deviations. Throws DegenerateFit.
FittedFluxCurve fit_sine(std::span<const FluxPoint> points, double f = 50.0);

/// One curve per leg from a deenergization sweep.
CurveSet fit_curves(std::span<const double> theta_open_deg, std::span<const Phase3> flux, double f = 50.0);

/// Reads `theta_open_deg,phi1_wb,phi2_wb,phi3_wb[,theta_close_deg]`.
/// Throws ParseError, RangeError.
std::vector<SwitchingScenario> load_measurements(std::istream& is);
std::vector<SwitchingScenario> load_measurements(const std::string& path);

void write_scenarios_csv(std::ostream& os, std::span<const SwitchingScenario> scenarios);

/// CSV with header `phase,A_wb,psi_rad,delta_wb`.
void write_curves_csv(std::ostream& os, const CurveSet& curves);

}  // namespace inrush::flux
