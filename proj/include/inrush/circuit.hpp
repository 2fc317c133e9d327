#pragma once

// Fixed-step EMT model of a three-phase, three-legged, two-winding transformer
// built from the duality principle, energized from a stiff three-phase source
// through a three-pole breaker.
//
// Topology (per phase p = A, B, C):
//
//   e_p --[R_g + L_g]--[breaker pole p]--+-- terminal p
//                                         |
//                                       C_stray to ground
//
// Delta primary, one winding per core leg:
//   leg 1: A -> B     leg 2: C -> A     leg 3: B -> C
// Each winding: R_HV + (L_HL + L_LC) in series with N d(phi_leg)/dt.
// The secondary is left open, so its branch carries no current.
//
// Magnetic side: outer legs 1 and 3 return through their yokes, the middle leg
// returns directly; a linear zero-sequence path of inductance L0 (reluctance
// N^2/L0) sits between the yoke junctions. Every leg and yoke is a
// Jiles-Atherton limb.

#include "inrush/jiles_atherton.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace inrush::circuit {

using Phase3 = std::array<double, 3>;

struct CoreGeometry {
    double area = 0.0;   ///< cross-section [m^2]
    double length = 0.0; ///< magnetic path length [m]

    bool operator==(const CoreGeometry&) const = default;
};

struct GridImpedance {
    double r = 0.5;    ///< [Ohm]
    double l = 1.0e-3; ///< [H]

    bool operator==(const GridImpedance&) const = default;
};

/// Leg cross-section giving 1.7 T at nominal peak flux for the rated data.
double default_core_area();

struct CircuitConfig {
    double s_rated = 7.4e6;
    double v_primary = 30.0e3;   ///< line-to-line rms [V]
    double v_secondary = 20.0e3; ///< line-to-line rms [V]
    double i_rated_primary = 142.4;
    double f = 50.0;
    int n_turns = 824;
    double r_hv = 1.28;
    double r_lv = 0.26;
    double l_hl = 81.12e-3;
    double l_lc = 55.58e-3;
    double l_0 = 25.37e-6;
    CoreGeometry leg{default_core_area(), 2.0};
    CoreGeometry yoke{default_core_area(), 1.2};
    double c_stray = 1.0e-9;
    GridImpedance grid{};
    ja::JaParameters ja{};
    /// A commanded pole opens once its current crosses zero or |i| <= this.
    double chop_current = 0.0;

    double dt = 20.0e-6;
    double energization_time = 0.5;
    double ringdown_time = 0.2;
    int warmup_cycles = 12;
    int ramp_cycles = 4;
    double newton_tol = 1.0e-9;
    int newton_max_iterations = 50;
    /// Largest flux-density sub-step inside the limb integration [T].
    double ja_max_db = 1.0e-2;
    /// Local error bound on H per limb sub-step [A/m].
    double ja_h_tol = 0.05;

    /// Throws InvalidArgument.
    void validate() const;

    /// 64-bit FNV-1a hash over every field at 17 significant digits.
    std::uint64_t fingerprint() const;

    bool operator==(const CircuitConfig&) const = default;
};

std::string fingerprint_hex(std::uint64_t fp);

struct CircuitState {
    double t = 0.0;
    Phase3 source_voltage{};   ///< e_p at t
    Phase3 breaker_current{};  ///< source branch current
    Phase3 terminal_voltage{}; ///< terminal to ground
    Phase3 winding_current{};
    Phase3 leg_flux{};
    Phase3 leg_flux_rate{};    ///< last step's d(phi)/dt, used as Newton predictor
    std::array<ja::LimbState, 3> legs{};
    std::array<ja::LimbState, 2> yokes{};
    std::array<bool, 3> pole_closed{};
};

enum class Integrator { Trapezoidal, BackwardEuler };

class CircuitModel {
public:
    explicit CircuitModel(CircuitConfig cfg);

    const CircuitConfig& config() const { return cfg_; }

    /// One implicit step to t + dt with source voltages `source` at t + dt.
    /// Throws InvalidArgument for dt outside (0, 100 us], NoConvergence, NonFiniteState.
    CircuitState step(const CircuitState& cs, double dt, const Phase3& source,
                      Integrator method = Integrator::Trapezoidal) const;

    /// Open-circuit source voltages at electrical angle `angle` [rad] of phase a.
    Phase3 source_voltage(double angle, double scale = 1.0) const;

    /// De-energized transformer holding `remanent` leg fluxes, all poles closed,
    /// source at `angle`. The zero-sequence part of `remanent` is removed.
    CircuitState remanent_state(const Phase3& remanent, double angle) const;

    /// Currents drawn from each terminal by the delta windings.
    Phase3 line_current(const CircuitState& cs) const;
    Phase3 winding_voltage(const CircuitState& cs) const;

    double nominal_peak_flux() const { return phi_nom_; }
    double omega() const { return omega_; }

private:
    struct MagneticEval {
        Phase3 mmf{};
        Phase3 dmmf_dflux{}; ///< diagonal part; the zero-sequence term adds r0_
        std::array<ja::LimbState, 3> legs{};
        std::array<ja::LimbState, 2> yokes{};
    };
    /// Sub-step partitions for legs 1-3 and the two yokes.
    using LimbPaths = std::array<ja::FluxPath, 5>;
    /// With `adapt` the partitions are chosen and stored, otherwise replayed.
    MagneticEval magnetic(const CircuitState& from, const Phase3& flux, LimbPaths& paths, bool adapt) const;

    CircuitConfig cfg_;
    double phi_nom_;
    double omega_;
    double v_phase_peak_;
    double l_sigma_;
    double r0_;
    bool yokes_mirror_legs_;
};

double nominal_peak_flux(const CircuitConfig& cfg);
double base_current(const CircuitConfig& cfg);
double to_pu(double i_peak, const CircuitConfig& cfg);

/// Convenience form of CircuitModel::step.
CircuitState step(const CircuitState& cs, const CircuitConfig& cfg, double dt, const Phase3& source);

struct Waveform {
    double dt = 0.0;
    std::array<std::vector<double>, 3> line_current;
    std::array<std::vector<double>, 3> winding_voltage;
    std::array<std::vector<double>, 3> leg_flux;

    std::size_t size() const { return line_current[0].size(); }
    void push(const Phase3& i, const Phase3& v, const Phase3& phi);
};

/// CSV with header `t,ia,ib,ic,va,vb,vc,phi1,phi2,phi3`.
void write_waveform_csv(std::ostream& os, const Waveform& w);
void write_waveform_csv(const std::string& path, const Waveform& w);

struct EnergizationResult {
    Waveform waveform;
    double i_max_pu = 0.0;
};

/// Close all three poles at `theta_close_deg` on a core holding `remanent`
/// fluxes and return the peak line current in pu over the energization window.
EnergizationResult simulate_energization(const CircuitConfig& cfg, const Phase3& remanent,
                                         double theta_close_deg, bool record_waveform = true);

/// Peak-only variant for bulk sweeps.
double peak_inrush_pu(const CircuitModel& model, const Phase3& remanent, double theta_close_deg);

/// Remanent leg fluxes after opening the breaker at `theta_open_deg`.
Phase3 simulate_deenergization(const CircuitConfig& cfg, double theta_open_deg);

/// Same as simulate_deenergization for many angles, sharing one warm-up.
std::vector<Phase3> deenergization_sweep(const CircuitConfig& cfg, std::span<const double> theta_open_deg);

struct SteadyState {
    Waveform waveform;          ///< last `measure_cycles` cycles
    double leg_flux_peak = 0.0; ///< max |phi| over legs [Wb]
    double line_current_rms = 0.0; ///< mean of the three phase rms values [A]
    double line_current_peak = 0.0;
};

/// Energize with a soft-started source and record the settled cycles.
SteadyState simulate_steady_state(const CircuitConfig& cfg, int measure_cycles = 10);

/// Cumulative trapezoidal integral of `v` divided by `n_turns`; first sample 0.
std::vector<double> integrate_flux(std::span<const double> v, double dt, int n_turns);

}  // namespace inrush::circuit
