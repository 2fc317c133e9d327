#include "inrush/circuit.hpp"

#include "inrush/errors.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <ostream>

namespace inrush::circuit {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kSqrt3 = std::numbers::sqrt3;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxStep = 100.0e-6; ///< largest accepted step [s]

// Winding k spans terminal kFrom[k] -> kTo[k] (A=0, B=1, C=2).
constexpr std::array<int, 3> kFrom{0, 2, 1};
constexpr std::array<int, 3> kTo{1, 0, 2};

// incidence(p, k): +1 if winding k leaves terminal p, -1 if it enters.
constexpr double incidence(int p, int k) {
    return (kFrom[k] == p ? 1.0 : 0.0) - (kTo[k] == p ? 1.0 : 0.0);
}

Phase3 delta_line_current(const Phase3& iw) {
    Phase3 out{};
    for (int p = 0; p < 3; ++p)
        for (int k = 0; k < 3; ++k) out[p] += incidence(p, k) * iw[k];
    return out;
}

Phase3 delta_winding_voltage(const Phase3& v) {
    Phase3 u{};
    for (int k = 0; k < 3; ++k) u[k] = v[kFrom[k]] - v[kTo[k]];
    return u;
}

void check_finite(const CircuitState& s) {
    auto bad = [](const Phase3& a) {
        return !std::isfinite(a[0]) || !std::isfinite(a[1]) || !std::isfinite(a[2]);
    };
    if (bad(s.breaker_current) || bad(s.terminal_voltage) || bad(s.winding_current) || bad(s.leg_flux)) {
        throw NonFiniteState(fmt::format("circuit state became non-finite at t={}", s.t));
    }
}

double soft_start(double t, double ramp) {
    if (ramp <= 0.0 || t >= ramp) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * t / ramp));
}

}  // namespace

double default_core_area() {
    const double phi_nom = 30.0e3 * kSqrt2 / (kTwoPi * 50.0 * 824.0);
    return phi_nom / 1.7;
}

void CircuitConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(fmt::format("circuit: {} must be > 0", name));
    };
    positive(s_rated, "s_rated");
    positive(v_primary, "v_primary");
    positive(v_secondary, "v_secondary");
    positive(i_rated_primary, "i_rated_primary");
    positive(f, "f");
    if (n_turns <= 0) throw InvalidArgument("circuit: n_turns must be > 0");
    positive(r_hv, "r_hv");
    positive(r_lv, "r_lv");
    positive(l_hl, "l_hl");
    positive(l_lc, "l_lc");
    positive(l_0, "l_0");
    positive(leg.area, "leg.area");
    positive(leg.length, "leg.length");
    positive(yoke.area, "yoke.area");
    positive(yoke.length, "yoke.length");
    positive(c_stray, "c_stray");
    positive(grid.r, "grid.r");
    positive(grid.l, "grid.l");
    if (!(chop_current >= 0.0)) throw InvalidArgument("circuit: chop_current must be >= 0");
    if (!(dt >= 1.0e-6 && dt <= 100.0e-6)) throw InvalidArgument("circuit: dt must lie in [1 us, 100 us]");
    positive(energization_time, "energization_time");
    positive(ringdown_time, "ringdown_time");
    if (warmup_cycles < 10) throw InvalidArgument("circuit: warmup_cycles must be >= 10");
    if (ramp_cycles < 0 || ramp_cycles >= warmup_cycles)
        throw InvalidArgument("circuit: ramp_cycles must lie in [0, warmup_cycles)");
    positive(newton_tol, "newton_tol");
    if (newton_max_iterations <= 0) throw InvalidArgument("circuit: newton_max_iterations must be > 0");
    positive(ja_max_db, "ja_max_db");
    positive(ja_h_tol, "ja_h_tol");
    ja.validate();
}

std::uint64_t CircuitConfig::fingerprint() const {
    const std::string canon = fmt::format(
        "s={:.17g};vp={:.17g};vs={:.17g};ip={:.17g};f={:.17g};n={};rhv={:.17g};rlv={:.17g};"
        "lhl={:.17g};llc={:.17g};l0={:.17g};leg={:.17g},{:.17g};yoke={:.17g},{:.17g};c={:.17g};"
        "grid={:.17g},{:.17g};ja={:.17g},{:.17g},{:.17g},{:.17g},{:.17g};chop={:.17g};dt={:.17g};"
        "te={:.17g};tr={:.17g};warm={};ramp={};ntol={:.17g};nmax={};jadb={:.17g};jah={:.17g}",
        s_rated, v_primary, v_secondary, i_rated_primary, f, n_turns, r_hv, r_lv, l_hl, l_lc, l_0,
        leg.area, leg.length, yoke.area, yoke.length, c_stray, grid.r, grid.l, ja.m_s, ja.a, ja.alpha,
        ja.k, ja.c, chop_current, dt, energization_time, ringdown_time, warmup_cycles, ramp_cycles,
        newton_tol, newton_max_iterations, ja_max_db, ja_h_tol);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fingerprint_hex(std::uint64_t fp) { return fmt::format("{:016x}", fp); }

double nominal_peak_flux(const CircuitConfig& cfg) {
    return cfg.v_primary * kSqrt2 / (kTwoPi * cfg.f * cfg.n_turns);
}

double base_current(const CircuitConfig& cfg) { return kSqrt2 * cfg.i_rated_primary; }

double to_pu(double i_peak, const CircuitConfig& cfg) { return i_peak / base_current(cfg); }

CircuitModel::CircuitModel(CircuitConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    phi_nom_ = circuit::nominal_peak_flux(cfg_);
    omega_ = kTwoPi * cfg_.f;
    v_phase_peak_ = cfg_.v_primary * kSqrt2 / kSqrt3;
    l_sigma_ = cfg_.l_hl + cfg_.l_lc;
    r0_ = static_cast<double>(cfg_.n_turns) * cfg_.n_turns / cfg_.l_0;
    yokes_mirror_legs_ = cfg_.yoke.area == cfg_.leg.area;
}

Phase3 CircuitModel::source_voltage(double angle, double scale) const {
    const double amp = scale * v_phase_peak_;
    return {amp * std::sin(angle), amp * std::sin(angle - kTwoPi / 3.0), amp * std::sin(angle + kTwoPi / 3.0)};
}

CircuitState CircuitModel::remanent_state(const Phase3& remanent, double angle) const {
    const double mean = (remanent[0] + remanent[1] + remanent[2]) / 3.0;
    CircuitState s;
    s.source_voltage = source_voltage(angle);
    s.pole_closed = {true, true, true};
    for (int k = 0; k < 3; ++k) {
        s.leg_flux[k] = remanent[k] - mean;
        s.legs[k] = ja::LimbState::from_remanence(s.leg_flux[k] / cfg_.leg.area);
    }
    s.yokes[0] = ja::LimbState::from_remanence(s.leg_flux[0] / cfg_.yoke.area);
    s.yokes[1] = ja::LimbState::from_remanence(s.leg_flux[2] / cfg_.yoke.area);
    return s;
}

Phase3 CircuitModel::line_current(const CircuitState& cs) const { return delta_line_current(cs.winding_current); }

Phase3 CircuitModel::winding_voltage(const CircuitState& cs) const {
    return delta_winding_voltage(cs.terminal_voltage);
}

CircuitModel::MagneticEval CircuitModel::magnetic(const CircuitState& from, const Phase3& flux,
                                                  LimbPaths& paths, bool adapt) const {
    MagneticEval out;
    const ja::FluxDrivenOptions opts{cfg_.ja_max_db, cfg_.ja_h_tol};
    auto limb = [&](const ja::LimbState& s, double b, ja::FluxPath& path) {
        return adapt ? ja::advance_to_b(s, b, cfg_.ja, opts, &path) : ja::advance_along(s, b, cfg_.ja, path);
    };
    const double u0 = r0_ * (flux[0] + flux[1] + flux[2]);
    const double leg_scale = cfg_.leg.length / cfg_.leg.area;
    const double yoke_scale = cfg_.yoke.length / cfg_.yoke.area;
    for (int k = 0; k < 3; ++k) {
        const auto leg = limb(from.legs[k], flux[k] / cfg_.leg.area, paths[k]);
        out.legs[k] = leg.state;
        out.mmf[k] = cfg_.leg.length * leg.state.h + u0;
        out.dmmf_dflux[k] = leg_scale * leg.dh_db;
    }
    for (int y = 0; y < 2; ++y) {
        const int k = y == 0 ? 0 : 2;
        ja::FluxDrivenStep yoke;
        if (yokes_mirror_legs_) {
            yoke.state = out.legs[k];
            yoke.dh_db = out.dmmf_dflux[k] / leg_scale;
        } else {
            yoke = limb(from.yokes[y], flux[k] / cfg_.yoke.area, paths[3 + y]);
        }
        out.yokes[y] = yoke.state;
        out.mmf[k] += cfg_.yoke.length * yoke.state.h;
        out.dmmf_dflux[k] += yoke_scale * yoke.dh_db;
    }
    return out;
}

CircuitState CircuitModel::step(const CircuitState& cs, double dt, const Phase3& source,
                                Integrator method) const {
    if (!(dt > 0.0 && dt <= kMaxStep * (1.0 + 1e-9))) throw InvalidArgument(fmt::format("circuit step: dt {} outside (0, 100 us]", dt));
    const double w = method == Integrator::Trapezoidal ? 0.5 : 1.0;
    const double wdt = w * dt;
    const double odt = (1.0 - w) * dt;
    const double n = cfg_.n_turns;
    const double lg = cfg_.grid.l;
    const double rg = cfg_.grid.r;
    const double c = cfg_.c_stray;
    const double r = cfg_.r_hv;

    const Phase3 out_old = delta_line_current(cs.winding_current);
    const Phase3 u_old = delta_winding_voltage(cs.terminal_voltage);

    // Source branch: i' = a - b v'. Terminal node: v' = g - h * out'.
    Phase3 a{}, b{}, g{}, h{};
    for (int p = 0; p < 3; ++p) {
        if (cs.pole_closed[p]) {
            const double d = lg + wdt * rg;
            const double i = cs.breaker_current[p];
            a[p] = (lg * i + wdt * source[p] +
                    odt * (cs.source_voltage[p] - rg * i - cs.terminal_voltage[p])) / d;
            b[p] = wdt / d;
        }
        const double den = c + wdt * b[p];
        h[p] = wdt / den;
        g[p] = (c * cs.terminal_voltage[p] + odt * (cs.breaker_current[p] - out_old[p]) + wdt * a[p]) / den;
    }

    // Winding equations reduce to K * iw' + N * phi' = rhs.
    Eigen::Matrix3d k_mat = Eigen::Matrix3d::Identity() * (l_sigma_ + wdt * r);
    Eigen::Vector3d rhs;
    const Phase3 tg = delta_winding_voltage(g);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double m = 0.0;
            for (int p = 0; p < 3; ++p) m += incidence(p, i) * h[p] * incidence(p, j);
            k_mat(i, j) += wdt * m;
        }
        rhs[i] = l_sigma_ * cs.winding_current[i] + n * cs.leg_flux[i] +
                 odt * (u_old[i] - r * cs.winding_current[i]) + wdt * tg[i];
    }

    const double tol = cfg_.newton_tol * phi_nom_;
    auto residual = [&](const MagneticEval& m, const Phase3& phi) {
        Eigen::Vector3d iw(m.mmf[0] / n, m.mmf[1] / n, m.mmf[2] / n);
        return Eigen::Vector3d(k_mat * iw + n * Eigen::Vector3d(phi[0], phi[1], phi[2]) - rhs);
    };
    // Each leg's own MMF depends only on its own flux, so the Jacobian is
    // diagonal plus the rank-one zero-sequence term. The limb integration is
    // only piecewise smooth, so the diagonal uses secant slopes once two
    // iterates are available.
    auto own_mmf = [&](const MagneticEval& m, const Phase3& phi, int k) {
        return m.mmf[k] - r0_ * (phi[0] + phi[1] + phi[2]);
    };
    Phase3 flux;
    for (int k = 0; k < 3; ++k) flux[k] = cs.leg_flux[k] + dt * cs.leg_flux_rate[k];
    // The limb sub-step partition is chosen adaptively at the predictor and
    // then frozen so the limb response stays continuous in the unknowns. It is
    // re-derived if the solution lands far from the predictor.
    thread_local LimbPaths paths;
    bool adapt = true;
    Phase3 planned;
    for (int k = 0; k < 3; ++k) planned[k] = flux[k] - cs.leg_flux[k];
    MagneticEval mag;
    bool converged = false;
    for (int attempt = 0; attempt < 3 && !converged; ++attempt) {
        mag = magnetic(cs, flux, paths, adapt);
        adapt = false;
        Eigen::Vector3d res = residual(mag, flux);
        Phase3 slope = mag.dmmf_dflux;
        for (int it = 0; it < cfg_.newton_max_iterations; ++it) {
            Eigen::Matrix3d dmmf = Eigen::Matrix3d::Constant(r0_);
            for (int k = 0; k < 3; ++k) dmmf(k, k) += slope[k];
            const Eigen::Matrix3d jac = k_mat * dmmf / n + n * Eigen::Matrix3d::Identity();
            const Eigen::Vector3d delta = jac.inverse() * -res;
            if (!delta.allFinite()) break;
            if (delta.cwiseAbs().maxCoeff() <= tol) {
                converged = true;
                break;
            }
            // Backtrack while the residual grows.
            const double norm = res.cwiseAbs().maxCoeff();
            double lambda = 1.0;
            for (;;) {
                Phase3 trial;
                for (int k = 0; k < 3; ++k) trial[k] = flux[k] + lambda * delta[k];
                MagneticEval trial_mag = magnetic(cs, trial, paths, false);
                Eigen::Vector3d trial_res = residual(trial_mag, trial);
                if (trial_res.cwiseAbs().maxCoeff() < norm || lambda < 1.0 / 64.0) {
                    for (int k = 0; k < 3; ++k) {
                        const double dphi = trial[k] - flux[k];
                        const double secant = (own_mmf(trial_mag, trial, k) - own_mmf(mag, flux, k)) / dphi;
                        slope[k] = std::abs(dphi) > 1e-12 * phi_nom_ && secant > 0.0 && std::isfinite(secant)
                                       ? secant
                                       : trial_mag.dmmf_dflux[k];
                    }
                    flux = trial;
                    mag = std::move(trial_mag);
                    res = trial_res;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if (converged && attempt < 2) {
            for (int k = 0; k < 3; ++k) {
                const double ratio = (flux[k] - cs.leg_flux[k]) / planned[k];
                if (!(ratio >= 0.5 && ratio <= 2.0) && std::abs(flux[k] - cs.leg_flux[k]) > 1e-9 * phi_nom_) {
                    converged = false;
                }
            }
        }
        if (!converged) {
            adapt = true;
            for (int k = 0; k < 3; ++k) planned[k] = flux[k] - cs.leg_flux[k];
        }
    }
    if (!converged) {
        throw NoConvergence(fmt::format("circuit step at t={} did not converge in {} iterations", cs.t + dt,
                                        cfg_.newton_max_iterations));
    }

    CircuitState next;
    next.t = cs.t + dt;
    next.source_voltage = source;
    next.pole_closed = cs.pole_closed;
    next.legs = mag.legs;
    next.yokes = mag.yokes;
    next.leg_flux = flux;
    for (int k = 0; k < 3; ++k) {
        next.winding_current[k] = mag.mmf[k] / n;
        next.leg_flux_rate[k] = (flux[k] - cs.leg_flux[k]) / dt;
    }
    const Phase3 out_new = delta_line_current(next.winding_current);
    for (int p = 0; p < 3; ++p) {
        next.terminal_voltage[p] = g[p] - h[p] * out_new[p];
        next.breaker_current[p] = cs.pole_closed[p] ? a[p] - b[p] * next.terminal_voltage[p] : 0.0;
    }
    check_finite(next);
    return next;
}

CircuitState step(const CircuitState& cs, const CircuitConfig& cfg, double dt, const Phase3& source) {
    return CircuitModel(cfg).step(cs, dt, source);
}

void Waveform::push(const Phase3& i, const Phase3& v, const Phase3& phi) {
    for (int k = 0; k < 3; ++k) {
        line_current[k].push_back(i[k]);
        winding_voltage[k].push_back(v[k]);
        leg_flux[k].push_back(phi[k]);
    }
}

void write_waveform_csv(std::ostream& os, const Waveform& w) {
    os << "t,ia,ib,ic,va,vb,vc,phi1,phi2,phi3\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
        os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                          static_cast<double>(i) * w.dt, w.line_current[0][i], w.line_current[1][i],
                          w.line_current[2][i], w.winding_voltage[0][i], w.winding_voltage[1][i],
                          w.winding_voltage[2][i], w.leg_flux[0][i], w.leg_flux[1][i], w.leg_flux[2][i]);
    }
}

void write_waveform_csv(const std::string& path, const Waveform& w) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path + " for writing");
    write_waveform_csv(os, w);
}

namespace {

// Drives a CircuitModel on a uniform time grid. After any switching event the
// next interval is covered by two half-size backward-Euler steps, which damps
// the numerical ringing trapezoidal integration leaves on stiff modes.
class Stepper {
public:
    Stepper(const CircuitModel& model, double angle0) : model_(model), angle0_(angle0) {}

    Phase3 source_at(double t) const {
        return model_.source_voltage(angle0_ + model_.omega() * t, envelope_ ? envelope_(t) : 1.0);
    }

    void set_envelope(std::function<double(double)> env) { envelope_ = std::move(env); }

    void advance(CircuitState& s, double t_next, bool after_event) const {
        if (after_event) {
            const double t_mid = 0.5 * (s.t + t_next);
            s = model_.step(s, t_mid - s.t, source_at(t_mid), Integrator::BackwardEuler);
            s = model_.step(s, t_next - s.t, source_at(t_next), Integrator::BackwardEuler);
            s.t = t_next;
        } else {
            s = model_.step(s, t_next - s.t, source_at(t_next));
            s.t = t_next;
        }
    }

private:
    const CircuitModel& model_;
    double angle0_;
    std::function<double(double)> envelope_;
};

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Closing angle reduced to [0, 360) in degrees, so whole turns are exact.
double closing_angle(double theta_close_deg) {
    if (!std::isfinite(theta_close_deg)) throw RangeError("closing angle must be finite");
    double theta = std::fmod(theta_close_deg, 360.0);
    if (theta < 0.0) theta += 360.0;
    return deg2rad(theta);
}

void check_remanent(const CircuitModel& model, const Phase3& remanent) {
    for (double phi : remanent) {
        if (!std::isfinite(phi) || std::abs(phi) > 1.1 * model.nominal_peak_flux()) {
            throw RangeError(fmt::format("remanent flux {} Wb exceeds 1.1 x nominal peak flux", phi));
        }
    }
}

// Energized from a demagnetized core with a soft-started source, poles closed.
CircuitState warm_up(const CircuitModel& model, Stepper& stepper) {
    const auto& cfg = model.config();
    const double period = 1.0 / cfg.f;
    const double ramp = cfg.ramp_cycles * period;
    stepper.set_envelope([ramp](double t) { return soft_start(t, ramp); });
    CircuitState s;
    s.pole_closed = {true, true, true};
    s.source_voltage = stepper.source_at(0.0);
    const auto steps = static_cast<long>(std::llround(cfg.warmup_cycles * period / cfg.dt));
    for (long i = 1; i <= steps; ++i) stepper.advance(s, static_cast<double>(i) * cfg.dt, i == 1);
    return s;
}

}  // namespace

double peak_inrush_pu(const CircuitModel& model, const Phase3& remanent, double theta_close_deg) {
    check_remanent(model, remanent);
    const auto& cfg = model.config();
    const double angle = closing_angle(theta_close_deg);
    Stepper stepper(model, angle);
    CircuitState s = model.remanent_state(remanent, angle);
    const auto steps = static_cast<long>(std::llround(cfg.energization_time / cfg.dt));
    double peak = 0.0;
    for (long i = 1; i <= steps; ++i) {
        stepper.advance(s, static_cast<double>(i) * cfg.dt, i == 1);
        for (double il : model.line_current(s)) peak = std::max(peak, std::abs(il));
    }
    return to_pu(peak, cfg);
}

EnergizationResult simulate_energization(const CircuitConfig& cfg, const Phase3& remanent, double theta_close_deg,
                                         bool record_waveform) {
    const CircuitModel model(cfg);
    if (!record_waveform) return {Waveform{cfg.dt, {}, {}, {}}, peak_inrush_pu(model, remanent, theta_close_deg)};

    check_remanent(model, remanent);
    const double angle = closing_angle(theta_close_deg);
    Stepper stepper(model, angle);
    CircuitState s = model.remanent_state(remanent, angle);
    EnergizationResult out;
    out.waveform.dt = cfg.dt;
    out.waveform.push(model.line_current(s), model.winding_voltage(s), s.leg_flux);
    const auto steps = static_cast<long>(std::llround(cfg.energization_time / cfg.dt));
    double peak = 0.0;
    for (long i = 1; i <= steps; ++i) {
        stepper.advance(s, static_cast<double>(i) * cfg.dt, i == 1);
        const Phase3 il = model.line_current(s);
        for (double x : il) peak = std::max(peak, std::abs(x));
        out.waveform.push(il, model.winding_voltage(s), s.leg_flux);
    }
    out.i_max_pu = to_pu(peak, cfg);
    return out;
}

std::vector<Phase3> deenergization_sweep(const CircuitConfig& cfg, std::span<const double> theta_open_deg) {
    const CircuitModel model(cfg);
    const double period = 1.0 / cfg.f;
    const double dt = cfg.dt;
    Stepper stepper(model, 0.0);
    const CircuitState warm = warm_up(model, stepper);
    const auto warm_steps = static_cast<long>(std::llround(warm.t / dt));
    const auto ring_steps = static_cast<long>(std::llround(cfg.ringdown_time / dt));
    const auto give_up = static_cast<long>(std::llround(5.0 * period / dt));

    std::vector<Phase3> out;
    out.reserve(theta_open_deg.size());
    for (double theta : theta_open_deg) {
        if (!std::isfinite(theta) || theta < 0.0 || theta > 360.0) {
            throw RangeError(fmt::format("opening angle {} outside [0, 360]", theta));
        }
        CircuitState s = warm;
        const double t_cmd = warm.t + theta / 360.0 * period;
        long i = warm_steps;
        while (static_cast<double>(i) * dt < t_cmd - 1e-12 * period) {
            ++i;
            stepper.advance(s, static_cast<double>(i) * dt, false);
        }
        // Chopping check at the first grid point at or after the command.
        bool event = false;
        for (int p = 0; p < 3; ++p) {
            if (std::abs(s.breaker_current[p]) <= cfg.chop_current) {
                s.pole_closed[p] = false;
                s.breaker_current[p] = 0.0;
                event = true;
            }
        }
        const long cmd_step = i;
        while (s.pole_closed[0] || s.pole_closed[1] || s.pole_closed[2]) {
            if (i - cmd_step > give_up) {
                throw NoConvergence(fmt::format("breaker failed to interrupt after opening at {} deg", theta));
            }
            const Phase3 before = s.breaker_current;
            ++i;
            stepper.advance(s, static_cast<double>(i) * dt, event);
            event = false;
            for (int p = 0; p < 3; ++p) {
                if (!s.pole_closed[p]) continue;
                const double now = s.breaker_current[p];
                if ((now <= 0.0) != (before[p] <= 0.0) || std::abs(now) <= cfg.chop_current) {
                    s.pole_closed[p] = false;
                    s.breaker_current[p] = 0.0;
                    event = true;
                }
            }
        }
        const long end = i + ring_steps;
        while (i < end) {
            ++i;
            stepper.advance(s, static_cast<double>(i) * dt, event);
            event = false;
        }
        out.push_back(s.leg_flux);
    }
    return out;
}

Phase3 simulate_deenergization(const CircuitConfig& cfg, double theta_open_deg) {
    const double angles[] = {theta_open_deg};
    return deenergization_sweep(cfg, angles).front();
}

SteadyState simulate_steady_state(const CircuitConfig& cfg, int measure_cycles) {
    const CircuitModel model(cfg);
    Stepper stepper(model, 0.0);
    CircuitState s = warm_up(model, stepper);
    const double period = 1.0 / cfg.f;
    const auto start = static_cast<long>(std::llround(s.t / cfg.dt));
    const auto steps = static_cast<long>(std::llround(measure_cycles * period / cfg.dt));
    SteadyState out;
    out.waveform.dt = cfg.dt;
    Phase3 sum_sq{};
    for (long i = 1; i <= steps; ++i) {
        stepper.advance(s, static_cast<double>(start + i) * cfg.dt, false);
        const Phase3 il = model.line_current(s);
        out.waveform.push(il, model.winding_voltage(s), s.leg_flux);
        for (int k = 0; k < 3; ++k) {
            sum_sq[k] += il[k] * il[k];
            out.line_current_peak = std::max(out.line_current_peak, std::abs(il[k]));
            out.leg_flux_peak = std::max(out.leg_flux_peak, std::abs(s.leg_flux[k]));
        }
    }
    for (int k = 0; k < 3; ++k) out.line_current_rms += std::sqrt(sum_sq[k] / steps) / 3.0;
    return out;
}

std::vector<double> integrate_flux(std::span<const double> v, double dt, int n_turns) {
    if (v.empty()) throw InvalidArgument("integrate_flux: empty series");
    std::vector<double> out(v.size(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        acc += 0.5 * dt * (v[i - 1] + v[i]);
        out[i] = acc / n_turns;
    }
    return out;
}

}  // namespace inrush::circuit
