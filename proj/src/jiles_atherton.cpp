#include "inrush/jiles_atherton.hpp"

#include "inrush/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace inrush::ja {

namespace {

// Below this |He/a| the Langevin function is evaluated from its series.
constexpr double kSeriesLimit = 0.05;
// Floor on |d*k - alpha*(Man - M)| as a fraction of k.
constexpr double kDenominatorFloor = 0.05;
// Floor on 1 - alpha * c * dMan/dHe.
constexpr double kFeedbackFloor = 0.05;

struct Langevin {
    double value;
    double slope;
};

// L(x) = coth(x) - 1/x and L'(x) = 1/x^2 - 1/sinh^2(x) from a single exp().
Langevin langevin(double x) {
    const double ax = std::abs(x);
    if (ax < kSeriesLimit) {
        const double x2 = x * x;
        return {x * (1.0 / 3.0 - x2 * (1.0 / 45.0 - x2 * (2.0 / 945.0 - x2 / 4725.0))),
                1.0 / 3.0 - x2 * (1.0 / 15.0 - x2 * (2.0 / 189.0 - x2 / 675.0))};
    }
    const double inv = 1.0 / x;
    if (ax > 20.0) return {(x > 0.0 ? 1.0 : -1.0) - inv, inv * inv};
    const double e = std::exp(-2.0 * ax);
    const double one_minus = 1.0 - e;
    const double coth = (1.0 + e) / one_minus * (x > 0.0 ? 1.0 : -1.0);
    return {coth - inv, inv * inv - 4.0 * e / (one_minus * one_minus)};
}

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

void check_finite(const LimbState& s) {
    if (!std::isfinite(s.h) || !std::isfinite(s.m) || !std::isfinite(s.b)) {
        throw NonFiniteState("Jiles-Atherton state became non-finite (h=" + std::to_string(s.h) +
                             ", m=" + std::to_string(s.m) + ")");
    }
}

double clamp_m(double m, const JaParameters& p) { return std::clamp(m, -p.m_s, p.m_s); }

}  // namespace

void JaParameters::validate() const {
    if (!(m_s > 0.0) || !(a > 0.0) || !(k > 0.0) || !(alpha >= 0.0) || !(c >= 0.0 && c <= 1.0)) {
        throw InvalidArgument("invalid Jiles-Atherton parameters: need m_s>0, a>0, k>0, alpha>=0, 0<=c<=1");
    }
    if (alpha * c * m_s / (3.0 * a) >= 1.0) {
        throw InvalidArgument("invalid Jiles-Atherton parameters: alpha*c*m_s/(3a) must stay below 1");
    }
}

double anhysteretic(double h_e, const JaParameters& p) { return p.m_s * langevin(h_e / p.a).value; }

double anhysteretic_slope(double h_e, const JaParameters& p) {
    return p.m_s / p.a * langevin(h_e / p.a).slope;
}

double susceptibility(const LimbState& s, double direction, const JaParameters& p) {
    const double h_e = s.h + p.alpha * s.m;
    const Langevin l = langevin(h_e / p.a);
    const double diff = p.m_s * l.value - s.m;
    double irreversible = 0.0;
    if (diff * direction >= 0.0) {
        // direction*denominator = k - alpha*|diff| on this branch
        double den = p.k - p.alpha * std::abs(diff);
        den = std::max(den, kDenominatorFloor * p.k);
        irreversible = std::abs(diff) / den;
    }
    // The reversible term uses dMan/dH = dMan/dHe * (1 + alpha * dM/dH); solving
    // for dM/dH gives the denominator below.
    const double reversible = p.c * p.m_s / p.a * l.slope;
    const double den = std::max(1.0 - p.alpha * reversible, kFeedbackFloor);
    return (irreversible + reversible) / den;
}

LimbState ja_step(const LimbState& s, double dh, const JaParameters& p, const StepOptions& opts) {
    if (dh == 0.0) return s;
    const double direction = sign_of(dh);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(dh) / opts.max_dh)));
    const double sub = dh / n;
    double h = s.h;
    double m = s.m;
    for (int i = 0; i < n; ++i) {
        const double k1 = susceptibility(LimbState::from_hm(h, m), direction, p);
        const double m_mid = clamp_m(m + 0.5 * sub * k1, p);
        const double k2 = susceptibility(LimbState::from_hm(h + 0.5 * sub, m_mid), direction, p);
        m = clamp_m(m + sub * k2, p);
        h = s.h + sub * (i + 1);
    }
    h = s.h + dh;
    LimbState out = LimbState::from_hm(h, m);
    check_finite(out);
    return out;
}

LimbState inverse_step_to_b(const LimbState& s, double b_target, const JaParameters& p, double tol,
                            const InverseOptions& opts) {
    if (!(std::abs(b_target) < kMu0 * (opts.h_max + p.m_s))) {
        throw InvalidArgument("target flux density beyond reachable range");
    }
    const double scale = tol * std::max(std::abs(b_target), 0.1);
    if (std::abs(s.b - b_target) <= scale) return s;

    const double direction = sign_of(b_target - s.b);
    auto residual = [&](double dh) { return ja_step(s, dh, p, opts.step).b - b_target; };

    // Bracket the root on the monotone branch dh*direction > 0.
    double lo = 0.0;
    double f_lo = s.b - b_target;
    double hi = direction * std::max(std::abs(b_target - s.b) * incremental_dh_db(s, direction, p),
                                     opts.step.max_dh);
    double f_hi = residual(hi);
    int iterations = 1;
    while (f_hi * direction < 0.0) {
        if (++iterations > opts.max_iterations || std::abs(s.h + hi) > opts.h_max) {
            throw NoConvergence("inverse_step_to_b: could not bracket target flux density");
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = residual(hi);
    }
    if (std::abs(f_hi) <= scale) return ja_step(s, hi, p, opts.step);

    // Illinois regula falsi.
    int side = 0;
    while (iterations++ < opts.max_iterations) {
        double mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if (!(mid > std::min(lo, hi) && mid < std::max(lo, hi))) mid = 0.5 * (lo + hi);
        const double f_mid = residual(mid);
        if (std::abs(f_mid) <= scale) return ja_step(s, mid, p, opts.step);
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
            if (side == -1) f_hi *= 0.5;
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if (side == 1) f_lo *= 0.5;
            side = 1;
        }
    }
    throw NoConvergence("inverse_step_to_b: no convergence within iteration cap");
}

double incremental_dh_db(const LimbState& s, double direction, const JaParameters& p) {
    return 1.0 / (kMu0 * (1.0 + susceptibility(s, direction, p)));
}

namespace {

// dH/dB at fixed B, in (0, 1/mu0].
double dh_db_at(double b, double h, double direction, const JaParameters& p) {
    const double x = susceptibility(LimbState::from_hm(h, b / kMu0 - h), direction, p);
    return 1.0 / (kMu0 * (1.0 + x));
}

struct ImplicitStep {
    double h;
    double error;
};

// Backward Euler on dH/dB from (b0, h0) to b0 + db. H is the integrated
// variable; integrating M instead would recover H as a small difference of
// two large numbers below saturation. Backward Euler is used because the
// irreversible term switches on and off in saturation, where M slides along
// Man with a relaxation rate near 1/(mu0 k) per tesla: the implicit step stays
// stable there, and its end point is a continuous, increasing function of the
// target. The root is bracketed since dH/dB lies in (0, 1/mu0]. `error` is
// the difference to the trapezoidal estimate.
ImplicitStep backward_euler(double b0, double h0, double db, double direction, const JaParameters& p) {
    const double b1 = b0 + db;
    const double g0 = dh_db_at(b0, h0, direction, p);
    double lo = std::min(h0, h0 + db / kMu0);
    double hi = std::max(h0, h0 + db / kMu0);
    double x = h0 + db * g0;
    double gx = dh_db_at(b1, x, direction, p);
    double fx = x - h0 - db * gx;
    double x_prev = 0.0;
    double f_prev = 0.0;
    bool have_prev = false;
    const double scale = 1e-10 * (std::abs(x) + std::abs(db) / kMu0 + 1.0);
    for (int it = 0; it < 60 && std::abs(fx) > scale; ++it) {
        (fx < 0.0 ? lo : hi) = x;
        double slope = 1.0;
        if (have_prev && x != x_prev) slope = (fx - f_prev) / (x - x_prev);
        double next = x - fx / (slope > 0.0 ? slope : 1.0);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x_prev = x;
        f_prev = fx;
        have_prev = true;
        x = next;
        gx = dh_db_at(b1, x, direction, p);
        fx = x - h0 - db * gx;
        if (hi - lo <= scale) break;
    }
    return {x, std::abs(0.5 * db * (gx - g0))};
}

// Keeps |M| <= Ms at fixed B.
void saturate(double b, double& h, double& m, const JaParameters& p) {
    m = b / kMu0 - h;
    if (std::abs(m) > p.m_s) {
        m = clamp_m(m, p);
        h = b / kMu0 - m;
    }
}

FluxDrivenStep finish(double h, double m, double b_target, double direction, const JaParameters& p) {
    FluxDrivenStep out;
    out.state = {h, m, b_target};
    check_finite(out.state);
    out.dh_db = incremental_dh_db(out.state, direction, p);
    return out;
}

}  // namespace

FluxDrivenStep advance_to_b(const LimbState& s, double b_target, const JaParameters& p,
                            const FluxDrivenOptions& opts, FluxPath* path) {
    if (!(opts.max_db > 0.0) || !(opts.h_tol > 0.0)) {
        throw InvalidArgument("advance_to_b: max_db and h_tol must be > 0");
    }
    if (path) path->assign(1, 1.0);
    const double db = b_target - s.b;
    if (db == 0.0) return {s, incremental_dh_db(s, 1.0, p)};
    if (path) path->clear();
    const double direction = sign_of(db);
    const double total = std::abs(db);
    double h = s.h;
    double m = s.m;
    double done = 0.0;
    double step = std::min(opts.max_db, total);
    while (done < total) {
        const bool last = done + step >= total * (1.0 - 1e-12);
        const double sub = last ? total - done : step;
        const ImplicitStep r = backward_euler(s.b + direction * done, h, direction * sub, direction, p);
        const double tol = opts.h_tol + 1.0e-4 * std::abs(h);
        if (r.error > tol && sub > 1e-9 * total) {
            step = sub * std::max(0.2, 0.9 * std::sqrt(tol / r.error));
            continue;
        }
        done = last ? total : done + sub;
        h = r.h;
        saturate(last ? b_target : s.b + direction * done, h, m, p);
        if (path) path->push_back(last ? 1.0 : done / total);
        const double grow = r.error > 0.0 ? 0.9 * std::sqrt(tol / r.error) : 4.0;
        step = std::min(opts.max_db, sub * std::clamp(grow, 0.2, 4.0));
    }
    return finish(h, m, b_target, direction, p);
}

FluxDrivenStep advance_along(const LimbState& s, double b_target, const JaParameters& p,
                             std::span<const double> path) {
    if (path.empty() || path.back() != 1.0) throw InvalidArgument("advance_along: path must end at 1");
    const double db = b_target - s.b;
    if (db == 0.0) return {s, incremental_dh_db(s, 1.0, p)};
    const double direction = sign_of(db);
    double h = s.h;
    double m = s.m;
    double prev = 0.0;
    for (double frac : path) {
        const double b0 = s.b + db * prev;
        const double b1 = frac == 1.0 ? b_target : s.b + db * frac;
        h = backward_euler(b0, h, b1 - b0, direction, p).h;
        saturate(b1, h, m, p);
        prev = frac;
    }
    return finish(h, m, b_target, direction, p);
}

}  // namespace inrush::ja
