#include "inrush/flux_data.hpp"

#include "inrush/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace inrush::flux {

namespace {

constexpr double kZ95 = 1.96;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(std::string_view field, std::size_t row, std::size_t column) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw ParseError(fmt::format("row {}, column {}: '{}' is not a finite number", row, column, field));
    }
    return value;
}

}  // namespace

void FittedFluxCurve::validate() const {
    if (!(amplitude > 0.0) || !(tolerance >= 0.0) || !std::isfinite(phase) || !(omega > 0.0)) {
        throw InvalidArgument("invalid flux curve: need amplitude > 0, tolerance >= 0, finite phase");
    }
}

CurveSet reference_curves() {
    return {{{0.083, -0.9948, 0.0093}, {0.083, 1.0995, 0.0091}, {0.083, 3.1939, 0.0087}}};
}

double fitted_flux(double theta_open_deg, const FittedFluxCurve& curve) {
    const double theta = std::fmod(theta_open_deg, 360.0);
    return curve.amplitude * std::sin(deg2rad(theta) + curve.phase);
}

SwitchingScenario sample_scenario(double theta_open_deg, const CurveSet& curves, std::mt19937_64& rng) {
    SwitchingScenario s;
    s.theta_open_deg = theta_open_deg;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        curves[i].validate();
        const double delta = curves[i].tolerance;
        const double noise = std::clamp(normal(rng) * delta / kZ95, -delta, delta);
        s.flux[i] = fitted_flux(theta_open_deg, curves[i]) + noise;
    }
    return s;
}

std::vector<SwitchingScenario> sample_scenarios(std::size_t count, const CurveSet& curves, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> angle(0, 359);
    std::vector<SwitchingScenario> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_scenario(angle(rng), curves, rng));
    return out;
}

FittedFluxCurve fit_sine(std::span<const FluxPoint> points, double f) {
    if (points.size() < 3) throw DegenerateFit("fit_sine: need at least 3 points");
    // Normal equations of phi = p*sin(theta) + q*cos(theta).
    double ss = 0.0, sc = 0.0, cc = 0.0, ys = 0.0, yc = 0.0;
    for (const auto& pt : points) {
        const double th = deg2rad(pt.theta_open_deg);
        const double s = std::sin(th);
        const double c = std::cos(th);
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += pt.flux * s;
        yc += pt.flux * c;
    }
    const double det = ss * cc - sc * sc;
    if (!(std::abs(det) > 1e-12 * std::max(1.0, ss * cc))) {
        throw DegenerateFit("fit_sine: singular normal equations (angles do not span a sine)");
    }
    const double p = (ys * cc - yc * sc) / det;
    const double q = (yc * ss - ys * sc) / det;
    FittedFluxCurve curve;
    curve.amplitude = std::hypot(p, q);
    if (!(curve.amplitude > 0.0)) throw DegenerateFit("fit_sine: zero amplitude");
    curve.phase = std::atan2(q, p);
    curve.omega = 2.0 * std::numbers::pi * f;
    double sq = 0.0;
    for (const auto& pt : points) {
        const double r = pt.flux - fitted_flux(pt.theta_open_deg, curve);
        sq += r * r;
    }
    curve.tolerance = kZ95 * std::sqrt(sq / static_cast<double>(points.size()));
    return curve;
}

CurveSet fit_curves(std::span<const double> theta_open_deg, std::span<const Phase3> flux, double f) {
    if (theta_open_deg.size() != flux.size()) throw InvalidArgument("fit_curves: size mismatch");
    CurveSet out;
    std::vector<FluxPoint> pts(flux.size());
    for (std::size_t leg = 0; leg < 3; ++leg) {
        for (std::size_t i = 0; i < flux.size(); ++i) pts[i] = {theta_open_deg[i], flux[i][leg]};
        out[leg] = fit_sine(pts, f);
    }
    return out;
}

std::vector<SwitchingScenario> load_measurements(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || trim(line).empty()) throw ParseError("measurement CSV: header missing");
    const auto header = split(line);
    const std::vector<std::string_view> expected = {"theta_open_deg", "phi1_wb", "phi2_wb", "phi3_wb"};
    const bool with_close = header.size() == 5 && header[4] == "theta_close_deg";
    if (!(header.size() == 4 || with_close) || !std::equal(expected.begin(), expected.end(), header.begin())) {
        throw ParseError("measurement CSV: header must be theta_open_deg,phi1_wb,phi2_wb,phi3_wb[,theta_close_deg]");
    }
    std::vector<SwitchingScenario> out;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size()) {
            throw ParseError(fmt::format("row {}: expected {} columns, found {}", row, header.size(), fields.size()));
        }
        SwitchingScenario s;
        s.theta_open_deg = parse_number(fields[0], row, 1);
        for (std::size_t i = 0; i < 3; ++i) s.flux[i] = parse_number(fields[i + 1], row, i + 2);
        if (with_close) s.theta_close_deg = parse_number(fields[4], row, 5);
        if (s.theta_open_deg < 0.0 || s.theta_open_deg >= 360.0) {
            throw RangeError(fmt::format("row {}: theta_open_deg {} outside [0, 360)", row, s.theta_open_deg));
        }
        if (s.theta_close_deg && (*s.theta_close_deg < 0.0 || *s.theta_close_deg >= 360.0)) {
            throw RangeError(fmt::format("row {}: theta_close_deg {} outside [0, 360)", row, *s.theta_close_deg));
        }
        out.push_back(s);
    }
    return out;
}

std::vector<SwitchingScenario> load_measurements(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError(fmt::format("cannot open measurement file '{}'", path));
    return load_measurements(is);
}

void write_scenarios_csv(std::ostream& os, std::span<const SwitchingScenario> scenarios) {
    const bool with_close = std::any_of(scenarios.begin(), scenarios.end(),
                                        [](const SwitchingScenario& s) { return s.theta_close_deg.has_value(); });
    os << "theta_open_deg,phi1_wb,phi2_wb,phi3_wb" << (with_close ? ",theta_close_deg\n" : "\n");
    for (const auto& s : scenarios) {
        os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}", s.theta_open_deg, s.flux[0], s.flux[1], s.flux[2]);
        if (with_close) os << fmt::format(",{:.17g}", s.theta_close_deg.value_or(0.0));
        os << '\n';
    }
}

void write_curves_csv(std::ostream& os, const CurveSet& curves) {
    os << "phase,A_wb,psi_rad,delta_wb\n";
    for (std::size_t i = 0; i < 3; ++i) {
        os << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", i + 1, curves[i].amplitude, curves[i].phase,
                          curves[i].tolerance);
    }
}

}  // namespace inrush::flux
