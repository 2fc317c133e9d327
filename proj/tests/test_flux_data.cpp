#include "doctest.h"

#include "inrush/errors.hpp"
#include "inrush/flux_data.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace inrush::flux;

namespace {

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

std::string measurement_csv(int rows) {
    std::ostringstream os;
    os << "theta_open_deg,phi1_wb,phi2_wb,phi3_wb\n";
    for (int i = 0; i < rows; ++i) os << (i * 7) % 360 << ",0.01,-0.02,0.01\n";
    return os.str();
}

}  // namespace

TEST_SUITE("flux_data") {

TEST_CASE("reference curves") {
    const CurveSet c = reference_curves();
    CHECK(c[0].amplitude == 0.083);
    CHECK(c[0].phase == -0.9948);
    CHECK(c[1].phase == 1.0995);
    CHECK(c[2].phase == 3.1939);
    CHECK(c[0].tolerance == 0.0093);
    CHECK(c[1].tolerance == 0.0091);
    CHECK(c[2].tolerance == 0.0087);
    for (const auto& curve : c) CHECK_NOTHROW(curve.validate());
}

TEST_CASE("curve validation") {
    FittedFluxCurve c{0.0, 0.0, 0.0};
    CHECK_THROWS_AS(c.validate(), inrush::InvalidArgument);
    c = {0.08, 0.0, -0.001};
    CHECK_THROWS_AS(c.validate(), inrush::InvalidArgument);
}

TEST_CASE("fitted flux values") {
    const FittedFluxCurve c{0.083, -0.9948, 0.0093};
    CHECK(std::abs(fitted_flux(deg(0.9948), c)) < 1e-6);
    CHECK(fitted_flux(180.0, c) == doctest::Approx(0.0696).epsilon(0.0005 / 0.0696));
    CHECK(fitted_flux(180.0, c) == doctest::Approx(0.083 * std::sin(std::numbers::pi - 0.9948)).epsilon(1e-12));
    for (double theta : {0.0, 13.5, 200.0, 359.0}) CHECK(fitted_flux(theta + 360.0, c) == fitted_flux(theta, c));
}

TEST_CASE("reference phases sum to nearly zero flux") {
    const CurveSet c = reference_curves();
    double worst = 0.0;
    for (int i = 0; i < 3600; ++i) {
        const double theta = 0.1 * i;
        worst = std::max(worst, std::abs(fitted_flux(theta, c[0]) + fitted_flux(theta, c[1]) + fitted_flux(theta, c[2])));
    }
    CHECK(worst < 2e-4);
}

TEST_CASE("sampling with zero tolerance reproduces the curves") {
    CurveSet c = reference_curves();
    for (auto& curve : c) curve.tolerance = 0.0;
    std::mt19937_64 rng(3);
    const SwitchingScenario s = sample_scenario(123.0, c, rng);
    CHECK(s.theta_open_deg == 123.0);
    for (int p = 0; p < 3; ++p) CHECK(s.flux[p] == fitted_flux(123.0, c[p]));
    CHECK_FALSE(s.theta_close_deg.has_value());
}

TEST_CASE("sampled fluxes follow the clamped Gaussian band") {
    const CurveSet c = reference_curves();
    std::mt19937_64 rng(17);
    const double theta = 75.0;
    int inside_half = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const SwitchingScenario s = sample_scenario(theta, c, rng);
        const double dev = std::abs(s.flux[0] - fitted_flux(theta, c[0]));
        REQUIRE(dev <= c[0].tolerance + 1e-15);
        for (int p = 1; p < 3; ++p) REQUIRE(std::abs(s.flux[p] - fitted_flux(theta, c[p])) <= c[p].tolerance + 1e-15);
        if (dev <= 0.5 * c[0].tolerance) ++inside_half;
    }
    // P(|Z| < 0.98) for a standard normal.
    const double expected = std::erf(0.98 / std::sqrt(2.0));
    CHECK(expected == doctest::Approx(0.67).epsilon(0.01));
    CHECK(static_cast<double>(inside_half) / n == doctest::Approx(0.67).epsilon(0.03 / 0.67));
}

TEST_CASE("scenario streams are reproducible") {
    const CurveSet c = reference_curves();
    const auto a = sample_scenarios(48, c, 99);
    const auto b = sample_scenarios(48, c, 99);
    const auto other = sample_scenarios(48, c, 100);
    CHECK(a.size() == 48);
    CHECK(a == b);
    CHECK(a != other);
    for (const auto& s : a) {
        CHECK(s.theta_open_deg >= 0.0);
        CHECK(s.theta_open_deg < 360.0);
        CHECK(s.theta_open_deg == std::floor(s.theta_open_deg));
    }
}

TEST_CASE("sine fit recovers exact data") {
    std::vector<FluxPoint> pts;
    for (int i = 0; i < 48; ++i) {
        const double theta = 7.5 * i;
        pts.push_back({theta, 0.083 * std::sin(theta * std::numbers::pi / 180.0 + 1.0995)});
    }
    const FittedFluxCurve fit = fit_sine(pts);
    CHECK(fit.amplitude == doctest::Approx(0.083).epsilon(1e-6 / 0.083));
    CHECK(std::abs(fit.phase - 1.0995) < 1e-6);
    CHECK(fit.tolerance < 1e-9);
    CHECK(fit.omega == doctest::Approx(2.0 * std::numbers::pi * 50.0));
}

TEST_CASE("sine fit is robust to measurement noise") {
    std::normal_distribution<double> noise(0.0, 0.004);
    double worst = 0.0;
    double mean_tol = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<FluxPoint> pts;
        for (int i = 0; i < 48; ++i) {
            const double theta = 7.5 * i;
            pts.push_back({theta, 0.083 * std::sin(theta * std::numbers::pi / 180.0 + 1.0995) + noise(rng)});
        }
        const FittedFluxCurve fit = fit_sine(pts);
        worst = std::max(worst, std::abs(fit.amplitude - 0.083));
        mean_tol += fit.tolerance / 100.0;
    }
    CHECK(worst < 0.005);
    // 1.96 * 0.004 is close to the published band widths.
    CHECK(mean_tol == doctest::Approx(1.96 * 0.004).epsilon(0.1));
    CHECK(mean_tol > 0.5 * 0.0087);
    CHECK(mean_tol < 2.0 * 0.0093);
}

TEST_CASE("sine fit rejects degenerate input") {
    const std::vector<FluxPoint> same{{30.0, 0.01}, {30.0, 0.02}, {30.0, 0.03}};
    CHECK_THROWS_AS(fit_sine(same), inrush::DegenerateFit);
    const std::vector<FluxPoint> two{{0.0, 0.01}, {90.0, 0.02}};
    CHECK_THROWS_AS(fit_sine(two), inrush::DegenerateFit);
}

TEST_CASE("fit_curves fits one curve per leg") {
    std::vector<double> angles;
    std::vector<Phase3> flux;
    const CurveSet ref = reference_curves();
    for (int a = 0; a < 360; a += 5) {
        angles.push_back(a);
        flux.push_back({fitted_flux(a, ref[0]), fitted_flux(a, ref[1]), fitted_flux(a, ref[2])});
    }
    const CurveSet fit = fit_curves(angles, flux);
    for (int p = 0; p < 3; ++p) {
        CHECK(fit[p].amplitude == doctest::Approx(ref[p].amplitude).epsilon(1e-9));
        CHECK(std::remainder(fit[p].phase - ref[p].phase, 2.0 * std::numbers::pi) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("measurement CSV parsing") {
    std::istringstream good(measurement_csv(48));
    CHECK(load_measurements(good).size() == 48);

    std::istringstream with_close("theta_open_deg,phi1_wb,phi2_wb,phi3_wb,theta_close_deg\n10,0.01,0.02,-0.03,45\n");
    const auto rows = load_measurements(with_close);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].theta_close_deg.value() == 45.0);
    CHECK(rows[0].flux[2] == -0.03);

    std::istringstream empty("");
    CHECK_THROWS_AS(load_measurements(empty), inrush::ParseError);

    std::istringstream out_of_range("theta_open_deg,phi1_wb,phi2_wb,phi3_wb\n10,0,0,0\n400,0,0,0\n");
    try {
        load_measurements(out_of_range);
        FAIL("expected RangeError");
    } catch (const inrush::RangeError& e) {
        // Rows count file lines, header included.
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }

    std::istringstream bad_number("theta_open_deg,phi1_wb,phi2_wb,phi3_wb\n10,abc,0,0\n");
    try {
        load_measurements(bad_number);
        FAIL("expected ParseError");
    } catch (const inrush::ParseError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 2") != std::string::npos);
        CHECK(what.find("column 2") != std::string::npos);
    }

    std::istringstream bad_header("angle,a,b,c\n1,2,3,4\n");
    CHECK_THROWS_AS(load_measurements(bad_header), inrush::ParseError);
}

TEST_CASE("scenario and curve CSV round trip") {
    const auto scenarios = sample_scenarios(5, reference_curves(), 4);
    std::ostringstream os;
    write_scenarios_csv(os, scenarios);
    std::istringstream is(os.str());
    const auto back = load_measurements(is);
    REQUIRE(back.size() == scenarios.size());
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == scenarios[i]);

    std::ostringstream curves;
    write_curves_csv(curves, reference_curves());
    CHECK(curves.str().rfind("phase,A_wb,psi_rad,delta_wb\n", 0) == 0);
}

}  // TEST_SUITE
