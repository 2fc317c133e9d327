#include "doctest.h"

#include "inrush/calibrate.hpp"
#include "inrush/config.hpp"
#include "inrush/errors.hpp"
#include "inrush/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace inrush;
using namespace inrush::harness;
namespace fs = std::filesystem;

namespace {

const std::string kCalibrated = std::string(INRUSH_SOURCE_DIR) + "/configs/calibrated.yaml";
const std::string kDefault = std::string(INRUSH_SOURCE_DIR) + "/configs/default.yaml";

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

/// Fast configuration with small agents and a short energization window.
Context small_context(const fs::path& out) {
    Context ctx;
    ctx.out = out;
    ctx.jobs = 1;
    ctx.config.circuit.energization_time = 0.04;
    ctx.config.evaluation.scenarios = 6;
    for (auto kind : {rl::AgentKind::DqnLinear, rl::AgentKind::DqnExponential, rl::AgentKind::Ppo}) {
        auto& hp = ctx.config.hyperparameters(kind);
        hp.hidden = {16};
        hp.batch_size = 32;
        hp.rollout = 32;
        hp.minibatch = 32;
        hp.buffer_size = 1000;
        hp.total_iterations = 600;
    }
    return ctx;
}

/// Synthetic table whose best closing angle depends on the opening angle.
std::shared_ptr<env::InrushTable> synthetic_table(const circuit::CircuitConfig& cfg) {
    auto t = std::make_shared<env::InrushTable>();
    t->fingerprint = cfg.fingerprint();
    const double phi = circuit::nominal_peak_flux(cfg);
    for (int o = 0; o < env::kAngleCount; ++o) {
        const double x = o * std::numbers::pi / 180.0;
        t->remanent.push_back({0.5 * phi * std::sin(x), 0.5 * phi * std::sin(x - 2.0944), 0.5 * phi * std::sin(x + 2.0944)});
        for (int c = 0; c < env::kActionCount; ++c) {
            t->peak_pu.push_back(1.0 + 0.9 * std::cos((c - o) * std::numbers::pi / 180.0));
        }
    }
    return t;
}

ColumnStats column_mean(const std::vector<ValidationRow>& rows, int agent) {
    ColumnStats m;
    for (const auto& r : rows) {
        const ColumnStats& c = agent < 0 ? r.baseline : r.agents[agent];
        m.mean += c.mean / rows.size();
        m.min += c.min / rows.size();
        m.max += c.max / rows.size();
    }
    return m;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("default validation angles") {
    const auto angles = default_validation_angles();
    CHECK(angles.size() == 21);
    for (int a : angles) {
        CHECK(a >= 0);
        CHECK(a < 360);
    }
}

TEST_CASE("configuration round trip") {
    RunConfig cfg;
    cfg.seed = 77;
    cfg.circuit.grid.l = 2.5e-3;
    cfg.circuit.ja.k = 101.25;
    cfg.circuit.leg.area = 0.123456789012345;
    cfg.ppo.learning_rate = 3e-3;
    cfg.dqn_exp.hidden = {32, 16};
    cfg.evaluation.curves = CurveSource::Reference;
    cfg.validation.opening_angles = {1, 2, 3};
    cfg.paths.measurements = "data/m.csv";
    cfg.calibration.max_evaluations = 17;
    const std::string text = dump_config(cfg, {"first line", "second line"});
    CHECK(text.rfind("# first line\n# second line\n", 0) == 0);
    const RunConfig back = parse_config(text);
    CHECK(back == cfg);
    CHECK(parse_config(dump_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("configuration errors") {
    CHECK_THROWS_AS(parse_config("circuit:\n  bogus: 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("unknown_section: 1\n"), ParseError);
    CHECK_THROWS_AS(parse_config("circuit:\n  ja:\n    k: abc\n"), ParseError);
    CHECK_THROWS_AS(parse_config("circuit:\n  dt: 0.01\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_config("rl:\n  ppo:\n    clip: 0.9\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_config("seed: [1, 2\n"), ParseError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ParseError);
    // Missing keys keep their defaults.
    const RunConfig partial = parse_config("seed: 9\n# comment\ncircuit:\n  grid:\n    r: 0.75\n");
    CHECK(partial.seed == 9);
    CHECK(partial.circuit.grid.r == 0.75);
    CHECK(partial.circuit.grid.l == circuit::GridImpedance{}.l);
}

TEST_CASE("shipped configurations load") {
    const RunConfig def = load_config(kDefault);
    CHECK(def.circuit == circuit::CircuitConfig{});
    const RunConfig cal = load_config(kCalibrated);
    CHECK_NOTHROW(cal.validate());
    CHECK(cal.circuit.fingerprint() != def.circuit.fingerprint());
}

TEST_CASE("band violation arithmetic") {
    const CalibrationTargets t;
    CalibrationMetrics m;
    m.worst_pu = 2.0;
    m.max_row_min_pu = 0.2;
    m.steady_fraction = 0.005;
    m.zero_best_pu = 0.1;
    m.zero_worst_pu = 1.0;
    m.zero_ratio = 10.0;
    m.remanence = 0.5;
    CHECK(band_violation(m, t) == 0.0);
    CalibrationMetrics high = m;
    high.worst_pu = 6.0;
    // Upper-bound excesses carry a small margin so the search lands strictly inside.
    CHECK(band_violation(high, t) == doctest::Approx(std::log(2.0) + 1e-3).epsilon(1e-12));
    CalibrationMetrics low = m;
    low.zero_ratio = 2.5;
    CHECK(band_violation(low, t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(describe(m, t).size() == 5);
}

TEST_CASE("calibrated configuration is a fixed point") {
    const RunConfig cal = load_config(kCalibrated);
    const CalibrationResult r = calibrate(cal.circuit, cal.calibration, 0);
    CHECK_FALSE(r.changed);
    CHECK(r.evaluations == 1);
    CHECK(r.violation == 0.0);
    CHECK(r.config == cal.circuit);
    CHECK(r.metrics.zero_ratio >= 5.0);
    CHECK(r.metrics.worst_pu >= 1.5);
    CHECK(r.metrics.worst_pu <= 3.0);
    CHECK(r.metrics.remanence >= 0.3);
    CHECK(r.metrics.remanence <= 0.8);
    const auto lines = provenance(r, cal.calibration);
    CHECK(!lines.empty());
}

TEST_CASE("doubled core area is moved back into the bands") {
    const RunConfig cal = load_config(kCalibrated);
    circuit::CircuitConfig start = cal.circuit;
    start.leg.area *= 2.0;
    start.yoke.area *= 2.0;
    CalibrationTargets capped = cal.calibration;
    capped.max_evaluations = 1;
    try {
        calibrate(start, capped, 0);
        FAIL("expected CalibrationFailed");
    } catch (const CalibrationFailed& e) {
        CHECK(e.best().evaluations == 1);
        CHECK(e.best().violation > 0.0);
        CHECK(e.best().config == start);
    }

    const CalibrationResult r = calibrate(start, cal.calibration, 0);
    CHECK(r.changed);
    CHECK(r.violation == 0.0);
    CHECK(band_violation(measure_calibration(r.config, cal.calibration, 0), cal.calibration) == 0.0);
    CHECK(r.area_scale < 1.0);
}

TEST_CASE("network metadata round trip") {
    const fs::path dir = fresh_dir("inrush_meta_test");
    const NetworkMeta meta{rl::AgentKind::DqnExponential, 0xfeedbeefcafe1234ULL, 42, 70000};
    write_meta(dir / "x.meta", meta);
    const NetworkMeta back = read_meta(dir / "x.meta");
    CHECK(back.agent == meta.agent);
    CHECK(back.circuit_fingerprint == meta.circuit_fingerprint);
    CHECK(back.seed == 42);
    CHECK(back.iterations == 70000);
    std::ofstream(dir / "bad.meta") << "agent nonsense\n";
    CHECK_THROWS(read_meta(dir / "bad.meta"));
    fs::remove_all(dir);
}

TEST_CASE("baseline CSV") {
    const fs::path dir = fresh_dir("inrush_baseline_test");
    std::ofstream(dir / "b.csv") << "theta_open_deg,imax_pu\n10,1.5\n20,0.7\n";
    const auto rows = load_baseline((dir / "b.csv").string());
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == std::pair<int, double>{20, 0.7});
    std::ofstream(dir / "bad.csv") << "theta_open_deg,imax_pu\n400,1.5\n";
    CHECK_THROWS_AS(load_baseline((dir / "bad.csv").string()), RangeError);
    std::ofstream(dir / "worse.csv") << "angle,peak\n";
    CHECK_THROWS_AS(load_baseline((dir / "worse.csv").string()), ParseError);
    fs::remove_all(dir);
}

TEST_CASE("pipeline on a synthetic table") {
    const fs::path dir = fresh_dir("inrush_pipeline_test");
    Context ctx = small_context(dir);
    CHECK_THROWS_AS(require_table(ctx), TableMissing);
    auto table = synthetic_table(ctx.config.circuit);
    fs::create_directories(fs::path(ctx.table_paths().csv).parent_path());
    env::save_table(*table, ctx.table_paths());
    const TableOutcome cached = obtain_table(ctx);
    CHECK_FALSE(cached.built);
    CHECK(cached.table->peak_pu == table->peak_pu);

    const rl::TrainedAgent ppo = run_train(ctx, rl::AgentKind::Ppo);
    const rl::TrainedAgent dqn = run_train(ctx, rl::AgentKind::DqnLinear);
    const AgentPaths pp = agent_paths(ctx, rl::AgentKind::Ppo);
    CHECK(fs::exists(pp.network));
    CHECK(fs::exists(pp.meta));
    CHECK(fs::exists(pp.critic));
    CHECK(fs::exists(pp.log));
    CHECK(load_policy(ctx, rl::AgentKind::Ppo) == ppo.policy);
    CHECK(read_meta(pp.meta).circuit_fingerprint == ctx.config.circuit.fingerprint());

    const auto first = run_evaluate(ctx, rl::AgentKind::Ppo);
    CHECK(first.rows.size() == 6);
    std::ifstream csv(ctx.resolve(ctx.config.paths.results) / "ppo_evaluation.csv");
    std::stringstream a;
    a << csv.rdbuf();
    const auto second = run_evaluate(ctx, rl::AgentKind::Ppo);
    std::ifstream csv2(ctx.resolve(ctx.config.paths.results) / "ppo_evaluation.csv");
    std::stringstream b;
    b << csv2.rdbuf();
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("theta_open_deg,phi1_wb,phi2_wb,phi3_wb,theta_close_deg,imax_pu\n", 0) == 0);

    // Validation report arithmetic.
    const std::vector<std::string> names{"dqn-linear", "ppo"};
    const ValidationReport rep = build_validation_report(ctx, *table, names, {dqn.policy, ppo.policy});
    REQUIRE(rep.rows.size() == 21);
    CHECK(rep.agent_names == names);
    const ColumnStats base = column_mean(rep.rows, -1);
    CHECK(rep.baseline_mean.mean == doctest::Approx(base.mean).epsilon(1e-12));
    for (std::size_t i = 0; i < names.size(); ++i) {
        const ColumnStats m = column_mean(rep.rows, static_cast<int>(i));
        CHECK(rep.agent_means[i].mean == doctest::Approx(m.mean).epsilon(1e-12));
        CHECK(std::abs(rep.reduction_pct[i] - 100.0 * (1.0 - m.mean / base.mean)) < 1e-9);
        for (const auto& r : rep.rows) {
            CHECK(r.agents[i].min <= r.agents[i].mean);
            CHECK(r.agents[i].mean <= r.agents[i].max);
        }
    }
    for (const auto& r : rep.rows) CHECK(r.baseline.min <= r.baseline.max);

    std::ostringstream os;
    write_validation_csv(os, rep);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "theta_open_deg,baseline_mean,baseline_min,baseline_max,dqn-linear_mean,dqn-linear_min,"
                  "dqn-linear_max,ppo_mean,ppo_min,ppo_max");
    int data_rows = 0, mean_rows = 0, reductions = 0;
    while (std::getline(is, line)) {
        if (line.rfind("# reduction_pct", 0) == 0) ++reductions;
        else if (line.rfind("Mean,", 0) == 0) ++mean_rows;
        else ++data_rows;
    }
    CHECK(data_rows == 21);
    CHECK(mean_rows == 1);
    CHECK(reductions == 2);

    // The row-minimum column bounds every agent.
    const ValidationReport opt = run_validate(ctx, {});
    REQUIRE(opt.agent_names == std::vector<std::string>{"optimal"});
    CHECK(opt.baseline_mean.mean == rep.baseline_mean.mean);
    for (double r : rep.reduction_pct) CHECK(opt.reduction_pct[0] >= r);

    // Networks trained for another circuit are refused.
    Context other = ctx;
    other.config.circuit.grid.r = 0.8;
    CHECK_THROWS_AS(load_policy(other, rl::AgentKind::Ppo), FingerprintMismatch);
    fs::remove_all(dir);
}

TEST_CASE("measured baseline replaces the synthetic one") {
    const fs::path dir = fresh_dir("inrush_measured_baseline_test");
    Context ctx = small_context(dir);
    auto table = synthetic_table(ctx.config.circuit);
    ctx.config.validation.opening_angles = {0, 90};
    std::ofstream(dir / "base.csv") << "theta_open_deg,imax_pu\n0,1.2\n90,0.8\n";
    ctx.config.paths.baseline = (dir / "base.csv").string();
    std::mt19937_64 rng(1);
    const rl::Mlp policy = rl::Mlp::make({5, 4, 360}, rng);
    const ValidationReport rep = build_validation_report(ctx, *table, {"p"}, {policy});
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].baseline.mean == 1.2);
    CHECK(rep.rows[1].baseline.max == 0.8);
    CHECK(rep.baseline_mean.mean == doctest::Approx(1.0).epsilon(1e-12));
    fs::remove_all(dir);
}

}  // TEST_SUITE
