#include "inrush/calibrate.hpp"
#include "inrush/config.hpp"
#include "inrush/errors.hpp"
#include "inrush/parallel.hpp"
#include "inrush/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace inrush;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 0;
    std::string out = "out";
};

harness::Context make_context(const GlobalOptions& g) {
    harness::Context ctx;
    ctx.config = g.config.empty() ? harness::RunConfig{} : harness::load_config(g.config);
    if (g.seed) ctx.config.seed = *g.seed;
    ctx.out = g.out;
    ctx.jobs = g.jobs;
    ctx.log = &std::cout;
    fs::create_directories(ctx.out);
    return ctx;
}

std::vector<rl::AgentKind> parse_agents(const std::string& s) {
    if (s == "all") return {rl::AgentKind::DqnLinear, rl::AgentKind::DqnExponential, rl::AgentKind::Ppo};
    std::vector<rl::AgentKind> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        out.push_back(rl::agent_from_string(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void print_stats(const rl::SummaryStats& s) {
    std::cout << fmt::format("  Mean    {:.4f} pu\n  Median  {:.4f} pu\n  Q1      {:.4f} pu\n  Q3      {:.4f} pu\n"
                             "  Minimum {:.4f} pu\n  Maximum {:.4f} pu\n",
                             s.mean, s.median, s.q1, s.q3, s.min, s.max);
}

int cmd_build_table(const GlobalOptions& g, int spot) {
    const auto ctx = make_context(g);
    const auto outcome = harness::obtain_table(ctx);
    const auto& table = *outcome.table;
    std::cout << fmt::format("table {} in {:.1f} s: {}\n", outcome.built ? "built" : "loaded", outcome.seconds,
                             ctx.table_paths().csv);
    double worst = 0.0;
    double worst_row_min = 0.0;
    for (int o = 0; o < env::kAngleCount; ++o) {
        worst = std::max(worst, table.at(o, table.row_argmax(o)));
        worst_row_min = std::max(worst_row_min, table.at(o, table.row_argmin(o)));
    }
    std::cout << fmt::format("worst cell {:.4f} pu, largest row minimum {:.4f} pu\n", worst, worst_row_min);
    if (spot > 0) {
        const auto checks = env::spot_check(table, ctx.config.circuit, static_cast<std::size_t>(spot), ctx.config.seed,
                                            ctx.jobs);
        std::size_t bad = 0;
        for (const auto& c : checks) {
            if (!c.exact()) {
                ++bad;
                std::cerr << fmt::format("spot check mismatch at ({}, {}): cached {:.17g}, direct {:.17g}\n",
                                         c.theta_open, c.theta_close, c.cached, c.direct);
            }
        }
        std::cout << fmt::format("spot check: {} of {} cells identical\n", checks.size() - bad, checks.size());
        if (bad) return 1;
    }
    return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& agents) {
    const auto ctx = make_context(g);
    for (rl::AgentKind kind : parse_agents(agents)) {
        std::cout << fmt::format("training {} for {} iterations (seed {})\n", rl::to_string(kind),
                                 ctx.config.hyperparameters(kind).total_iterations, ctx.config.seed);
        const auto agent = harness::run_train(ctx, kind);
        const auto paths = harness::agent_paths(ctx, kind);
        std::cout << fmt::format("{}: final trailing mean reward {:+.4f}; wrote {} and {}\n", rl::to_string(kind),
                                 agent.log.empty() ? 0.0 : agent.log.back().mean_episode_reward,
                                 paths.network.string(), paths.log.string());
    }
    return 0;
}

int cmd_evaluate(GlobalOptions g, const std::string& agents, const std::string& network, const std::string& scenarios) {
    auto ctx = make_context(g);
    if (!scenarios.empty()) ctx.config.paths.measurements = fs::absolute(scenarios).string();
    const auto kinds = parse_agents(agents);
    if (!network.empty() && kinds.size() != 1) throw InvalidArgument("--network needs exactly one --agent");
    for (rl::AgentKind kind : kinds) {
        const auto result = harness::run_evaluate(ctx, kind, network);
        std::cout << fmt::format("{} on {} scenarios:\n", rl::to_string(kind), result.rows.size());
        print_stats(result.stats);
    }
    return 0;
}

int cmd_validate(GlobalOptions g, const std::string& agents, const std::string& baseline) {
    auto ctx = make_context(g);
    if (!baseline.empty()) ctx.config.paths.baseline = fs::absolute(baseline).string();
    const auto report = harness::run_validate(ctx, parse_agents(agents));
    std::cout << fmt::format("validation over {} openings, baseline mean {:.4f} pu\n", report.rows.size(),
                             report.baseline_mean.mean);
    for (std::size_t i = 0; i < report.agent_names.size(); ++i) {
        std::cout << fmt::format("  {:<10} mean {:.4f} pu  reduction {:.1f} %\n", report.agent_names[i],
                                 report.agent_means[i].mean, report.reduction_pct[i]);
    }
    return 0;
}

int cmd_simulate(const GlobalOptions& g, std::optional<double> open, std::vector<double> remanent,
                 std::optional<double> close, bool sweep, std::string waveform) {
    const auto ctx = make_context(g);
    const auto& cfg = ctx.config.circuit;
    auto check_angle = [](double a, const char* what) {
        if (!std::isfinite(a) || a < 0.0 || a >= 360.0) {
            throw RangeError(fmt::format("{} {} outside [0, 360)", what, a));
        }
    };
    circuit::Phase3 phi{0.0, 0.0, 0.0};
    if (open) {
        if (!remanent.empty()) throw InvalidArgument("give either --open or --remanent, not both");
        check_angle(*open, "opening angle");
        phi = circuit::simulate_deenergization(cfg, *open);
    } else if (!remanent.empty()) {
        if (remanent.size() != 3) throw InvalidArgument("--remanent needs three fluxes");
        phi = {remanent[0], remanent[1], remanent[2]};
    }
    std::cout << fmt::format("remanent fluxes {:.6f} {:.6f} {:.6f} Wb\n", phi[0], phi[1], phi[2]);
    const fs::path dir = ctx.resolve(ctx.config.paths.results);
    fs::create_directories(dir);
    if (sweep) {
        const circuit::CircuitModel model(cfg);
        std::vector<double> peaks(env::kAngleCount);
        parallel_for(peaks.size(), ctx.jobs, [&](std::size_t c) {
            peaks[c] = circuit::peak_inrush_pu(model, phi, static_cast<double>(c));
        });
        const fs::path path = waveform.empty() ? dir / "sweep_close.csv" : fs::path(waveform);
        std::ofstream os(path);
        os << "theta_close_deg,imax_pu\n";
        for (std::size_t c = 0; c < peaks.size(); ++c) os << fmt::format("{},{:.17g}\n", c, peaks[c]);
        const auto best = std::min_element(peaks.begin(), peaks.end());
        const auto worst = std::max_element(peaks.begin(), peaks.end());
        std::cout << fmt::format("{} closing angles: best {:.4f} pu at {} deg, worst {:.4f} pu at {} deg; wrote {}\n",
                                 peaks.size(), *best, best - peaks.begin(), *worst, worst - peaks.begin(),
                                 path.string());
        return 0;
    }
    if (!close) throw InvalidArgument("--close is required unless --sweep-close is given");
    check_angle(*close, "closing angle");
    const auto result = circuit::simulate_energization(cfg, phi, *close, true);
    const fs::path path = waveform.empty() ? dir / "waveform.csv" : fs::path(waveform);
    circuit::write_waveform_csv(path.string(), result.waveform);
    std::cout << fmt::format("i_max = {:.6f} pu ({:.1f} A); wrote {} ({} samples)\n", result.i_max_pu,
                             result.i_max_pu * circuit::base_current(cfg), path.string(), result.waveform.size());
    return 0;
}

int cmd_calibrate(const GlobalOptions& g, std::string output) {
    auto ctx = make_context(g);
    const auto& targets = ctx.config.calibration;
    if (output.empty()) output = (ctx.out / "calibrated.yaml").string();
    auto observer = [](int n, const harness::CalibrationResult& r, bool accepted) {
        std::cout << fmt::format("  [{:3d}] scale {:.4f} k {:.4g} c {:.4g} a {:.4g} grid_l {:.4g}: worst {:.3f} pu, "
                                 "steady {:.3f} %, ratio {:.1f}, remanence {:.3f}, violation {:.4f}{}\n",
                                 n, r.area_scale, r.config.ja.k, r.config.ja.c, r.config.ja.a, r.config.grid.l,
                                 r.metrics.worst_pu, 100.0 * r.metrics.steady_fraction, r.metrics.zero_ratio,
                                 r.metrics.remanence, r.violation, accepted ? " *" : "");
    };
    try {
        const auto result = harness::calibrate(ctx.config.circuit, targets, ctx.jobs, observer);
        ctx.config.circuit = result.config;
        harness::save_config(output, ctx.config, harness::provenance(result, targets));
        for (const auto& line : harness::describe(result.metrics, targets)) std::cout << "  " << line << '\n';
        std::cout << fmt::format("calibrated configuration written to {}\n", output);
        return 0;
    } catch (const harness::CalibrationFailed& e) {
        ctx.config.circuit = e.best().config;
        const std::string best_path = output + ".best";
        harness::save_config(best_path, ctx.config, harness::provenance(e.best(), targets));
        std::cerr << "error: " << e.what() << '\n';
        for (const auto& line : harness::describe(e.best().metrics, targets)) std::cerr << "  " << line << '\n';
        std::cerr << fmt::format("best candidate written to {}\n", best_path);
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inrush current simulation and controlled-closing agents"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "YAML run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_option("--jobs", g.jobs, "Worker threads (0: all cores)");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    auto* build = app.add_subcommand("build-table", "Build or load the 360 x 360 inrush table");
    int spot = 0;
    build->add_option("--spot-check", spot, "Re-simulate N random cells and require identical values");

    auto* train = app.add_subcommand("train", "Train agents on the table");
    std::string train_agents = "all";
    train->add_option("--agent", train_agents, "dqn-linear, dqn-exp, ppo, a comma list or all")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Greedy evaluation by direct simulation");
    std::string eval_agents = "all";
    std::string network;
    std::string scenarios;
    evaluate->add_option("--agent", eval_agents, "Agents to evaluate")->capture_default_str();
    evaluate->add_option("--network", network, "Network file (default: the trained one)");
    evaluate->add_option("--scenarios", scenarios, "Scenario CSV (default: sampled)");

    auto* validate = app.add_subcommand("validate", "Compare agents with random closing on the validation openings");
    std::string val_agents = "all";
    std::string baseline;
    validate->add_option("--agents", val_agents, "Agents to include")->capture_default_str();
    validate->add_option("--baseline", baseline, "Measured baseline CSV theta_open_deg,imax_pu");

    auto* simulate = app.add_subcommand("simulate", "Simulate one energization");
    std::optional<double> open;
    std::optional<double> close;
    std::vector<double> remanent;
    bool sweep = false;
    std::string waveform;
    simulate->add_option("--open", open, "Opening angle [deg]; deenergizes first");
    simulate->add_option("--remanent", remanent, "Remanent fluxes phi1,phi2,phi3 [Wb]")->delimiter(',')->expected(3);
    simulate->add_option("--close", close, "Closing angle [deg]");
    simulate->add_flag("--sweep-close", sweep, "Peak for every closing angle 0..359");
    simulate->add_option("--output", waveform, "Output CSV path");

    auto* calibrate = app.add_subcommand("calibrate", "Adjust core and source parameters into the target bands");
    std::string cal_output;
    calibrate->add_option("--output", cal_output, "Calibrated configuration (default: <out>/calibrated.yaml)");

    for (auto* sub : {build, train, evaluate, validate, simulate, calibrate}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*build) return cmd_build_table(g, spot);
        if (*train) return cmd_train(g, train_agents);
        if (*evaluate) return cmd_evaluate(g, eval_agents, network, scenarios);
        if (*validate) return cmd_validate(g, val_agents, baseline);
        if (*simulate) return cmd_simulate(g, open, remanent, close, sweep, waveform);
        if (*calibrate) return cmd_calibrate(g, cal_output);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
