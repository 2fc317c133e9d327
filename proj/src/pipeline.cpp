#include "inrush/pipeline.hpp"

#include "inrush/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

namespace inrush::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvaluationStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kBaselineStream = 0xc2b2ae3d27d4eb4fULL;

void say(const Context& ctx, const std::string& msg) {
    if (ctx.log) *ctx.log << msg << std::endl;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw Error(fmt::format("cannot write '{}'", p.string()));
    return os;
}

ColumnStats column(const std::vector<double>& v) {
    ColumnStats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    return s;
}

}  // namespace

fs::path Context::resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : out / path;
}

env::TablePaths Context::table_paths() const { return env::TablePaths::from_stem(resolve(config.paths.table).string()); }

TableOutcome obtain_table(const Context& ctx) {
    const auto paths = ctx.table_paths();
    const std::uint64_t fp = ctx.config.circuit.fingerprint();
    const auto t0 = std::chrono::steady_clock::now();
    TableOutcome out;
    if (auto cached = env::load_cached_table(paths, fp)) {
        out.table = std::make_shared<const env::InrushTable>(std::move(*cached));
        say(ctx, fmt::format("table cache hit ({}), fingerprint {}", paths.binary, circuit::fingerprint_hex(fp)));
    } else {
        say(ctx, fmt::format("building 360 x 360 inrush table, fingerprint {}", circuit::fingerprint_hex(fp)));
        env::TableBuildOptions opts;
        opts.jobs = ctx.jobs;
        std::size_t last_pct = 0;
        std::mutex m;
        opts.progress = [&](std::size_t done, std::size_t total) {
            const std::size_t pct = 100 * done / total;
            const std::lock_guard lock(m);
            if (pct >= last_pct + 10) {
                last_pct = pct - pct % 10;
                say(ctx, fmt::format("  {:3d}% of {} simulations", last_pct, total));
            }
        };
        env::InrushTable table = env::build_inrush_table(ctx.config.circuit, opts);
        fs::create_directories(fs::path(paths.binary).parent_path());
        env::save_table(table, paths);
        out.table = std::make_shared<const env::InrushTable>(std::move(table));
        out.built = true;
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::shared_ptr<const env::InrushTable> require_table(const Context& ctx) {
    const auto paths = ctx.table_paths();
    auto table = env::load_cached_table(paths, ctx.config.circuit.fingerprint());
    if (!table) {
        throw TableMissing(fmt::format("no inrush table for this configuration at '{}'; run build-table first",
                                       paths.binary));
    }
    return std::make_shared<const env::InrushTable>(std::move(*table));
}

flux::CurveSet evaluation_curves(const Context& ctx, const env::InrushTable& table) {
    if (ctx.config.evaluation.curves == CurveSource::Reference) return flux::reference_curves();
    std::vector<double> angles(table.remanent.size());
    std::iota(angles.begin(), angles.end(), 0.0);
    return flux::fit_curves(angles, table.remanent, ctx.config.circuit.f);
}

std::uint64_t evaluation_seed(std::uint64_t seed) { return seed ^ kEvaluationStream; }

AgentPaths agent_paths(const Context& ctx, rl::AgentKind kind) {
    const std::string name = rl::to_string(kind);
    const fs::path nets = ctx.resolve(ctx.config.paths.networks);
    return {nets / (name + ".net"), nets / (name + ".net.meta"), nets / (name + ".critic.net"),
            ctx.resolve(ctx.config.paths.logs) / (name + "_log.csv")};
}

void write_meta(const fs::path& path, const NetworkMeta& meta) {
    auto os = open_out(path);
    os << "agent " << rl::to_string(meta.agent) << '\n'
       << "circuit_fingerprint " << circuit::fingerprint_hex(meta.circuit_fingerprint) << '\n'
       << "seed " << meta.seed << '\n'
       << "iterations " << meta.iterations << '\n';
}

NetworkMeta read_meta(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError(fmt::format("missing network metadata '{}'", path.string()));
    NetworkMeta meta;
    std::string key;
    std::string value;
    bool have_fp = false;
    bool have_agent = false;
    while (is >> key >> value) {
        try {
            if (key == "agent") {
                meta.agent = rl::agent_from_string(value);
                have_agent = true;
            } else if (key == "circuit_fingerprint") {
                meta.circuit_fingerprint = std::stoull(value, nullptr, 16);
                have_fp = true;
            } else if (key == "seed") {
                meta.seed = std::stoull(value);
            } else if (key == "iterations") {
                meta.iterations = std::stol(value);
            }
        } catch (const std::exception&) {
            throw ParseError(fmt::format("{}: bad value '{}' for '{}'", path.string(), value, key));
        }
    }
    if (!have_fp || !have_agent) throw ParseError(fmt::format("{}: incomplete metadata", path.string()));
    return meta;
}

rl::TrainedAgent run_train(const Context& ctx, rl::AgentKind kind) {
    const auto table = require_table(ctx);
    const env::Environment environment(ctx.config.circuit, table, evaluation_curves(ctx, *table));
    rl::TableBandit bandit(environment);
    const rl::Hyperparameters& hp = ctx.config.hyperparameters(kind);
    const long every = std::max<long>(hp.total_iterations / 10, 1);
    rl::TrainedAgent agent = rl::train(kind, bandit, hp, ctx.config.seed, [&](const rl::TrainingLogRow& row) {
        if (row.iteration % every < hp.log_every) {
            say(ctx, fmt::format("  {} iteration {:6d}  mean reward {:+.4f}  explore {:.4g}", rl::to_string(kind),
                                 row.iteration, row.mean_episode_reward, row.explore_metric));
        }
    });
    const AgentPaths paths = agent_paths(ctx, kind);
    fs::create_directories(paths.network.parent_path());
    rl::save_mlp(paths.network.string(), agent.policy);
    if (agent.critic) rl::save_mlp(paths.critic.string(), *agent.critic);
    write_meta(paths.meta, {kind, ctx.config.circuit.fingerprint(), ctx.config.seed, hp.total_iterations});
    auto log = open_out(paths.log);
    rl::write_training_log_csv(log, agent.log);
    return agent;
}

rl::Mlp load_policy(const Context& ctx, rl::AgentKind kind, const fs::path& network) {
    const fs::path net = network.empty() ? agent_paths(ctx, kind).network : network;
    const NetworkMeta meta = read_meta(fs::path(net.string() + ".meta"));
    const std::uint64_t fp = ctx.config.circuit.fingerprint();
    if (meta.circuit_fingerprint != fp) {
        throw FingerprintMismatch(fmt::format("network '{}' was trained for circuit {} but the configuration is {}",
                                              net.string(), circuit::fingerprint_hex(meta.circuit_fingerprint),
                                              circuit::fingerprint_hex(fp)));
    }
    return rl::load_mlp(net.string());
}

std::vector<flux::SwitchingScenario> evaluation_scenarios(const Context& ctx, const env::InrushTable& table) {
    if (!ctx.config.paths.measurements.empty()) {
        return flux::load_measurements(ctx.resolve(ctx.config.paths.measurements).string());
    }
    return flux::sample_scenarios(ctx.config.evaluation.scenarios, evaluation_curves(ctx, table),
                                  evaluation_seed(ctx.config.seed));
}

rl::EvaluationResult run_evaluate(const Context& ctx, rl::AgentKind kind, const fs::path& network) {
    const rl::Mlp policy = load_policy(ctx, kind, network);
    const auto table = require_table(ctx);
    const auto scenarios = evaluation_scenarios(ctx, *table);
    rl::EvaluationResult result = rl::evaluate_policy(policy, scenarios, ctx.config.circuit, ctx.jobs);
    const fs::path dir = ctx.resolve(ctx.config.paths.results);
    const std::string name = rl::to_string(kind);
    auto rows = open_out(dir / (name + "_evaluation.csv"));
    rl::write_evaluation_csv(rows, result);
    auto summary = open_out(dir / (name + "_summary.csv"));
    rl::write_summary_csv(summary, result.stats);
    return result;
}

std::vector<std::pair<int, double>> load_baseline(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError(fmt::format("cannot open baseline '{}'", path));
    std::string line;
    if (!std::getline(is, line)) throw ParseError(fmt::format("{}: header missing", path));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "theta_open_deg,imax_pu") throw ParseError(fmt::format("{}: header must be theta_open_deg,imax_pu", path));
    std::vector<std::pair<int, double>> out;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::istringstream fields(line);
        double angle = 0.0;
        double peak = 0.0;
        char comma = 0;
        if (!(fields >> angle >> comma >> peak) || comma != ',' || !std::isfinite(peak) || peak < 0.0) {
            throw ParseError(fmt::format("{}: row {} is malformed", path, row));
        }
        if (angle < 0.0 || angle >= 360.0 || angle != std::floor(angle)) {
            throw RangeError(fmt::format("{}: row {}: opening angle {} is not an integer in [0, 360)", path, row, angle));
        }
        out.emplace_back(static_cast<int>(angle), peak);
    }
    return out;
}

ValidationReport build_validation_report(const Context& ctx, const env::InrushTable& table,
                                         const std::vector<std::string>& agent_names,
                                         const std::vector<rl::Mlp>& policies) {
    if (agent_names.size() != policies.size()) throw InvalidArgument("one name per policy required");
    const auto& settings = ctx.config.validation;
    const double phi_nom = circuit::nominal_peak_flux(ctx.config.circuit);

    std::map<int, std::vector<double>> measured;
    if (!ctx.config.paths.baseline.empty()) {
        for (const auto& [angle, peak] : load_baseline(ctx.resolve(ctx.config.paths.baseline).string())) {
            measured[angle].push_back(peak);
        }
    }
    std::mt19937_64 rng(ctx.config.seed ^ kBaselineStream);
    std::uniform_int_distribution<int> closing(0, env::kActionCount - 1);

    ValidationReport r;
    r.agent_names = agent_names;
    for (int angle : settings.opening_angles) {
        ValidationRow row;
        row.theta_open = angle;
        std::vector<double> base;
        if (!measured.empty()) {
            const auto it = measured.find(angle);
            if (it == measured.end()) throw InvalidArgument(fmt::format("baseline has no rows for {} deg", angle));
            base = it->second;
        } else {
            for (int i = 0; i < settings.baseline_draws; ++i) base.push_back(table.at(angle, closing(rng)));
        }
        row.baseline = column(base);
        const env::MdpState st = env::make_state(angle, table.remanent[static_cast<std::size_t>(angle)], phi_nom);
        const Eigen::Map<const Eigen::VectorXd> x(st.features.data(), env::kFeatureCount);
        for (const auto& policy : policies) {
            const double peak = table.at(angle, rl::greedy_action(policy, x));
            row.agents.push_back({peak, peak, peak});
        }
        r.rows.push_back(std::move(row));
    }

    const auto n = static_cast<double>(r.rows.size());
    for (const auto& row : r.rows) {
        r.baseline_mean.mean += row.baseline.mean / n;
        r.baseline_mean.min += row.baseline.min / n;
        r.baseline_mean.max += row.baseline.max / n;
    }
    r.agent_means.assign(policies.size(), {});
    for (std::size_t a = 0; a < policies.size(); ++a) {
        for (const auto& row : r.rows) {
            r.agent_means[a].mean += row.agents[a].mean / n;
            r.agent_means[a].min += row.agents[a].min / n;
            r.agent_means[a].max += row.agents[a].max / n;
        }
        r.reduction_pct.push_back(100.0 * (1.0 - r.agent_means[a].mean / r.baseline_mean.mean));
    }
    return r;
}

ValidationReport run_validate(const Context& ctx, const std::vector<rl::AgentKind>& agents) {
    const auto table = require_table(ctx);
    std::vector<std::string> names;
    std::vector<rl::Mlp> policies;
    for (rl::AgentKind kind : agents) {
        names.push_back(rl::to_string(kind));
        policies.push_back(load_policy(ctx, kind));
    }
    ValidationReport r = build_validation_report(ctx, *table, names, policies);

    // Row-minimum closing: the best any agent can do on these openings.
    r.agent_names.push_back("optimal");
    double mean = 0.0;
    for (auto& row : r.rows) {
        const double peak = table->at(row.theta_open, table->row_argmin(row.theta_open));
        row.agents.push_back({peak, peak, peak});
        mean += peak / static_cast<double>(r.rows.size());
    }
    r.agent_means.push_back({mean, mean, mean});
    r.reduction_pct.push_back(100.0 * (1.0 - mean / r.baseline_mean.mean));

    auto os = open_out(ctx.resolve(ctx.config.paths.results) / "validation.csv");
    write_validation_csv(os, r);
    return r;
}

void write_validation_csv(std::ostream& os, const ValidationReport& r) {
    os << "theta_open_deg,baseline_mean,baseline_min,baseline_max";
    for (const auto& name : r.agent_names) os << fmt::format(",{0}_mean,{0}_min,{0}_max", name);
    os << '\n';
    auto cells = [&](const ColumnStats& s) { return fmt::format(",{:.17g},{:.17g},{:.17g}", s.mean, s.min, s.max); };
    for (const auto& row : r.rows) {
        os << row.theta_open << cells(row.baseline);
        for (const auto& a : row.agents) os << cells(a);
        os << '\n';
    }
    os << "Mean" << cells(r.baseline_mean);
    for (const auto& a : r.agent_means) os << cells(a);
    os << '\n';
    for (std::size_t i = 0; i < r.agent_names.size(); ++i) {
        os << fmt::format("# reduction_pct {} {:.17g}\n", r.agent_names[i], r.reduction_pct[i]);
    }
}

}  // namespace inrush::harness
