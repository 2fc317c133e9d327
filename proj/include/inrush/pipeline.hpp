#pragma once

// End-to-end steps behind the command-line tool: table build, training,
// evaluation and validation. Every step is deterministic for a given seed.

#include "inrush/config.hpp"
#include "inrush/environment.hpp"
#include "inrush/rl.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace inrush::harness {

struct Context {
    RunConfig config;
    std::filesystem::path out = ".";
    unsigned jobs = 0;
    std::ostream* log = nullptr; ///< progress messages; null for silence

    /// `p` resolved against `out` unless absolute.
    std::filesystem::path resolve(const std::string& p) const;
    env::TablePaths table_paths() const;
};

struct TableOutcome {
    std::shared_ptr<const env::InrushTable> table;
    bool built = false;        ///< false when the cache was reused
    double seconds = 0.0;
};

/// Loads the cached table when its fingerprint matches, otherwise builds and
/// saves it.
TableOutcome obtain_table(const Context& ctx);

/// Cached table or TableMissing.
std::shared_ptr<const env::InrushTable> require_table(const Context& ctx);

/// Evaluation curves selected by the configuration.
flux::CurveSet evaluation_curves(const Context& ctx, const env::InrushTable& table);

/// Seed of the evaluation scenario stream for run seed `seed`.
std::uint64_t evaluation_seed(std::uint64_t seed);

struct AgentPaths {
    std::filesystem::path network;
    std::filesystem::path meta;
    std::filesystem::path critic; ///< PPO only
    std::filesystem::path log;
};

AgentPaths agent_paths(const Context& ctx, rl::AgentKind kind);

/// Records the agent, seed and circuit fingerprint next to a network.
struct NetworkMeta {
    rl::AgentKind agent = rl::AgentKind::Ppo;
    std::uint64_t circuit_fingerprint = 0;
    std::uint64_t seed = 0;
    long iterations = 0;
};

void write_meta(const std::filesystem::path& path, const NetworkMeta& meta);
/// Throws ParseError.
NetworkMeta read_meta(const std::filesystem::path& path);

/// Trains on the table and writes network, meta, critic (PPO) and log.
rl::TrainedAgent run_train(const Context& ctx, rl::AgentKind kind);

/// Network for `kind` after checking its fingerprint. Throws
/// FingerprintMismatch, ParseError.
rl::Mlp load_policy(const Context& ctx, rl::AgentKind kind, const std::filesystem::path& network = {});

/// Scenarios from `paths.measurements` when set, otherwise sampled.
std::vector<flux::SwitchingScenario> evaluation_scenarios(const Context& ctx, const env::InrushTable& table);

/// Greedy evaluation; writes `<agent>_evaluation.csv` and `<agent>_summary.csv`.
rl::EvaluationResult run_evaluate(const Context& ctx, rl::AgentKind kind, const std::filesystem::path& network = {});

struct ColumnStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct ValidationRow {
    int theta_open = 0;
    ColumnStats baseline;
    std::vector<ColumnStats> agents;
};

struct ValidationReport {
    std::vector<std::string> agent_names;
    std::vector<ValidationRow> rows;
    ColumnStats baseline_mean;            ///< column means over rows
    std::vector<ColumnStats> agent_means;
    std::vector<double> reduction_pct;    ///< 100 * (1 - agent mean / baseline mean)
};

/// One greedy decision per agent on each validation opening (table fluxes,
/// table peaks). The baseline is `baseline_draws` uniform random closings per
/// opening unless `paths.baseline` supplies measured values.
ValidationReport build_validation_report(const Context& ctx, const env::InrushTable& table,
                                         const std::vector<std::string>& agent_names,
                                         const std::vector<rl::Mlp>& policies);

/// Adds the "optimal" column (row-minimum closing) after the loaded agents.
ValidationReport run_validate(const Context& ctx, const std::vector<rl::AgentKind>& agents);

/// Columns theta_open_deg, baseline_{mean,min,max}, <agent>_{mean,min,max};
/// a final Mean row and `# reduction_pct` comment lines.
void write_validation_csv(std::ostream& os, const ValidationReport& r);

/// Reads `theta_open_deg,imax_pu`. Throws ParseError, RangeError.
std::vector<std::pair<int, double>> load_baseline(const std::string& path);

}  // namespace inrush::harness
