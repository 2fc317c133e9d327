#pragma once

// Run configuration read from YAML. Missing keys keep their defaults and
// unknown keys are rejected.

#include "inrush/circuit.hpp"
#include "inrush/rl.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace inrush::harness {

enum class CurveSource {
    Model,     ///< sines fitted to the model's own deenergization sweep
    Reference, ///< published fits of the reference transformer
};

struct EvaluationSettings {
    std::size_t scenarios = 48;
    CurveSource curves = CurveSource::Model;

    bool operator==(const EvaluationSettings&) const = default;
};

/// Opening angles of the validation set.
std::vector<int> default_validation_angles();

struct ValidationSettings {
    std::vector<int> opening_angles = default_validation_angles();
    int baseline_draws = 10; ///< random closings per opening for the synthetic baseline

    bool operator==(const ValidationSettings&) const = default;
};

struct CalibrationTargets {
    double worst_min_pu = 1.5;
    double worst_max_pu = 3.0;
    double steady_min = 0.001; ///< steady line current rms as a fraction of rated
    double steady_max = 0.02;
    double zero_ratio_min = 5.0;   ///< worst / best closing at zero remanence
    double row_min_max_pu = 1.0;   ///< every row's minimum stays below this
    double remanence_min = 0.3;    ///< max |phi1| over openings, per unit of phi_nom
    double remanence_max = 0.8;
    int max_evaluations = 200;
    int opening_step_deg = 10;
    int closing_step_deg = 10;
    double proxy_energization_time = 0.1; ///< [s]

    bool operator==(const CalibrationTargets&) const = default;
};

/// Output locations, relative to the --out directory unless absolute.
struct Paths {
    std::string table = "table/inrush_table"; ///< stem of the table files
    std::string networks = "networks";
    std::string logs = "logs";
    std::string results = "results";
    std::string measurements; ///< optional evaluation scenarios CSV
    std::string baseline;     ///< optional `theta_open_deg,imax_pu` CSV

    bool operator==(const Paths&) const = default;
};

struct RunConfig {
    std::uint64_t seed = 1;
    circuit::CircuitConfig circuit{};
    rl::Hyperparameters dqn_linear = rl::Hyperparameters::defaults(rl::AgentKind::DqnLinear);
    rl::Hyperparameters dqn_exp = rl::Hyperparameters::defaults(rl::AgentKind::DqnExponential);
    rl::Hyperparameters ppo = rl::Hyperparameters::defaults(rl::AgentKind::Ppo);
    EvaluationSettings evaluation{};
    ValidationSettings validation{};
    CalibrationTargets calibration{};
    Paths paths{};

    const rl::Hyperparameters& hyperparameters(rl::AgentKind kind) const;
    rl::Hyperparameters& hyperparameters(rl::AgentKind kind);

    /// Throws InvalidArgument.
    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

/// Throws ParseError, InvalidArgument.
RunConfig parse_config(const std::string& yaml);
RunConfig load_config(const std::string& path);

/// Complete YAML document; `header` lines are emitted as leading comments.
std::string dump_config(const RunConfig& cfg, const std::vector<std::string>& header = {});
void save_config(const std::string& path, const RunConfig& cfg, const std::vector<std::string>& header = {});

}  // namespace inrush::harness
