#pragma once

// One-step decision problem around the circuit: encode (opening angle,
// remanent fluxes), pick a closing angle, receive a reward from the peak
// inrush current. A precomputed opening x closing table serves training.

#include "inrush/circuit.hpp"
#include "inrush/flux_data.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace inrush::env {

using circuit::CircuitConfig;
using circuit::Phase3;

inline constexpr int kAngleCount = 360;
inline constexpr int kActionCount = kAngleCount;
inline constexpr std::size_t kFeatureCount = 5;
inline constexpr double kFeatureBound = 1.2;

using Features = std::array<double, kFeatureCount>;

/// -i if i > 1, else 1 - i.
double reward(double i_max_pu);

struct MdpState {
    double theta_open_deg = 0.0;
    Phase3 flux{};
    /// (sin theta, cos theta, phi1/phi_nom, phi2/phi_nom, phi3/phi_nom),
    /// clamped to +/- kFeatureBound.
    Features features{};
};

MdpState make_state(double theta_open_deg, const Phase3& flux, double phi_nom);

/// Peak inrush current for every (opening, closing) pair at 1 degree.
struct InrushTable {
    std::uint64_t fingerprint = 0;
    std::vector<Phase3> remanent;  ///< remanent fluxes per opening angle
    std::vector<double> peak_pu;   ///< row-major [opening][closing]

    double at(int theta_open, int theta_close) const;
    std::span<const double> row(int theta_open) const;
    /// Lowest index attaining the row minimum or maximum.
    int row_argmin(int theta_open) const;
    int row_argmax(int theta_open) const;
};

struct TableBuildOptions {
    unsigned jobs = 0; ///< 0 selects the hardware concurrency
    /// Called with (finished, total) simulations, from worker threads.
    std::function<void(std::size_t, std::size_t)> progress;
};

/// Rows come from one deenergization sweep over 0..359 degrees. Openings that
/// leave bitwise-identical remanent fluxes share their closing sweep, which
/// is exact because each cell is a pure function of (config, fluxes, angle).
/// Throws the solver's errors, prefixed with the failing cell.
InrushTable build_inrush_table(const CircuitConfig& cfg, const TableBuildOptions& opts = {});

/// `theta_open_deg,theta_close_deg,phi1_wb,phi2_wb,phi3_wb,imax_pu`.
void write_table_csv(std::ostream& os, const InrushTable& table);

/// Files belonging to a table stored under `stem`.
struct TablePaths {
    std::string csv;         ///< stem + ".csv"
    std::string fingerprint; ///< stem + ".csv.fingerprint"
    std::string binary;      ///< stem + ".bin"

    static TablePaths from_stem(const std::string& stem);
};

void save_table(const InrushTable& table, const TablePaths& paths);

/// Reads the binary cache. Throws ParseError.
InrushTable read_table_binary(const std::string& path);

/// The binary cache when it exists and matches `fingerprint`.
std::optional<InrushTable> load_cached_table(const TablePaths& paths, std::uint64_t fingerprint);

struct SpotCheck {
    int theta_open = 0;
    int theta_close = 0;
    double cached = 0.0;
    double direct = 0.0;

    bool exact() const { return cached == direct; }
};

/// Re-simulates `count` random cells.
std::vector<SpotCheck> spot_check(const InrushTable& table, const CircuitConfig& cfg, std::size_t count,
                                  std::uint64_t seed, unsigned jobs = 0);

enum class Backend { Table, Direct };
enum class ResetMode { TrainingSweep, Evaluation };

struct StepResult {
    double reward = 0.0;
    double i_max_pu = 0.0;
    bool done = true;
};

class Environment {
public:
    /// `table` may be null; training resets and the table backend then throw
    /// TableMissing.
    Environment(CircuitConfig cfg, std::shared_ptr<const InrushTable> table, flux::CurveSet evaluation_curves);

    /// Single-step episode. The table backend accepts only on-grid states
    /// (integer opening angle carrying that row's fluxes) and throws
    /// BackendMismatch otherwise. Throws InvalidArgument for a bad action.
    StepResult step(const MdpState& state, int action, Backend backend) const;

    /// Training draws a uniform opening angle and its table fluxes; evaluation
    /// samples the fitted curves at a uniform opening angle.
    MdpState reset(ResetMode mode, std::mt19937_64& rng) const;

    bool on_grid(const MdpState& state) const;
    const InrushTable* table() const { return table_.get(); }
    const CircuitConfig& config() const { return cfg_; }
    const circuit::CircuitModel& model() const { return model_; }
    double phi_nom() const { return model_.nominal_peak_flux(); }

private:
    CircuitConfig cfg_;
    circuit::CircuitModel model_;
    std::shared_ptr<const InrushTable> table_;
    flux::CurveSet curves_;
};

}  // namespace inrush::env
