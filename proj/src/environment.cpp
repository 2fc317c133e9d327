#include "inrush/environment.hpp"

#include "inrush/errors.hpp"
#include "inrush/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace inrush::env {

namespace {

constexpr char kMagic[8] = {'I', 'N', 'R', 'T', 'A', 'B', 'L', '1'};
constexpr std::size_t kCells = static_cast<std::size_t>(kAngleCount) * kAngleCount;

void check_angle(int theta, const char* what) {
    if (theta < 0 || theta >= kAngleCount) {
        throw InvalidArgument(fmt::format("{} {} outside [0, {})", what, theta, kAngleCount));
    }
}

template <class T>
void write_raw(std::ostream& os, const T* data, std::size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_raw(std::istream& is, T* data, std::size_t n, const std::string& path) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw ParseError(fmt::format("table cache '{}' is truncated", path));
}

}  // namespace

double reward(double i_max_pu) { return i_max_pu > 1.0 ? -i_max_pu : 1.0 - i_max_pu; }

MdpState make_state(double theta_open_deg, const Phase3& flux, double phi_nom) {
    MdpState s;
    s.theta_open_deg = theta_open_deg;
    s.flux = flux;
    const double th = theta_open_deg * std::numbers::pi / 180.0;
    s.features[0] = std::sin(th);
    s.features[1] = std::cos(th);
    for (std::size_t i = 0; i < 3; ++i) {
        s.features[2 + i] = std::clamp(flux[i] / phi_nom, -kFeatureBound, kFeatureBound);
    }
    return s;
}

double InrushTable::at(int theta_open, int theta_close) const {
    check_angle(theta_open, "opening angle");
    check_angle(theta_close, "closing angle");
    return peak_pu[static_cast<std::size_t>(theta_open) * kAngleCount + static_cast<std::size_t>(theta_close)];
}

std::span<const double> InrushTable::row(int theta_open) const {
    check_angle(theta_open, "opening angle");
    return std::span<const double>(peak_pu).subspan(static_cast<std::size_t>(theta_open) * kAngleCount,
                                                    kAngleCount);
}

int InrushTable::row_argmin(int theta_open) const {
    const auto r = row(theta_open);
    return static_cast<int>(std::min_element(r.begin(), r.end()) - r.begin());
}

int InrushTable::row_argmax(int theta_open) const {
    const auto r = row(theta_open);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

InrushTable build_inrush_table(const CircuitConfig& cfg, const TableBuildOptions& opts) {
    cfg.validate();
    InrushTable table;
    table.fingerprint = cfg.fingerprint();

    std::vector<double> openings(kAngleCount);
    for (int i = 0; i < kAngleCount; ++i) openings[static_cast<std::size_t>(i)] = i;
    table.remanent = circuit::deenergization_sweep(cfg, openings);

    // Distinct remanent states in order of first appearance.
    std::map<Phase3, std::size_t> index;
    std::vector<std::size_t> first_row;
    std::vector<std::size_t> state_of(kAngleCount);
    for (std::size_t r = 0; r < table.remanent.size(); ++r) {
        const auto [it, inserted] = index.emplace(table.remanent[r], first_row.size());
        if (inserted) first_row.push_back(r);
        state_of[r] = it->second;
    }

    const circuit::CircuitModel model(cfg);
    const std::size_t total = first_row.size() * kAngleCount;
    std::vector<double> peaks(total);
    std::atomic<std::size_t> finished{0};
    parallel_for(total, opts.jobs, [&](std::size_t job) {
        const std::size_t row = first_row[job / kAngleCount];
        const int close = static_cast<int>(job % kAngleCount);
        try {
            peaks[job] = circuit::peak_inrush_pu(model, table.remanent[row], close);
        } catch (const Error& e) {
            throw Error(fmt::format("cell (open {}, close {}): {}", row, close, e.what()));
        }
        const std::size_t done = ++finished;
        if (opts.progress) opts.progress(done, total);
    });

    table.peak_pu.resize(kCells);
    for (std::size_t r = 0; r < kAngleCount; ++r) {
        std::copy_n(peaks.begin() + static_cast<std::ptrdiff_t>(state_of[r] * kAngleCount), kAngleCount,
                    table.peak_pu.begin() + static_cast<std::ptrdiff_t>(r * kAngleCount));
    }
    return table;
}

void write_table_csv(std::ostream& os, const InrushTable& table) {
    os << "theta_open_deg,theta_close_deg,phi1_wb,phi2_wb,phi3_wb,imax_pu\n";
    for (int o = 0; o < kAngleCount; ++o) {
        const Phase3& phi = table.remanent[static_cast<std::size_t>(o)];
        const std::string prefix = fmt::format("{:.17g},{:.17g},{:.17g}", phi[0], phi[1], phi[2]);
        for (int c = 0; c < kAngleCount; ++c) os << fmt::format("{},{},{},{:.17g}\n", o, c, prefix, table.at(o, c));
    }
}

TablePaths TablePaths::from_stem(const std::string& stem) {
    return {stem + ".csv", stem + ".csv.fingerprint", stem + ".bin"};
}

void save_table(const InrushTable& table, const TablePaths& paths) {
    if (table.remanent.size() != kAngleCount || table.peak_pu.size() != kCells) {
        throw InvalidArgument("save_table: table is not 360 x 360");
    }
    {
        std::ofstream os(paths.csv);
        if (!os) throw Error(fmt::format("cannot write '{}'", paths.csv));
        write_table_csv(os, table);
    }
    {
        std::ofstream os(paths.fingerprint);
        if (!os) throw Error(fmt::format("cannot write '{}'", paths.fingerprint));
        os << circuit::fingerprint_hex(table.fingerprint) << '\n';
    }
    std::ofstream os(paths.binary, std::ios::binary);
    if (!os) throw Error(fmt::format("cannot write '{}'", paths.binary));
    os.write(kMagic, sizeof kMagic);
    write_raw(os, &table.fingerprint, 1);
    for (const Phase3& phi : table.remanent) write_raw(os, phi.data(), 3);
    write_raw(os, table.peak_pu.data(), table.peak_pu.size());
    if (!os) throw Error(fmt::format("failed writing '{}'", paths.binary));
}

InrushTable read_table_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError(fmt::format("cannot open table cache '{}'", path));
    char magic[sizeof kMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError(fmt::format("'{}' is not an inrush table cache", path));
    }
    InrushTable table;
    read_raw(is, &table.fingerprint, 1, path);
    table.remanent.resize(kAngleCount);
    for (Phase3& phi : table.remanent) read_raw(is, phi.data(), 3, path);
    table.peak_pu.resize(kCells);
    read_raw(is, table.peak_pu.data(), kCells, path);
    return table;
}

std::optional<InrushTable> load_cached_table(const TablePaths& paths, std::uint64_t fingerprint) {
    if (!std::ifstream(paths.binary)) return std::nullopt;
    InrushTable table = read_table_binary(paths.binary);
    if (table.fingerprint != fingerprint) return std::nullopt;
    return table;
}

std::vector<SpotCheck> spot_check(const InrushTable& table, const CircuitConfig& cfg, std::size_t count,
                                  std::uint64_t seed, unsigned jobs) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> angle(0, kAngleCount - 1);
    std::vector<SpotCheck> checks(count);
    for (auto& c : checks) {
        c.theta_open = angle(rng);
        c.theta_close = angle(rng);
        c.cached = table.at(c.theta_open, c.theta_close);
    }
    const circuit::CircuitModel model(cfg);
    parallel_for(count, jobs, [&](std::size_t i) {
        auto& c = checks[i];
        c.direct = circuit::peak_inrush_pu(model, table.remanent[static_cast<std::size_t>(c.theta_open)],
                                           c.theta_close);
    });
    return checks;
}

Environment::Environment(CircuitConfig cfg, std::shared_ptr<const InrushTable> table,
                         flux::CurveSet evaluation_curves)
    : cfg_(std::move(cfg)), model_(cfg_), table_(std::move(table)), curves_(evaluation_curves) {
    if (table_ && table_->fingerprint != cfg_.fingerprint()) {
        throw FingerprintMismatch("inrush table was built for a different circuit configuration");
    }
}

bool Environment::on_grid(const MdpState& state) const {
    if (!table_) return false;
    const double th = state.theta_open_deg;
    if (!(th >= 0.0 && th < kAngleCount) || th != std::floor(th)) return false;
    return table_->remanent[static_cast<std::size_t>(th)] == state.flux;
}

StepResult Environment::step(const MdpState& state, int action, Backend backend) const {
    check_angle(action, "action");
    StepResult out;
    if (backend == Backend::Table) {
        if (!table_) throw TableMissing("table backend requested but no inrush table is loaded");
        if (!on_grid(state)) {
            throw BackendMismatch(fmt::format("scenario at {} deg does not carry the table's remanent fluxes",
                                              state.theta_open_deg));
        }
        out.i_max_pu = table_->at(static_cast<int>(state.theta_open_deg), action);
    } else {
        out.i_max_pu = circuit::peak_inrush_pu(model_, state.flux, action);
    }
    out.reward = reward(out.i_max_pu);
    return out;
}

MdpState Environment::reset(ResetMode mode, std::mt19937_64& rng) const {
    if (mode == ResetMode::TrainingSweep) {
        if (!table_) throw TableMissing("training reset needs an inrush table");
        const int theta = std::uniform_int_distribution<int>(0, kAngleCount - 1)(rng);
        return make_state(theta, table_->remanent[static_cast<std::size_t>(theta)], phi_nom());
    }
    const int theta = std::uniform_int_distribution<int>(0, kAngleCount - 1)(rng);
    const flux::SwitchingScenario s = flux::sample_scenario(theta, curves_, rng);
    return make_state(s.theta_open_deg, s.flux, phi_nom());
}

}  // namespace inrush::env
