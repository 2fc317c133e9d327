#include "inrush/config.hpp"

#include "inrush/errors.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace inrush::harness {

namespace {

/// One YAML mapping whose keys must all be consumed.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) throw ParseError(fmt::format("'{}' must be a mapping", name()));
    }

    template <class T>
    void get(const char* key, T& out) {
        const YAML::Node v = lookup(key);
        if (!v) return;
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            throw ParseError(fmt::format("'{}' has an invalid value", qualified(key)));
        }
    }

    void get(const char* key, std::uint64_t& out) {
        long long v = static_cast<long long>(out);
        get(key, v);
        if (v < 0) throw ParseError(fmt::format("'{}' must be >= 0", qualified(key)));
        out = static_cast<std::uint64_t>(v);
    }

    template <class T>
    void get(const char* key, std::vector<T>& out) {
        const YAML::Node v = lookup(key);
        if (!v) return;
        if (!v.IsSequence()) throw ParseError(fmt::format("'{}' must be a list", qualified(key)));
        std::vector<T> values;
        try {
            for (const auto& item : v) values.push_back(item.as<T>());
        } catch (const YAML::Exception&) {
            throw ParseError(fmt::format("'{}' has an invalid entry", qualified(key)));
        }
        out = std::move(values);
    }

    Section sub(const char* key) { return Section(lookup(key), qualified(key)); }

    /// Throws ParseError naming the first unknown key.
    void finish() const {
        if (!node_ || node_.IsNull()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key)) throw ParseError(fmt::format("unknown configuration key '{}'", qualified(key.c_str())));
        }
    }

private:
    YAML::Node lookup(const char* key) {
        used_.insert(key);
        if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
        return node_[key];
    }
    std::string name() const { return path_.empty() ? "<root>" : path_; }
    std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
};

void read_geometry(Section s, circuit::CoreGeometry& g) {
    s.get("area", g.area);
    s.get("length", g.length);
    s.finish();
}

void read_circuit(Section s, circuit::CircuitConfig& c) {
    s.get("s_rated", c.s_rated);
    s.get("v_primary", c.v_primary);
    s.get("v_secondary", c.v_secondary);
    s.get("i_rated_primary", c.i_rated_primary);
    s.get("f", c.f);
    s.get("n_turns", c.n_turns);
    s.get("r_hv", c.r_hv);
    s.get("r_lv", c.r_lv);
    s.get("l_hl", c.l_hl);
    s.get("l_lc", c.l_lc);
    s.get("l_0", c.l_0);
    read_geometry(s.sub("leg"), c.leg);
    read_geometry(s.sub("yoke"), c.yoke);
    s.get("c_stray", c.c_stray);
    {
        Section g = s.sub("grid");
        g.get("r", c.grid.r);
        g.get("l", c.grid.l);
        g.finish();
    }
    {
        Section j = s.sub("ja");
        j.get("m_s", c.ja.m_s);
        j.get("a", c.ja.a);
        j.get("alpha", c.ja.alpha);
        j.get("k", c.ja.k);
        j.get("c", c.ja.c);
        j.finish();
    }
    s.get("chop_current", c.chop_current);
    s.get("dt", c.dt);
    s.get("energization_time", c.energization_time);
    s.get("ringdown_time", c.ringdown_time);
    s.get("warmup_cycles", c.warmup_cycles);
    s.get("ramp_cycles", c.ramp_cycles);
    s.get("newton_tol", c.newton_tol);
    s.get("newton_max_iterations", c.newton_max_iterations);
    s.get("ja_max_db", c.ja_max_db);
    s.get("ja_h_tol", c.ja_h_tol);
    s.finish();
}

void read_hyperparameters(Section s, rl::Hyperparameters& hp) {
    s.get("batch_size", hp.batch_size);
    s.get("gamma", hp.gamma);
    s.get("learning_rate", hp.learning_rate);
    s.get("epsilon_initial", hp.epsilon_initial);
    s.get("epsilon_final", hp.epsilon_final);
    s.get("exploration_fraction", hp.exploration_fraction);
    s.get("buffer_size", hp.buffer_size);
    s.get("target_sync", hp.target_sync);
    s.get("clip", hp.clip);
    s.get("entropy_coef", hp.entropy_coef);
    s.get("value_coef", hp.value_coef);
    s.get("rollout", hp.rollout);
    s.get("epochs", hp.epochs);
    s.get("minibatch", hp.minibatch);
    s.get("total_iterations", hp.total_iterations);
    s.get("hidden", hp.hidden);
    s.get("log_every", hp.log_every);
    s.get("reward_window", hp.reward_window);
    s.finish();
}

std::string curve_source_name(CurveSource c) { return c == CurveSource::Model ? "model" : "reference"; }

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"' || ch == '\\') out += '\\';
        out += ch;
    }
    return out + "\"";
}

std::string num(double v) { return fmt::format("{}", v); }

template <class T>
std::string list(const std::vector<T>& v) {
    return fmt::format("[{}]", fmt::join(v, ", "));
}

void dump_hyperparameters(std::ostream& os, const char* name, const rl::Hyperparameters& hp) {
    os << "  " << name << ":\n";
    os << "    batch_size: " << hp.batch_size << '\n';
    os << "    gamma: " << num(hp.gamma) << '\n';
    os << "    learning_rate: " << num(hp.learning_rate) << '\n';
    os << "    epsilon_initial: " << num(hp.epsilon_initial) << '\n';
    os << "    epsilon_final: " << num(hp.epsilon_final) << '\n';
    os << "    exploration_fraction: " << num(hp.exploration_fraction) << '\n';
    os << "    buffer_size: " << hp.buffer_size << '\n';
    os << "    target_sync: " << hp.target_sync << '\n';
    os << "    clip: " << num(hp.clip) << '\n';
    os << "    entropy_coef: " << num(hp.entropy_coef) << '\n';
    os << "    value_coef: " << num(hp.value_coef) << '\n';
    os << "    rollout: " << hp.rollout << '\n';
    os << "    epochs: " << hp.epochs << '\n';
    os << "    minibatch: " << hp.minibatch << '\n';
    os << "    total_iterations: " << hp.total_iterations << '\n';
    os << "    hidden: " << list(hp.hidden) << '\n';
    os << "    log_every: " << hp.log_every << '\n';
    os << "    reward_window: " << hp.reward_window << '\n';
}

}  // namespace

std::vector<int> default_validation_angles() {
    return {7, 13, 33, 34, 37, 53, 79, 81, 92, 135, 147, 178, 180, 189, 221, 224, 278, 285, 304, 306, 313};
}

const rl::Hyperparameters& RunConfig::hyperparameters(rl::AgentKind kind) const {
    switch (kind) {
    case rl::AgentKind::DqnLinear: return dqn_linear;
    case rl::AgentKind::DqnExponential: return dqn_exp;
    case rl::AgentKind::Ppo: return ppo;
    }
    return ppo;
}

rl::Hyperparameters& RunConfig::hyperparameters(rl::AgentKind kind) {
    return const_cast<rl::Hyperparameters&>(std::as_const(*this).hyperparameters(kind));
}

void RunConfig::validate() const {
    circuit.validate();
    dqn_linear.validate();
    dqn_exp.validate();
    ppo.validate();
    if (evaluation.scenarios == 0) throw InvalidArgument("evaluation.scenarios must be > 0");
    if (validation.opening_angles.empty() || validation.baseline_draws < 1) {
        throw InvalidArgument("validation needs opening angles and baseline_draws >= 1");
    }
    for (int a : validation.opening_angles) {
        if (a < 0 || a >= 360) throw InvalidArgument(fmt::format("validation angle {} outside [0, 360)", a));
    }
    const auto& t = calibration;
    if (!(t.worst_min_pu < t.worst_max_pu) || !(t.steady_min < t.steady_max) || !(t.remanence_min < t.remanence_max) ||
        !(t.zero_ratio_min > 0.0) || !(t.row_min_max_pu > 0.0) || t.max_evaluations < 1 || t.opening_step_deg < 1 ||
        t.closing_step_deg < 1 || !(t.proxy_energization_time > 0.0)) {
        throw InvalidArgument("invalid calibration targets");
    }
}

RunConfig parse_config(const std::string& yaml) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ParseError(fmt::format("configuration is not valid YAML: {}", e.what()));
    }
    RunConfig cfg;
    Section s(root, "");
    s.get("seed", cfg.seed);
    read_circuit(s.sub("circuit"), cfg.circuit);
    {
        Section r = s.sub("rl");
        read_hyperparameters(r.sub("dqn_linear"), cfg.dqn_linear);
        read_hyperparameters(r.sub("dqn_exp"), cfg.dqn_exp);
        read_hyperparameters(r.sub("ppo"), cfg.ppo);
        r.finish();
    }
    {
        Section e = s.sub("evaluation");
        e.get("scenarios", cfg.evaluation.scenarios);
        std::string curves = curve_source_name(cfg.evaluation.curves);
        e.get("curves", curves);
        if (curves == "model") {
            cfg.evaluation.curves = CurveSource::Model;
        } else if (curves == "reference") {
            cfg.evaluation.curves = CurveSource::Reference;
        } else {
            throw ParseError(fmt::format("evaluation.curves must be 'model' or 'reference', got '{}'", curves));
        }
        e.finish();
    }
    {
        Section v = s.sub("validation");
        v.get("opening_angles", cfg.validation.opening_angles);
        v.get("baseline_draws", cfg.validation.baseline_draws);
        v.finish();
    }
    {
        Section c = s.sub("calibration");
        auto& t = cfg.calibration;
        c.get("worst_min_pu", t.worst_min_pu);
        c.get("worst_max_pu", t.worst_max_pu);
        c.get("steady_min", t.steady_min);
        c.get("steady_max", t.steady_max);
        c.get("zero_ratio_min", t.zero_ratio_min);
        c.get("row_min_max_pu", t.row_min_max_pu);
        c.get("remanence_min", t.remanence_min);
        c.get("remanence_max", t.remanence_max);
        c.get("max_evaluations", t.max_evaluations);
        c.get("opening_step_deg", t.opening_step_deg);
        c.get("closing_step_deg", t.closing_step_deg);
        c.get("proxy_energization_time", t.proxy_energization_time);
        c.finish();
    }
    {
        Section p = s.sub("paths");
        p.get("table", cfg.paths.table);
        p.get("networks", cfg.paths.networks);
        p.get("logs", cfg.paths.logs);
        p.get("results", cfg.paths.results);
        p.get("measurements", cfg.paths.measurements);
        p.get("baseline", cfg.paths.baseline);
        p.finish();
    }
    s.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError(fmt::format("cannot open configuration '{}'", path));
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const Error& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string dump_config(const RunConfig& cfg, const std::vector<std::string>& header) {
    std::ostringstream os;
    for (const auto& line : header) os << "# " << line << '\n';
    const auto& c = cfg.circuit;
    os << "seed: " << cfg.seed << "\n\n";
    os << "circuit:\n";
    os << "  s_rated: " << num(c.s_rated) << "          # [VA]\n";
    os << "  v_primary: " << num(c.v_primary) << "        # line-to-line rms [V]\n";
    os << "  v_secondary: " << num(c.v_secondary) << '\n';
    os << "  i_rated_primary: " << num(c.i_rated_primary) << "  # rms [A]\n";
    os << "  f: " << num(c.f) << '\n';
    os << "  n_turns: " << c.n_turns << '\n';
    os << "  r_hv: " << num(c.r_hv) << '\n';
    os << "  r_lv: " << num(c.r_lv) << '\n';
    os << "  l_hl: " << num(c.l_hl) << '\n';
    os << "  l_lc: " << num(c.l_lc) << '\n';
    os << "  l_0: " << num(c.l_0) << '\n';
    os << "  leg: {area: " << num(c.leg.area) << ", length: " << num(c.leg.length) << "}    # [m^2], [m]\n";
    os << "  yoke: {area: " << num(c.yoke.area) << ", length: " << num(c.yoke.length) << "}\n";
    os << "  c_stray: " << num(c.c_stray) << "  # terminal to ground [F]\n";
    os << "  grid: {r: " << num(c.grid.r) << ", l: " << num(c.grid.l) << "}  # source impedance [Ohm], [H]\n";
    os << "  ja: {m_s: " << num(c.ja.m_s) << ", a: " << num(c.ja.a) << ", alpha: " << num(c.ja.alpha)
       << ", k: " << num(c.ja.k) << ", c: " << num(c.ja.c) << "}\n";
    os << "  chop_current: " << num(c.chop_current) << '\n';
    os << "  dt: " << num(c.dt) << "  # [s]\n";
    os << "  energization_time: " << num(c.energization_time) << '\n';
    os << "  ringdown_time: " << num(c.ringdown_time) << '\n';
    os << "  warmup_cycles: " << c.warmup_cycles << '\n';
    os << "  ramp_cycles: " << c.ramp_cycles << '\n';
    os << "  newton_tol: " << num(c.newton_tol) << '\n';
    os << "  newton_max_iterations: " << c.newton_max_iterations << '\n';
    os << "  ja_max_db: " << num(c.ja_max_db) << "  # [T]\n";
    os << "  ja_h_tol: " << num(c.ja_h_tol) << "  # [A/m]\n\n";
    os << "rl:\n";
    dump_hyperparameters(os, "dqn_linear", cfg.dqn_linear);
    dump_hyperparameters(os, "dqn_exp", cfg.dqn_exp);
    dump_hyperparameters(os, "ppo", cfg.ppo);
    os << "\nevaluation:\n";
    os << "  scenarios: " << cfg.evaluation.scenarios << '\n';
    os << "  curves: " << curve_source_name(cfg.evaluation.curves) << "  # model | reference\n\n";
    os << "validation:\n";
    os << "  opening_angles: " << list(cfg.validation.opening_angles) << '\n';
    os << "  baseline_draws: " << cfg.validation.baseline_draws << "\n\n";
    const auto& t = cfg.calibration;
    os << "calibration:\n";
    os << "  worst_min_pu: " << num(t.worst_min_pu) << '\n';
    os << "  worst_max_pu: " << num(t.worst_max_pu) << '\n';
    os << "  steady_min: " << num(t.steady_min) << '\n';
    os << "  steady_max: " << num(t.steady_max) << '\n';
    os << "  zero_ratio_min: " << num(t.zero_ratio_min) << '\n';
    os << "  row_min_max_pu: " << num(t.row_min_max_pu) << '\n';
    os << "  remanence_min: " << num(t.remanence_min) << '\n';
    os << "  remanence_max: " << num(t.remanence_max) << '\n';
    os << "  max_evaluations: " << t.max_evaluations << '\n';
    os << "  opening_step_deg: " << t.opening_step_deg << '\n';
    os << "  closing_step_deg: " << t.closing_step_deg << '\n';
    os << "  proxy_energization_time: " << num(t.proxy_energization_time) << "\n\n";
    os << "paths:\n";
    os << "  table: " << quoted(cfg.paths.table) << '\n';
    os << "  networks: " << quoted(cfg.paths.networks) << '\n';
    os << "  logs: " << quoted(cfg.paths.logs) << '\n';
    os << "  results: " << quoted(cfg.paths.results) << '\n';
    os << "  measurements: " << quoted(cfg.paths.measurements) << '\n';
    os << "  baseline: " << quoted(cfg.paths.baseline) << '\n';
    return os.str();
}

void save_config(const std::string& path, const RunConfig& cfg, const std::vector<std::string>& header) {
    std::ofstream os(path);
    if (!os) throw Error(fmt::format("cannot write '{}'", path));
    os << dump_config(cfg, header);
}

}  // namespace inrush::harness
