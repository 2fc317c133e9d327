#include "inrush/rl.hpp"

#include "inrush/errors.hpp"
#include "inrush/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace inrush::rl {

namespace {

void require_range(double v, double lo, double hi, const char* name) {
    if (!(v >= lo && v <= hi)) throw InvalidArgument(fmt::format("{} = {} outside [{}, {}]", name, v, lo, hi));
}

Eigen::MatrixXd stack_states(std::span<const Transition* const> batch) {
    Eigen::MatrixXd x(batch.front()->state.size(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = batch[i]->state;
    return x;
}

/// Inverse-CDF draw from softmax(logits).
int sample_categorical(const Eigen::VectorXd& log_probs, std::mt19937_64& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
        acc += std::exp(log_probs(i));
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(log_probs.size() - 1);
}

double entropy_of(const Eigen::VectorXd& log_probs) {
    return -(log_probs.array().exp() * log_probs.array()).sum();
}

}  // namespace

std::string to_string(AgentKind kind) {
    switch (kind) {
    case AgentKind::DqnLinear: return "dqn-linear";
    case AgentKind::DqnExponential: return "dqn-exp";
    case AgentKind::Ppo: return "ppo";
    }
    return "unknown";
}

AgentKind agent_from_string(const std::string& s) {
    if (s == "dqn-linear") return AgentKind::DqnLinear;
    if (s == "dqn-exp") return AgentKind::DqnExponential;
    if (s == "ppo") return AgentKind::Ppo;
    throw InvalidArgument(fmt::format("unknown agent '{}' (expected dqn-linear, dqn-exp or ppo)", s));
}

bool is_dqn(AgentKind kind) { return kind != AgentKind::Ppo; }

Hyperparameters Hyperparameters::defaults(AgentKind kind) {
    Hyperparameters hp;
    switch (kind) {
    case AgentKind::DqnLinear:
        hp.learning_rate = 2.74e-3;
        hp.epsilon_final = 9.19e-4;
        hp.exploration_fraction = 0.22;
        hp.buffer_size = 1000;
        break;
    case AgentKind::DqnExponential:
        hp.learning_rate = 1.15e-3;
        hp.epsilon_final = 8.67e-4;
        hp.exploration_fraction = 0.49;
        hp.buffer_size = 100000;
        break;
    case AgentKind::Ppo:
        hp.learning_rate = 2.42e-3;
        break;
    }
    return hp;
}

void Hyperparameters::validate() const {
    require_range(batch_size, 32, 256, "batch_size");
    require_range(gamma, 0.0, 1.0, "gamma");
    require_range(learning_rate, 1e-4, 1e-2, "learning_rate");
    require_range(epsilon_initial, 0.0, 1.0, "epsilon_initial");
    require_range(epsilon_final, 1e-5, 1e-2, "epsilon_final");
    require_range(exploration_fraction, 1e-2, 1.0, "exploration_fraction");
    require_range(static_cast<double>(buffer_size), 1e3, 1e5, "buffer_size");
    require_range(clip, 0.1, 0.4, "clip");
    require_range(entropy_coef, 1e-6, 1e-1, "entropy_coef");
    require_range(value_coef, 0.1, 0.9, "value_coef");
    if (target_sync < 1 || rollout < 1 || epochs < 1 || minibatch < 1 || total_iterations < 1 || log_every < 1 ||
        reward_window < 1) {
        throw InvalidArgument("target_sync, rollout, epochs, minibatch, total_iterations, log_every and "
                              "reward_window must be >= 1");
    }
    if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h < 1; })) {
        throw InvalidArgument("hidden layer sizes must be >= 1");
    }
}

double epsilon_linear(long t, const Hyperparameters& hp) {
    const double horizon = hp.exploration_fraction * static_cast<double>(hp.total_iterations);
    const double ramp = hp.epsilon_initial - (hp.epsilon_initial - hp.epsilon_final) * static_cast<double>(t) / horizon;
    return std::max(hp.epsilon_final, ramp);
}

double epsilon_exponential(long t, const Hyperparameters& hp) {
    const double horizon = hp.exploration_fraction * static_cast<double>(hp.total_iterations);
    const double decay = hp.epsilon_initial * std::exp(-static_cast<double>(t) * std::log(1.0 / hp.epsilon_final) / horizon);
    return std::max(hp.epsilon_final, decay);
}

double epsilon_schedule(AgentKind kind, long t, const Hyperparameters& hp) {
    return kind == AgentKind::DqnExponential ? epsilon_exponential(t, hp) : epsilon_linear(t, hp);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidArgument("replay buffer capacity must be > 0");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
    if (data_.empty()) throw InvalidArgument("cannot sample an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pick(rng);
    return out;
}

int argmax(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return static_cast<int>(best);
}

int dqn_select_action(const Mlp& net, const Eigen::VectorXd& state, double epsilon, std::mt19937_64& rng) {
    const auto n = static_cast<int>(net.outputs());
    if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
        return std::uniform_int_distribution<int>(0, n - 1)(rng);
    }
    return argmax(mlp_forward(net, state));
}

DqnLoss dqn_loss(const Mlp& net, const Mlp& target, std::span<const Transition* const> batch, double gamma) {
    if (batch.empty()) throw EmptyRollout("dqn_loss: empty batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const std::size_t hidden = net.layers().size() - 1;
    const Layer& head = net.layers().back();
    // Only Q(s, a) of the sampled actions enters the loss, so the output layer
    // is evaluated row by row.
    const ForwardCache cache = mlp_forward_batch(net, stack_states(batch), hidden);
    const Eigen::MatrixXd& h = cache.output();
    DqnLoss out;
    out.target.resize(n);
    out.grad = MlpGradient::zeros_like(net);
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(h.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Transition& t = *batch[static_cast<std::size_t>(i)];
        const int a = t.action;
        if (a < 0 || a >= net.outputs()) throw ShapeMismatch("dqn_loss: action out of range");
        out.target(i) = t.reward;
        if (!t.done) out.target(i) += gamma * mlp_forward(target, t.next_state).maxCoeff();
        const double z = head.weight.row(a).dot(h.col(i)) + head.bias(a);
        const bool active = head.activation == Activation::Identity || z > 0.0;
        const double q = active ? z : 0.0;
        const double err = q - out.target(i);
        out.loss += err * err;
        if (!active) continue;
        const double d = 2.0 * err / static_cast<double>(n);
        out.grad.weight.back().row(a) += d * h.col(i).transpose();
        out.grad.bias.back()(a) += d;
        delta.col(i) = d * head.weight.row(a).transpose();
    }
    out.loss /= static_cast<double>(n);
    mlp_backprop(net, cache, std::move(delta), hidden, out.grad);
    return out;
}

double dqn_train_step(Mlp& net, const Mlp& target, Adam& opt, std::span<const Transition* const> batch,
                      const Hyperparameters& hp) {
    DqnLoss l = dqn_loss(net, target, batch, hp.gamma);
    opt.update(net, l.grad);
    return l.loss;
}

double ppo_ratio(double logp_new, double logp_old) { return std::exp(logp_new - logp_old); }

double ppo_clip(double p, double clip) {
    if (p < 1.0 - clip) return 1.0 - clip;
    if (p > 1.0 + clip) return 1.0 + clip;
    return p;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return logits.array() - lse;
}

void ppo_compute_advantages(std::vector<PpoSample>& rollout, const Mlp& critic, bool normalize) {
    if (rollout.empty()) throw EmptyRollout("ppo: empty rollout");
    for (auto& s : rollout) s.advantage = s.reward - mlp_forward(critic, s.state)(0);
    if (!normalize || rollout.size() < 2) return;
    double mean = 0.0;
    for (const auto& s : rollout) mean += s.advantage;
    mean /= static_cast<double>(rollout.size());
    double var = 0.0;
    for (const auto& s : rollout) var += (s.advantage - mean) * (s.advantage - mean);
    const double sd = std::sqrt(var / static_cast<double>(rollout.size()));
    for (auto& s : rollout) s.advantage = (s.advantage - mean) / (sd + 1e-8);
}

PpoEvaluation ppo_losses(std::span<const PpoSample> rollout, const Mlp& actor, const Mlp& critic,
                         const Hyperparameters& hp) {
    if (rollout.empty()) throw EmptyRollout("ppo_losses: empty rollout");
    const auto n = static_cast<Eigen::Index>(rollout.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd x(rollout.front().state.size(), n);
    for (Eigen::Index i = 0; i < n; ++i) x.col(i) = rollout[static_cast<std::size_t>(i)].state;
    const ForwardCache actor_cache = mlp_forward_batch(actor, x);
    const ForwardCache critic_cache = mlp_forward_batch(critic, x);

    PpoEvaluation out;
    Eigen::MatrixXd d_logits(actor.outputs(), n);
    Eigen::MatrixXd d_value(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const PpoSample& s = rollout[static_cast<std::size_t>(i)];
        if (s.action < 0 || s.action >= actor.outputs()) throw ShapeMismatch("ppo_losses: action out of range");
        const Eigen::VectorXd logp = log_softmax(actor_cache.output().col(i));
        const Eigen::VectorXd prob = logp.array().exp();
        const double p = ppo_ratio(logp(s.action), s.logp_old);
        const double unclipped = p * s.advantage;
        const double clipped = ppo_clip(p, hp.clip) * s.advantage;
        const double h = entropy_of(logp);
        const double v = critic_cache.output()(0, i);
        out.losses.clip += std::min(unclipped, clipped);
        out.losses.entropy += h;
        out.losses.value += (v - s.reward) * (v - s.reward);

        // d(surrogate)/d(logp_a): p*A when the unclipped term is the minimum,
        // zero when the clipped constant is.
        const double d_logp = unclipped <= clipped ? unclipped : 0.0;
        Eigen::VectorXd g = -d_logp * (-prob);
        g(s.action) -= d_logp;
        // dH/dz_j = -pi_j (log pi_j + H)
        g.array() -= hp.entropy_coef * (-prob.array() * (logp.array() + h));
        d_logits.col(i) = g * inv_n;
        d_value(0, i) = hp.value_coef * 2.0 * (v - s.reward) * inv_n;
    }
    out.losses.clip *= inv_n;
    out.losses.entropy *= inv_n;
    out.losses.value *= inv_n;
    out.losses.total = out.losses.clip + hp.entropy_coef * out.losses.entropy - hp.value_coef * out.losses.value;
    out.actor = mlp_gradient(actor, actor_cache, d_logits);
    out.critic = mlp_gradient(critic, critic_cache, d_value);
    return out;
}

TableBandit::TableBandit(const env::Environment& env) : env_(env) {
    if (!env.table()) throw TableMissing("training needs an inrush table");
}

Eigen::VectorXd TableBandit::reset(std::mt19937_64& rng) {
    state_ = env_.reset(env::ResetMode::TrainingSweep, rng);
    return Eigen::Map<const Eigen::VectorXd>(state_.features.data(), env::kFeatureCount);
}

double TableBandit::step(int action) { return env_.step(state_, action, env::Backend::Table).reward; }

Eigen::VectorXd MatchingBandit::reset(std::mt19937_64& rng) {
    state_ = std::uniform_int_distribution<int>(0, n_ - 1)(rng);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    x(state_) = 1.0;
    return x;
}

namespace {

std::vector<int> layer_sizes(Eigen::Index in, const std::vector<int>& hidden, Eigen::Index out) {
    std::vector<int> sizes{static_cast<int>(in)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(static_cast<int>(out));
    return sizes;
}

class RewardWindow {
public:
    explicit RewardWindow(int n) : n_(static_cast<std::size_t>(n)) {}
    void push(double r) {
        window_.push_back(r);
        sum_ += r;
        if (window_.size() > n_) {
            sum_ -= window_.front();
            window_.pop_front();
        }
    }
    double mean() const { return window_.empty() ? 0.0 : sum_ / static_cast<double>(window_.size()); }

private:
    std::size_t n_;
    std::deque<double> window_;
    double sum_ = 0.0;
};

TrainedAgent train_dqn(AgentKind kind, BanditEnvironment& env, const Hyperparameters& hp, std::mt19937_64& rng,
                       const TrainingObserver& observer) {
    TrainedAgent out;
    out.kind = kind;
    out.policy = Mlp::make(layer_sizes(env.feature_count(), hp.hidden, env.action_count()), rng);
    Mlp target = out.policy;
    Adam opt(out.policy, hp.learning_rate);
    ReplayBuffer buffer(hp.buffer_size);
    RewardWindow window(hp.reward_window);
    std::vector<const Transition*> batch(static_cast<std::size_t>(hp.batch_size));
    long gradient_steps = 0;
    for (long t = 1; t <= hp.total_iterations; ++t) {
        const double eps = epsilon_schedule(kind, t - 1, hp);
        Eigen::VectorXd s = env.reset(rng);
        const int a = dqn_select_action(out.policy, s, eps, rng);
        const double r = env.step(a);
        window.push(r);
        // One-step episodes: the next state is terminal.
        buffer.push({s, a, r, s, true});
        if (buffer.size() >= static_cast<std::size_t>(hp.batch_size)) {
            const auto idx = buffer.sample(static_cast<std::size_t>(hp.batch_size), rng);
            for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = &buffer[idx[i]];
            dqn_train_step(out.policy, target, opt, batch, hp);
            if (++gradient_steps % hp.target_sync == 0) target = out.policy;
        }
        if (t % hp.log_every == 0) {
            out.log.push_back({t, window.mean(), eps});
            if (observer) observer(out.log.back());
        }
    }
    return out;
}

void ppo_update(std::vector<PpoSample>& rollout, Mlp& actor, Mlp& critic, Adam& actor_opt, Adam& critic_opt,
                const Hyperparameters& hp, std::mt19937_64& rng) {
    ppo_compute_advantages(rollout, critic, true);
    std::vector<std::size_t> order(rollout.size());
    std::vector<PpoSample> mb;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.minibatch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.minibatch));
            mb.clear();
            for (std::size_t i = start; i < end; ++i) mb.push_back(rollout[order[i]]);
            const PpoEvaluation e = ppo_losses(mb, actor, critic, hp);
            actor_opt.update(actor, e.actor);
            critic_opt.update(critic, e.critic);
        }
    }
}

TrainedAgent train_ppo(BanditEnvironment& env, const Hyperparameters& hp, std::mt19937_64& rng,
                       const TrainingObserver& observer) {
    TrainedAgent out;
    out.kind = AgentKind::Ppo;
    out.policy = Mlp::make(layer_sizes(env.feature_count(), hp.hidden, env.action_count()), rng);
    Mlp critic = Mlp::make(layer_sizes(env.feature_count(), hp.hidden, 1), rng);
    Adam actor_opt(out.policy, hp.learning_rate);
    Adam critic_opt(critic, hp.learning_rate);
    RewardWindow window(hp.reward_window);
    std::vector<PpoSample> rollout;
    rollout.reserve(static_cast<std::size_t>(hp.rollout));
    double entropy_sum = 0.0;
    double last_entropy = std::log(static_cast<double>(env.action_count()));
    for (long t = 1; t <= hp.total_iterations; ++t) {
        PpoSample s;
        s.state = env.reset(rng);
        const Eigen::VectorXd logp = log_softmax(mlp_forward(out.policy, s.state));
        s.action = sample_categorical(logp, rng);
        s.logp_old = logp(s.action);
        s.reward = env.step(s.action);
        entropy_sum += entropy_of(logp);
        window.push(s.reward);
        rollout.push_back(std::move(s));
        if (rollout.size() == static_cast<std::size_t>(hp.rollout)) {
            last_entropy = entropy_sum / static_cast<double>(rollout.size());
            ppo_update(rollout, out.policy, critic, actor_opt, critic_opt, hp, rng);
            rollout.clear();
            entropy_sum = 0.0;
        }
        if (t % hp.log_every == 0) {
            out.log.push_back({t, window.mean(), last_entropy});
            if (observer) observer(out.log.back());
        }
    }
    out.critic = std::move(critic);
    return out;
}

}  // namespace

TrainedAgent train(AgentKind kind, BanditEnvironment& env, const Hyperparameters& hp, std::uint64_t seed,
                   const TrainingObserver& observer) {
    hp.validate();
    std::mt19937_64 rng(seed);
    return is_dqn(kind) ? train_dqn(kind, env, hp, rng, observer) : train_ppo(env, hp, rng, observer);
}

int greedy_action(const Mlp& policy, const Eigen::VectorXd& features) { return argmax(mlp_forward(policy, features)); }

void write_training_log_csv(std::ostream& os, std::span<const TrainingLogRow> log) {
    os << "iteration,mean_episode_reward,explore_metric\n";
    for (const auto& r : log) os << fmt::format("{},{:.17g},{:.17g}\n", r.iteration, r.mean_episode_reward, r.explore_metric);
}

SummaryStats summarize(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("summarize: no values");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    SummaryStats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median = quantile(0.5);
    s.q1 = quantile(0.25);
    s.q3 = quantile(0.75);
    s.min = v.front();
    s.max = v.back();
    return s;
}

void write_summary_csv(std::ostream& os, const SummaryStats& s) {
    os << "statistic,imax_pu\n"
       << fmt::format("Mean,{:.17g}\nMedian,{:.17g}\nQ1,{:.17g}\nQ3,{:.17g}\nMinimum,{:.17g}\nMaximum,{:.17g}\n", s.mean,
                      s.median, s.q1, s.q3, s.min, s.max);
}

EvaluationResult evaluate_policy(const Mlp& policy, std::span<const flux::SwitchingScenario> scenarios,
                                 const circuit::CircuitConfig& cfg, unsigned jobs) {
    if (policy.inputs() != static_cast<Eigen::Index>(env::kFeatureCount) || policy.outputs() != env::kActionCount) {
        throw ShapeMismatch("policy network does not match the closing-angle problem");
    }
    const circuit::CircuitModel model(cfg);
    EvaluationResult out;
    out.rows.resize(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const env::MdpState st = env::make_state(scenarios[i].theta_open_deg, scenarios[i].flux, model.nominal_peak_flux());
        out.rows[i].scenario = scenarios[i];
        out.rows[i].theta_close =
            greedy_action(policy, Eigen::Map<const Eigen::VectorXd>(st.features.data(), env::kFeatureCount));
    }
    parallel_for(scenarios.size(), jobs, [&](std::size_t i) {
        auto& row = out.rows[i];
        row.i_max_pu = circuit::peak_inrush_pu(model, row.scenario.flux, row.theta_close);
    });
    std::vector<double> peaks;
    for (const auto& r : out.rows) peaks.push_back(r.i_max_pu);
    if (!peaks.empty()) out.stats = summarize(peaks);
    return out;
}

void write_evaluation_csv(std::ostream& os, const EvaluationResult& result) {
    os << "theta_open_deg,phi1_wb,phi2_wb,phi3_wb,theta_close_deg,imax_pu\n";
    for (const auto& r : result.rows) {
        const auto& s = r.scenario;
        os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g}\n", s.theta_open_deg, s.flux[0], s.flux[1],
                          s.flux[2], r.theta_close, r.i_max_pu);
    }
}

}  // namespace inrush::rl
