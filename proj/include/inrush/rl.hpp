#pragma once

// DQN (linear or exponential epsilon decay) and PPO on one-step episodes.

#include "inrush/environment.hpp"
#include "inrush/flux_data.hpp"
#include "inrush/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace inrush::rl {

enum class AgentKind { DqnLinear, DqnExponential, Ppo };

/// "dqn-linear", "dqn-exp", "ppo".
std::string to_string(AgentKind kind);
/// Throws InvalidArgument.
AgentKind agent_from_string(const std::string& s);
bool is_dqn(AgentKind kind);

struct Hyperparameters {
    int batch_size = 256;
    double gamma = 0.99;
    double learning_rate = 1.0e-3;
    double epsilon_initial = 1.0;
    double epsilon_final = 1.0e-3;
    double exploration_fraction = 0.2;
    std::size_t buffer_size = 1000;
    int target_sync = 500;    ///< gradient steps between target-network copies
    double clip = 0.14;
    double entropy_coef = 5.53e-2;
    double value_coef = 0.89;
    int rollout = 256;
    int epochs = 4;
    int minibatch = 256;
    long total_iterations = 70000;
    std::vector<int> hidden{64, 64};
    int log_every = 100;
    int reward_window = 100;  ///< trailing episodes in the logged mean reward

    /// Tuned values for each agent.
    static Hyperparameters defaults(AgentKind kind);

    /// Throws InvalidArgument.
    void validate() const;

    bool operator==(const Hyperparameters&) const = default;
};

/// Linear ramp from epsilon_initial to epsilon_final over
/// exploration_fraction * total_iterations, then constant.
double epsilon_linear(long t, const Hyperparameters& hp);

/// exp(-t * ln(1/epsilon_final) / (exploration_fraction * total_iterations)),
/// floored at epsilon_final.
double epsilon_exponential(long t, const Hyperparameters& hp);

double epsilon_schedule(AgentKind kind, long t, const Hyperparameters& hp);

struct Transition {
    Eigen::VectorXd state;
    int action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool done = true;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    /// Overwrites the oldest entry once full.
    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    /// `n` indices drawn uniformly with replacement.
    std::vector<std::size_t> sample(std::size_t n, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

/// Index of the largest entry, lowest index on ties.
int argmax(const Eigen::VectorXd& v);

/// Uniform action with probability epsilon, otherwise argmax of Q.
int dqn_select_action(const Mlp& net, const Eigen::VectorXd& state, double epsilon, std::mt19937_64& rng);

struct DqnLoss {
    double loss = 0.0;
    Eigen::VectorXd target; ///< y per sample
    MlpGradient grad;
};

/// y = r + gamma * max_a Q_target(s', a) for non-terminal samples, y = r for
/// terminal ones; loss = mean (y - Q(s, a))^2. The target network is not
/// evaluated for terminal samples.
DqnLoss dqn_loss(const Mlp& net, const Mlp& target, std::span<const Transition* const> batch, double gamma);

/// dqn_loss followed by one Adam step. Returns the loss.
double dqn_train_step(Mlp& net, const Mlp& target, Adam& opt, std::span<const Transition* const> batch,
                      const Hyperparameters& hp);

double ppo_ratio(double logp_new, double logp_old);
double ppo_clip(double p, double clip);

struct PpoSample {
    Eigen::VectorXd state;
    int action = 0;
    double reward = 0.0;
    double logp_old = 0.0;
    double advantage = 0.0;
};

/// A = r - V(s) with the current critic, optionally normalized to zero mean
/// and unit variance. Throws EmptyRollout.
void ppo_compute_advantages(std::vector<PpoSample>& rollout, const Mlp& critic, bool normalize);

struct PpoLosses {
    double clip = 0.0;    ///< mean min(p A, clip(p) A)
    double value = 0.0;   ///< mean (V - r)^2
    double entropy = 0.0; ///< mean categorical entropy
    double total = 0.0;   ///< clip + entropy_coef * entropy - value_coef * value, maximized
};

struct PpoEvaluation {
    PpoLosses losses;
    MlpGradient actor;  ///< gradient of -total
    MlpGradient critic; ///< gradient of -total
};

/// Uses the stored advantages. Throws EmptyRollout.
PpoEvaluation ppo_losses(std::span<const PpoSample> rollout, const Mlp& actor, const Mlp& critic,
                         const Hyperparameters& hp);

/// Numerically stable log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

/// One-step episodes with a fixed action set.
class BanditEnvironment {
public:
    virtual ~BanditEnvironment() = default;
    virtual Eigen::Index feature_count() const = 0;
    virtual int action_count() const = 0;
    /// Draws a new state and returns its features.
    virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
    /// Reward for `action` in the state drawn by the last reset.
    virtual double step(int action) = 0;
};

/// Training resets and table-backend steps of an env::Environment.
class TableBandit : public BanditEnvironment {
public:
    explicit TableBandit(const env::Environment& env);
    Eigen::Index feature_count() const override { return env::kFeatureCount; }
    int action_count() const override { return env::kActionCount; }
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    double step(int action) override;

private:
    const env::Environment& env_;
    env::MdpState state_;
};

/// n states, n actions, one-hot features, reward 1 when action == state.
class MatchingBandit : public BanditEnvironment {
public:
    explicit MatchingBandit(int n = 8) : n_(n) {}
    Eigen::Index feature_count() const override { return n_; }
    int action_count() const override { return n_; }
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    double step(int action) override { return action == state_ ? 1.0 : 0.0; }
    int state() const { return state_; }

private:
    int n_;
    int state_ = 0;
};

struct TrainingLogRow {
    long iteration = 0;
    double mean_episode_reward = 0.0;
    double explore_metric = 0.0; ///< epsilon for DQN, mean policy entropy for PPO
};

struct TrainedAgent {
    AgentKind kind = AgentKind::Ppo;
    Mlp policy;                 ///< Q-network or actor
    std::optional<Mlp> critic;  ///< PPO only
    std::vector<TrainingLogRow> log;
};

/// Called after every logged row.
using TrainingObserver = std::function<void(const TrainingLogRow&)>;

/// Runs hp.total_iterations environment interactions. Deterministic in `seed`.
TrainedAgent train(AgentKind kind, BanditEnvironment& env, const Hyperparameters& hp, std::uint64_t seed,
                   const TrainingObserver& observer = {});

/// Greedy action: argmax of Q-values or actor logits.
int greedy_action(const Mlp& policy, const Eigen::VectorXd& features);

/// `iteration,mean_episode_reward,explore_metric`.
void write_training_log_csv(std::ostream& os, std::span<const TrainingLogRow> log);

struct SummaryStats {
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Quartiles by linear interpolation between order statistics
/// (position (n - 1) * q). Throws InvalidArgument on empty input.
SummaryStats summarize(std::span<const double> values);

/// `statistic,imax_pu` rows Mean, Median, Q1, Q3, Minimum, Maximum.
void write_summary_csv(std::ostream& os, const SummaryStats& s);

struct EvaluationRow {
    flux::SwitchingScenario scenario;
    int theta_close = 0;
    double i_max_pu = 0.0;
};

struct EvaluationResult {
    std::vector<EvaluationRow> rows;
    SummaryStats stats;
};

/// Greedy closing angle per scenario, peak from direct simulation.
EvaluationResult evaluate_policy(const Mlp& policy, std::span<const flux::SwitchingScenario> scenarios,
                                 const circuit::CircuitConfig& cfg, unsigned jobs = 0);

/// `theta_open_deg,phi1_wb,phi2_wb,phi3_wb,theta_close_deg,imax_pu`.
void write_evaluation_csv(std::ostream& os, const EvaluationResult& result);

}  // namespace inrush::rl
