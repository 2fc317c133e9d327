#include "doctest.h"

#include "inrush/errors.hpp"
#include "inrush/rl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

using namespace inrush;
using namespace inrush::rl;

namespace {

/// Plain re-implementation of the forward pass.
Eigen::VectorXd naive_forward(const Mlp& net, const Eigen::VectorXd& x) {
    std::vector<double> a(x.data(), x.data() + x.size());
    for (const Layer& l : net.layers()) {
        std::vector<double> z(l.outputs());
        for (Eigen::Index i = 0; i < l.outputs(); ++i) {
            double s = l.bias(i);
            for (Eigen::Index j = 0; j < l.inputs(); ++j) s += l.weight(i, j) * a[j];
            z[i] = l.activation == Activation::Relu ? std::max(0.0, s) : s;
        }
        a = z;
    }
    return Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

Mlp random_net(const std::vector<int>& sizes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mlp net = Mlp::make(sizes, rng);
    std::normal_distribution<double> d(0.0, 0.1);
    for (auto& l : net.layers()) l.bias = l.bias.unaryExpr([&](double) { return d(rng); });
    return net;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

Hyperparameters small_hp(AgentKind kind) {
    Hyperparameters hp = Hyperparameters::defaults(kind);
    hp.hidden = {16};
    hp.batch_size = 32;
    hp.rollout = 32;
    hp.minibatch = 32;
    hp.total_iterations = 2000;
    hp.buffer_size = std::min<std::size_t>(hp.buffer_size, 1000);
    return hp;
}

double naive_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace

TEST_SUITE("rl") {

TEST_CASE("forward of a zero-weight net returns the output biases") {
    std::mt19937_64 rng(1);
    Mlp net = Mlp::make({5, 4, 3}, rng);
    for (auto& l : net.layers()) l.weight.setZero();
    net.layers().back().bias << 0.1, -0.2, 0.3;
    const Eigen::VectorXd y = mlp_forward(net, Eigen::VectorXd::Constant(5, 2.0));
    CHECK(y(0) == 0.1);
    CHECK(y(1) == -0.2);
    CHECK(y(2) == 0.3);
}

TEST_CASE("identity layer passes input through") {
    Layer l{Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), Activation::Identity};
    const Mlp net({l});
    const Eigen::VectorXd x = Eigen::Vector4d(1.0, -2.0, 3.5, 0.0);
    CHECK(mlp_forward(net, x) == x);
}

TEST_CASE("forward agrees with a naive evaluator and checks shapes") {
    const Mlp net = random_net({5, 64, 64, 360}, 3);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) {
        const Eigen::VectorXd x = random_vector(5, rng);
        const Eigen::VectorXd a = mlp_forward(net, x);
        const Eigen::VectorXd b = naive_forward(net, x);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::MatrixXd batch(5, 2);
        batch << x, x;
        const ForwardCache cache = mlp_forward_batch(net, batch);
        CHECK((cache.output().col(1) - a).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(mlp_forward(net, Eigen::VectorXd::Zero(4)), ShapeMismatch);
}

TEST_CASE("network construction") {
    std::mt19937_64 rng(2);
    const Mlp net = Mlp::make({5, 64, 64, 360}, rng);
    REQUIRE(net.layers().size() == 3);
    CHECK(net.layers()[0].activation == Activation::Relu);
    CHECK(net.layers()[1].activation == Activation::Relu);
    CHECK(net.layers()[2].activation == Activation::Identity);
    CHECK(net.parameter_count() == 5 * 64 + 64 + 64 * 64 + 64 + 64 * 360 + 360);
    const double limit = std::sqrt(6.0 / 5.0);
    CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= limit);
    CHECK(net.layers()[0].bias.isZero());
    CHECK(net.parameter(0) == net.layers()[0].weight(0, 0));
    CHECK(net.parameter(1) == net.layers()[0].weight(0, 1));
    CHECK(net.parameter(5 * 64) == net.layers()[0].bias(0));
}

TEST_CASE("gradients match central finite differences") {
    Mlp net = random_net({5, 16, 12, 7}, 9);
    std::mt19937_64 rng(10);
    Eigen::MatrixXd x(5, 10);
    for (int c = 0; c < 10; ++c) x.col(c) = random_vector(5, rng);
    Eigen::MatrixXd w(7, 10);
    for (int c = 0; c < 10; ++c) w.col(c) = random_vector(7, rng);
    // Loss = sum(w .* output) + 0.5 * sum(output^2).
    auto loss = [&](const Mlp& n) {
        const Eigen::MatrixXd y = mlp_forward_batch(n, x).output();
        return (w.array() * y.array()).sum() + 0.5 * y.squaredNorm();
    };
    const ForwardCache cache = mlp_forward_batch(net, x);
    const MlpGradient g = mlp_gradient(net, cache, w + cache.output());
    std::uniform_int_distribution<std::size_t> pick(0, net.parameter_count() - 1);
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = pick(rng);
        const double saved = net.parameter(k);
        const double h = 1e-5;
        net.parameter(k) = saved + h;
        const double up = loss(net);
        net.parameter(k) = saved - h;
        const double down = loss(net);
        net.parameter(k) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = g.parameter(k);
        if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-9);
        ++checked;
    }
    CHECK(checked > 50);
}

TEST_CASE("gradient base cases") {
    const Mlp net = random_net({3, 4, 2}, 12);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
    const ForwardCache cache = mlp_forward_batch(net, x);
    const MlpGradient zero = mlp_gradient(net, cache, Eigen::MatrixXd::Zero(2, 5));
    for (std::size_t i = 0; i < zero.parameter_count(); ++i) CHECK(zero.parameter(i) == 0.0);
    CHECK_THROWS_AS(mlp_gradient(net, cache, Eigen::MatrixXd::Zero(3, 5)), ShapeMismatch);

    Layer l{Eigen::MatrixXd::Random(2, 3), Eigen::VectorXd::Random(2), Activation::Identity};
    const Mlp lin({l});
    const Eigen::Vector3d xi(0.5, -1.5, 2.0);
    const Eigen::Vector2d up(3.0, -0.25);
    const MlpGradient g = mlp_gradient(lin, mlp_forward_batch(lin, xi), up);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(g.weight[0](i, j) == doctest::Approx(xi(j) * up(i)).epsilon(1e-15));
        CHECK(g.bias[0](i) == up(i));
    }
}

TEST_CASE("Adam first step, zero gradient and asymptote") {
    std::mt19937_64 rng(3);
    Mlp net = Mlp::make({2, 2}, rng);
    const Mlp start = net;
    MlpGradient g = MlpGradient::zeros_like(net);
    g.weight[0] << 0.5, -2.0, 1e-3, -7.0;
    g.bias[0] << 4.0, -0.1;
    Adam opt(net, 0.01);
    opt.update(net, g);
    for (std::size_t i = 0; i < net.parameter_count(); ++i) {
        const double delta = net.parameter(i) - start.parameter(i);
        const double sign = g.parameter(i) > 0.0 ? 1.0 : -1.0;
        CHECK(delta == doctest::Approx(-0.01 * sign).epsilon(1e-6));
    }

    Mlp frozen = start;
    Adam idle(frozen, 0.01);
    idle.update(frozen, MlpGradient::zeros_like(frozen));
    CHECK(frozen == start);

    Mlp steady = start;
    Adam constant(steady, 0.01);
    Mlp prev = steady;
    for (int i = 0; i < 5000; ++i) {
        prev = steady;
        constant.update(steady, g);
    }
    for (std::size_t i = 0; i < steady.parameter_count(); ++i) {
        CHECK(std::abs(steady.parameter(i) - prev.parameter(i)) == doctest::Approx(0.01).epsilon(1e-3));
    }
    CHECK(constant.step() == 5000);
}

TEST_CASE("epsilon schedules") {
    const Hyperparameters lin = Hyperparameters::defaults(AgentKind::DqnLinear);
    const Hyperparameters ex = Hyperparameters::defaults(AgentKind::DqnExponential);
    CHECK(epsilon_linear(0, lin) == 1.0);
    CHECK(std::abs(epsilon_linear(15400, lin) - 9.19e-4) < 1e-9);
    CHECK(epsilon_linear(7700, lin) == doctest::Approx(0.5005).epsilon(1e-4));
    CHECK(epsilon_linear(70000, lin) == 9.19e-4);
    CHECK(epsilon_exponential(0, ex) == 1.0);
    CHECK(std::abs(epsilon_exponential(34300, ex) - 8.67e-4) < 1e-9);
    CHECK(epsilon_exponential(17150, ex) == doctest::Approx(std::sqrt(8.67e-4)).epsilon(1e-9));
    CHECK(epsilon_exponential(17150, ex) == doctest::Approx(0.02944).epsilon(1e-3));
    CHECK(epsilon_schedule(AgentKind::DqnLinear, 100, lin) == epsilon_linear(100, lin));
    CHECK(epsilon_schedule(AgentKind::DqnExponential, 100, ex) == epsilon_exponential(100, ex));
    for (long t = 1; t <= 70000; ++t) {
        REQUIRE(epsilon_linear(t, lin) <= epsilon_linear(t - 1, lin));
        REQUIRE(epsilon_exponential(t, ex) <= epsilon_exponential(t - 1, ex));
    }
}

TEST_CASE("hyperparameter defaults and ranges") {
    const Hyperparameters lin = Hyperparameters::defaults(AgentKind::DqnLinear);
    CHECK(lin.learning_rate == 2.74e-3);
    CHECK(lin.buffer_size == 1000);
    CHECK(lin.exploration_fraction == 0.22);
    const Hyperparameters ex = Hyperparameters::defaults(AgentKind::DqnExponential);
    CHECK(ex.learning_rate == 1.15e-3);
    CHECK(ex.buffer_size == 100000);
    CHECK(ex.exploration_fraction == 0.49);
    const Hyperparameters ppo = Hyperparameters::defaults(AgentKind::Ppo);
    CHECK(ppo.learning_rate == 2.42e-3);
    CHECK(ppo.clip == 0.14);
    CHECK(ppo.entropy_coef == 5.53e-2);
    CHECK(ppo.value_coef == 0.89);
    CHECK(ppo.batch_size == 256);
    CHECK(ppo.gamma == 0.99);
    CHECK(ppo.total_iterations == 70000);
    for (const auto& hp : {lin, ex, ppo}) CHECK_NOTHROW(hp.validate());
    Hyperparameters bad = lin;
    bad.learning_rate = 0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = lin;
    bad.exploration_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK(agent_from_string("dqn-exp") == AgentKind::DqnExponential);
    CHECK(to_string(AgentKind::DqnLinear) == "dqn-linear");
    CHECK_THROWS_AS(agent_from_string("a2c"), InvalidArgument);
}

TEST_CASE("epsilon-greedy selection") {
    const Mlp net = random_net({5, 8, 360}, 21);
    std::mt19937_64 rng(22);
    const Eigen::VectorXd s = random_vector(5, rng);
    const int best = argmax(mlp_forward(net, s));
    for (int i = 0; i < 100; ++i) CHECK(dqn_select_action(net, s, 0.0, rng) == best);

    std::vector<int> counts(360, 0);
    for (int i = 0; i < 36000; ++i) ++counts[dqn_select_action(net, s, 1.0, rng)];
    double chi2 = 0.0;
    for (int c : counts) {
        CHECK(c >= 100 - 35);
        CHECK(c <= 100 + 35);
        chi2 += (c - 100.0) * (c - 100.0) / 100.0;
    }
    CHECK(chi2 < 359.0 + 4.0 * 26.8);

    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 50; ++i) CHECK(dqn_select_action(net, s, 0.3, a) == dqn_select_action(net, s, 0.3, b));

    Eigen::VectorXd ties = Eigen::VectorXd::Zero(6);
    ties(2) = 1.0;
    ties(4) = 1.0;
    CHECK(argmax(ties) == 2);
}

TEST_CASE("greedy action is invariant to a constant output shift") {
    Mlp net = random_net({5, 8, 360}, 30);
    std::mt19937_64 rng(31);
    const Eigen::VectorXd s = random_vector(5, rng);
    const int before = greedy_action(net, s);
    net.layers().back().bias.array() += 3.75;
    CHECK(greedy_action(net, s) == before);
}

TEST_CASE("replay buffer") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) buf.push({Eigen::VectorXd::Constant(1, i), i, 0.0, Eigen::VectorXd::Zero(1), true});
    CHECK(buf.size() == 3);
    CHECK(buf.capacity() == 3);
    std::vector<int> actions;
    for (std::size_t i = 0; i < buf.size(); ++i) actions.push_back(buf[i].action);
    std::sort(actions.begin(), actions.end());
    CHECK(actions == std::vector<int>{2, 3, 4});
    std::mt19937_64 rng(1);
    std::vector<int> counts(3, 0);
    for (std::size_t idx : buf.sample(30000, rng)) ++counts[idx];
    for (int c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.05));
}

TEST_CASE("DQN targets and loss hand cases") {
    auto constant_net = [](double value, double nan_weight = 0.0) {
        Layer l{Eigen::MatrixXd::Constant(4, 5, nan_weight), Eigen::VectorXd::Constant(4, value), Activation::Identity};
        return Mlp({l});
    };
    const Mlp net = constant_net(0.3);
    // The target network would poison y if it were evaluated.
    const Mlp poisoned = constant_net(std::numeric_limits<double>::quiet_NaN());
    const Transition terminal{Eigen::VectorXd::Ones(5), 2, 0.72, Eigen::VectorXd::Ones(5), true};
    const Transition* batch[] = {&terminal};
    const DqnLoss l = dqn_loss(net, poisoned, batch, 0.99);
    CHECK(l.target(0) == 0.72);
    CHECK(l.loss == doctest::Approx(0.1764).epsilon(1e-12));

    const Mlp target_one = constant_net(1.0);
    const Transition open{Eigen::VectorXd::Ones(5), 1, 0.0, Eigen::VectorXd::Ones(5), false};
    const Transition* batch2[] = {&open};
    const DqnLoss l2 = dqn_loss(net, target_one, batch2, 0.99);
    CHECK(l2.target(0) == doctest::Approx(0.99).epsilon(1e-15));

    // Only the chosen action's head receives gradient.
    for (int i = 0; i < 4; ++i) {
        const bool chosen = i == 2;
        CHECK((l.grad.bias[0](i) != 0.0) == chosen);
        CHECK((l.grad.weight[0].row(i).norm() != 0.0) == chosen);
    }
    CHECK(l.grad.bias[0](2) == doctest::Approx(-2.0 * (0.72 - 0.3)).epsilon(1e-12));
}

TEST_CASE("DQN loss gradient matches finite differences") {
    Mlp net = random_net({5, 12, 9}, 40);
    const Mlp target = random_net({5, 12, 9}, 41);
    std::mt19937_64 rng(42);
    std::vector<Transition> data;
    for (int i = 0; i < 16; ++i) {
        data.push_back({random_vector(5, rng), static_cast<int>(rng() % 9), random_vector(1, rng)(0),
                        random_vector(5, rng), i % 3 == 0});
    }
    std::vector<const Transition*> batch;
    for (const auto& t : data) batch.push_back(&t);
    const DqnLoss l = dqn_loss(net, target, batch, 0.9);
    for (std::size_t k = 0; k < net.parameter_count(); k += 7) {
        const double saved = net.parameter(k);
        net.parameter(k) = saved + 1e-6;
        const double up = dqn_loss(net, target, batch, 0.9).loss;
        net.parameter(k) = saved - 1e-6;
        const double down = dqn_loss(net, target, batch, 0.9).loss;
        net.parameter(k) = saved;
        const double fd = (up - down) / 2e-6;
        CHECK(l.grad.parameter(k) == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
    }
}

TEST_CASE("PPO ratio and clip") {
    CHECK(ppo_ratio(-1.3, -1.3) == 1.0);
    CHECK(ppo_ratio(std::log(2.0) - 0.4, -0.4) == doctest::Approx(2.0).epsilon(1e-15));
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e-3, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double pn = u(rng);
        const double po = u(rng);
        CHECK(std::abs(ppo_ratio(std::log(pn), std::log(po)) - pn / po) <= 1e-12 * (pn / po));
    }
    CHECK(ppo_clip(1.5, 0.14) == doctest::Approx(1.14).epsilon(1e-15));
    CHECK(ppo_clip(1.0, 0.14) == 1.0);
    CHECK(ppo_clip(0.5, 0.14) == doctest::Approx(0.86).epsilon(1e-15));
}

TEST_CASE("clipped surrogate never exceeds the unclipped term") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> p(0.0, 3.0);
    std::uniform_real_distribution<double> a(-2.0, 2.0);
    for (int i = 0; i < 100000; ++i) {
        const double pi = p(rng);
        const double ai = a(rng);
        const double s = std::min(pi * ai, ppo_clip(pi, 0.14) * ai);
        REQUIRE(s <= pi * ai);
        if (ai > 0.0) REQUIRE(s <= 1.14 * ai + 1e-15);
    }
}

TEST_CASE("PPO losses special cases") {
    const Mlp actor = random_net({5, 8, 360}, 50);
    Mlp critic = random_net({5, 8, 1}, 51);
    Hyperparameters hp = Hyperparameters::defaults(AgentKind::Ppo);
    std::mt19937_64 rng(52);
    std::vector<PpoSample> rollout;
    for (int i = 0; i < 20; ++i) {
        PpoSample s;
        s.state = random_vector(5, rng);
        s.action = static_cast<int>(rng() % 360);
        s.reward = random_vector(1, rng)(0);
        s.logp_old = log_softmax(mlp_forward(actor, s.state))(s.action);
        s.advantage = random_vector(1, rng)(0);
        rollout.push_back(s);
    }
    double mean_adv = 0.0;
    for (const auto& s : rollout) mean_adv += s.advantage / rollout.size();
    const PpoEvaluation same = ppo_losses(rollout, actor, critic, hp);
    CHECK(same.losses.clip == doctest::Approx(mean_adv).epsilon(1e-12));
    CHECK(same.losses.total ==
          doctest::Approx(same.losses.clip + hp.entropy_coef * same.losses.entropy - hp.value_coef * same.losses.value)
              .epsilon(1e-12));

    // A critic that predicts every reward exactly.
    std::vector<PpoSample> one{rollout[0]};
    Layer perfect{Eigen::MatrixXd::Zero(1, 5), Eigen::VectorXd::Constant(1, one[0].reward), Activation::Identity};
    const Mlp exact_critic({perfect});
    ppo_compute_advantages(one, exact_critic, false);
    CHECK(one[0].advantage == 0.0);
    CHECK(ppo_losses(one, actor, exact_critic, hp).losses.value == 0.0);

    Mlp uniform = actor;
    for (auto& l : uniform.layers()) {
        l.weight.setZero();
        l.bias.setZero();
    }
    CHECK(ppo_losses(rollout, uniform, critic, hp).losses.entropy == doctest::Approx(std::log(360.0)).epsilon(1e-12));
    CHECK(std::log(360.0) == doctest::Approx(5.8861).epsilon(1e-4));

    std::vector<PpoSample> empty;
    CHECK_THROWS_AS(ppo_losses(empty, actor, critic, hp), EmptyRollout);
    CHECK_THROWS_AS(ppo_compute_advantages(empty, critic, true), EmptyRollout);
}

TEST_CASE("PPO loss gradients match finite differences") {
    Mlp actor = random_net({5, 10, 12}, 90);
    Mlp critic = random_net({5, 10, 1}, 91);
    const Hyperparameters hp = Hyperparameters::defaults(AgentKind::Ppo);
    std::mt19937_64 rng(92);
    std::vector<PpoSample> rollout;
    for (int i = 0; i < 10; ++i) {
        PpoSample s;
        s.state = random_vector(5, rng);
        s.action = static_cast<int>(rng() % 12);
        s.reward = random_vector(1, rng)(0);
        // Old log-probabilities away from the current ones exercise the clip.
        s.logp_old = log_softmax(mlp_forward(actor, s.state))(s.action) + 0.3 * random_vector(1, rng)(0);
        s.advantage = random_vector(1, rng)(0);
        rollout.push_back(s);
    }
    const PpoEvaluation ev = ppo_losses(rollout, actor, critic, hp);
    auto check = [&](Mlp& net, const MlpGradient& grad) {
        for (std::size_t k = 0; k < net.parameter_count(); k += 3) {
            const double saved = net.parameter(k);
            net.parameter(k) = saved + 1e-6;
            const double up = ppo_losses(rollout, actor, critic, hp).losses.total;
            net.parameter(k) = saved - 1e-6;
            const double down = ppo_losses(rollout, actor, critic, hp).losses.total;
            net.parameter(k) = saved;
            // Gradients are of the negated objective.
            const double fd = -(up - down) / 2e-6;
            CHECK(grad.parameter(k) == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
        }
    };
    check(actor, ev.actor);
    check(critic, ev.critic);
}

TEST_CASE("advantage normalization") {
    const Mlp critic = random_net({5, 8, 1}, 60);
    std::mt19937_64 rng(61);
    std::vector<PpoSample> rollout(64);
    for (auto& s : rollout) {
        s.state = random_vector(5, rng);
        s.reward = random_vector(1, rng)(0);
    }
    ppo_compute_advantages(rollout, critic, true);
    double mean = 0.0, var = 0.0;
    for (const auto& s : rollout) mean += s.advantage / 64.0;
    for (const auto& s : rollout) var += (s.advantage - mean) * (s.advantage - mean) / 64.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("log-softmax is stable and shift invariant") {
    Eigen::VectorXd z(3);
    z << 1000.0, 1001.0, 999.0;
    const Eigen::VectorXd l = log_softmax(z);
    CHECK(l.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Eigen::VectorXd shifted = log_softmax((z.array() - 1000.0).matrix());
    CHECK((l - shifted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training is deterministic per seed") {
    for (AgentKind kind : {AgentKind::DqnLinear, AgentKind::DqnExponential, AgentKind::Ppo}) {
        const Hyperparameters hp = small_hp(kind);
        MatchingBandit env_a(8), env_b(8), env_c(8);
        const TrainedAgent a = train(kind, env_a, hp, 123);
        const TrainedAgent b = train(kind, env_b, hp, 123);
        const TrainedAgent c = train(kind, env_c, hp, 124);
        CHECK(a.policy == b.policy);
        CHECK_FALSE(a.policy == c.policy);
        CHECK(a.log.size() == static_cast<std::size_t>(hp.total_iterations / hp.log_every));
        CHECK(a.log.back().iteration == hp.total_iterations);
        CHECK(a.critic.has_value() == (kind == AgentKind::Ppo));
        if (is_dqn(kind)) CHECK(a.log.back().explore_metric == doctest::Approx(hp.epsilon_final));
    }
}

TEST_CASE("network text round trip is bit exact") {
    const Mlp net = random_net({5, 7, 3}, 70);
    std::stringstream ss;
    write_mlp(ss, net);
    CHECK(ss.str().rfind("mlp 2\nlayer 5 7 relu\n", 0) == 0);
    const Mlp back = read_mlp(ss);
    CHECK(back == net);
    std::istringstream bad("mlp 1\nlayer 2 2 tanh\n0 0 0 0 0 0\n");
    CHECK_THROWS_AS(read_mlp(bad), ParseError);
    std::istringstream truncated("mlp 1\nlayer 2 2 relu\n0 0\n");
    CHECK_THROWS_AS(read_mlp(truncated), ParseError);
}

TEST_CASE("summary statistics") {
    std::mt19937_64 rng(80);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int n : {1, 2, 5, 48}) {
        std::vector<double> v(n);
        for (double& x : v) x = u(rng);
        const SummaryStats s = summarize(v);
        double mean = 0.0;
        for (double x : v) mean += x / n;
        CHECK(s.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(std::abs(s.median - naive_quantile(v, 0.5)) < 1e-12);
        CHECK(std::abs(s.q1 - naive_quantile(v, 0.25)) < 1e-12);
        CHECK(std::abs(s.q3 - naive_quantile(v, 0.75)) < 1e-12);
        CHECK(s.min == *std::min_element(v.begin(), v.end()));
        CHECK(s.max == *std::max_element(v.begin(), v.end()));
    }
    const std::vector<double> same(48, 0.4);
    const SummaryStats s = summarize(same);
    CHECK(s.q3 - s.q1 == 0.0);
    CHECK_THROWS_AS(summarize(std::vector<double>{}), InvalidArgument);

    std::ostringstream os;
    write_summary_csv(os, s);
    std::istringstream is(os.str());
    std::string line;
    std::vector<std::string> labels;
    std::getline(is, line);
    CHECK(line == "statistic,imax_pu");
    while (std::getline(is, line)) labels.push_back(line.substr(0, line.find(',')));
    CHECK(labels == std::vector<std::string>{"Mean", "Median", "Q1", "Q3", "Minimum", "Maximum"});
}

TEST_CASE("training log CSV") {
    const std::vector<TrainingLogRow> log{{100, 0.5, 0.9}, {200, 0.75, 0.5}};
    std::ostringstream os;
    write_training_log_csv(os, log);
    CHECK(os.str().rfind("iteration,mean_episode_reward,explore_metric\n100,", 0) == 0);
}

}  // TEST_SUITE
