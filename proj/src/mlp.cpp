#include "inrush/mlp.hpp"

#include "inrush/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace inrush::rl {

namespace {

void apply(Activation a, Eigen::MatrixXd& z) {
    if (a == Activation::Relu) z = z.cwiseMax(0.0);
}

double read_number(std::istream& is, const char* what) {
    std::string token;
    if (!(is >> token)) throw ParseError(fmt::format("network file: missing {}", what));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw ParseError(fmt::format("network file: bad {} '{}'", what, token));
    }
    return v;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ParseError(fmt::format("unknown activation '{}'", s));
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeMismatch("network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.bias.size() != l.outputs() || l.outputs() == 0 || l.inputs() == 0) {
            throw ShapeMismatch(fmt::format("layer {}: inconsistent weight and bias shapes", i));
        }
        if (i > 0 && l.inputs() != layers_[i - 1].outputs()) {
            throw ShapeMismatch(fmt::format("layer {}: expects {} inputs, previous layer gives {}", i, l.inputs(),
                                            layers_[i - 1].outputs()));
        }
    }
}

Mlp Mlp::make(const std::vector<int>& sizes, std::mt19937_64& rng) {
    if (sizes.size() < 2) throw ShapeMismatch("network needs input and output sizes");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        const int in = sizes[i];
        const int out = sizes[i + 1];
        if (in <= 0 || out <= 0) throw ShapeMismatch("layer sizes must be positive");
        Layer l;
        l.weight.resize(out, in);
        l.bias = Eigen::VectorXd::Zero(out);
        l.activation = i + 2 == sizes.size() ? Activation::Identity : Activation::Relu;
        const double limit = std::sqrt(6.0 / in);
        std::uniform_real_distribution<double> u(-limit, limit);
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) l.weight(r, c) = u(rng);
        }
        layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

double& Mlp::parameter(std::size_t i) {
    for (auto& l : layers_) {
        const auto nw = static_cast<std::size_t>(l.weight.size());
        if (i < nw) return l.weight(static_cast<Eigen::Index>(i / l.inputs()), static_cast<Eigen::Index>(i % l.inputs()));
        i -= nw;
        if (i < static_cast<std::size_t>(l.bias.size())) return l.bias(static_cast<Eigen::Index>(i));
        i -= static_cast<std::size_t>(l.bias.size());
    }
    throw InvalidArgument("parameter index out of range");
}

double Mlp::parameter(std::size_t i) const { return const_cast<Mlp*>(this)->parameter(i); }

bool Mlp::operator==(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& a = layers_[i];
        const auto& b = other.layers_[i];
        if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.weight != b.weight || a.bias != b.bias) {
            return false;
        }
    }
    return true;
}

MlpGradient MlpGradient::zeros_like(const Mlp& net) {
    MlpGradient g;
    for (const auto& l : net.layers()) {
        g.weight.push_back(Eigen::MatrixXd::Zero(l.outputs(), l.inputs()));
        g.bias.push_back(Eigen::VectorXd::Zero(l.outputs()));
    }
    return g;
}

std::size_t MlpGradient::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weight.size(); ++i) n += static_cast<std::size_t>(weight[i].size() + bias[i].size());
    return n;
}

double MlpGradient::parameter(std::size_t i) const {
    for (std::size_t k = 0; k < weight.size(); ++k) {
        const auto nw = static_cast<std::size_t>(weight[k].size());
        const auto cols = static_cast<std::size_t>(weight[k].cols());
        if (i < nw) return weight[k](static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
        i -= nw;
        if (i < static_cast<std::size_t>(bias[k].size())) return bias[k](static_cast<Eigen::Index>(i));
        i -= static_cast<std::size_t>(bias[k].size());
    }
    throw InvalidArgument("parameter index out of range");
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x) {
    if (x.size() != net.inputs()) {
        throw ShapeMismatch(fmt::format("network expects {} inputs, got {}", net.inputs(), x.size()));
    }
    Eigen::MatrixXd a = x;
    for (const auto& l : net.layers()) {
        Eigen::MatrixXd z = l.weight * a;
        z.colwise() += l.bias;
        apply(l.activation, z);
        a = std::move(z);
    }
    return a.col(0);
}

ForwardCache mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x) {
    return mlp_forward_batch(net, x, net.layers().size());
}

ForwardCache mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x, std::size_t n_layers) {
    if (x.rows() != net.inputs()) {
        throw ShapeMismatch(fmt::format("network expects {} inputs, got {}", net.inputs(), x.rows()));
    }
    if (n_layers > net.layers().size()) throw ShapeMismatch("more layers requested than the network has");
    ForwardCache cache;
    cache.activations.reserve(n_layers + 1);
    cache.activations.push_back(x);
    for (std::size_t k = 0; k < n_layers; ++k) {
        const auto& l = net.layers()[k];
        Eigen::MatrixXd z = l.weight * cache.activations.back();
        z.colwise() += l.bias;
        apply(l.activation, z);
        cache.activations.push_back(std::move(z));
    }
    return cache;
}

MlpGradient mlp_gradient(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& d_output) {
    if (cache.activations.size() != net.layers().size() + 1) throw ShapeMismatch("forward cache does not match network");
    if (d_output.rows() != net.outputs() || d_output.cols() != cache.output().cols()) {
        throw ShapeMismatch("output gradient shape does not match the recorded batch");
    }
    MlpGradient g = MlpGradient::zeros_like(net);
    mlp_backprop(net, cache, d_output, net.layers().size(), g);
    return g;
}

void mlp_backprop(const Mlp& net, const ForwardCache& cache, Eigen::MatrixXd delta, std::size_t n_layers,
                  MlpGradient& grad) {
    const auto& layers = net.layers();
    if (n_layers > layers.size() || cache.activations.size() < n_layers + 1 || grad.weight.size() != layers.size()) {
        throw ShapeMismatch("backprop: cache or gradient does not match network");
    }
    if (n_layers > 0 && (delta.rows() != layers[n_layers - 1].outputs() || delta.cols() != cache.activations[0].cols())) {
        throw ShapeMismatch("backprop: delta shape does not match the layer output");
    }
    for (std::size_t k = n_layers; k-- > 0;) {
        const auto& l = layers[k];
        if (l.activation == Activation::Relu) {
            delta = (cache.activations[k + 1].array() > 0.0).select(delta, 0.0);
        }
        grad.weight[k].noalias() += delta * cache.activations[k].transpose();
        grad.bias[k] += delta.rowwise().sum();
        if (k > 0) delta = l.weight.transpose() * delta;
    }
}

Adam::Adam(const Mlp& net, double learning_rate, AdamOptions opts)
    : lr_(learning_rate), opts_(opts), m_(MlpGradient::zeros_like(net)), v_(MlpGradient::zeros_like(net)) {
    if (!(learning_rate > 0.0)) throw InvalidArgument("Adam learning rate must be > 0");
}

void Adam::update(Mlp& net, const MlpGradient& grad) {
    auto& layers = net.layers();
    if (grad.weight.size() != layers.size()) throw ShapeMismatch("gradient does not match network");
    ++step_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    const double b1 = opts_.beta1;
    const double b2 = opts_.beta2;
    const double eps = opts_.epsilon;
    const double lr = lr_;
    auto move = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t k = 0; k < layers.size(); ++k) {
        move(layers[k].weight, grad.weight[k], m_.weight[k], v_.weight[k]);
        move(layers[k].bias, grad.bias[k], m_.bias[k], v_.bias[k]);
    }
}

void write_mlp(std::ostream& os, const Mlp& net) {
    os << "mlp " << net.layers().size() << '\n';
    for (const auto& l : net.layers()) {
        os << "layer " << l.inputs() << ' ' << l.outputs() << ' ' << to_string(l.activation) << '\n';
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
                os << (c ? " " : "") << fmt::format("{:.17g}", l.weight(r, c));
            }
            os << '\n';
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) os << (r ? " " : "") << fmt::format("{:.17g}", l.bias(r));
        os << '\n';
    }
}

Mlp read_mlp(std::istream& is) {
    std::string tag;
    std::size_t n = 0;
    if (!(is >> tag >> n) || tag != "mlp" || n == 0) throw ParseError("network file: expected 'mlp <n_layers>'");
    std::vector<Layer> layers;
    for (std::size_t k = 0; k < n; ++k) {
        long in = 0, out = 0;
        std::string act;
        if (!(is >> tag >> in >> out >> act) || tag != "layer" || in <= 0 || out <= 0) {
            throw ParseError(fmt::format("network file: bad header for layer {}", k));
        }
        Layer l;
        l.activation = activation_from_string(act);
        l.weight.resize(out, in);
        l.bias.resize(out);
        for (long r = 0; r < out; ++r) {
            for (long c = 0; c < in; ++c) l.weight(r, c) = read_number(is, "weight");
        }
        for (long r = 0; r < out; ++r) l.bias(r) = read_number(is, "bias");
        layers.push_back(std::move(l));
    }
    try {
        return Mlp(std::move(layers));
    } catch (const ShapeMismatch& e) {
        throw ParseError(fmt::format("network file: {}", e.what()));
    }
}

void save_mlp(const std::string& path, const Mlp& net) {
    std::ofstream os(path);
    if (!os) throw Error(fmt::format("cannot write '{}'", path));
    write_mlp(os, net);
}

Mlp load_mlp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError(fmt::format("cannot open network file '{}'", path));
    return read_mlp(is);
}

}  // namespace inrush::rl
