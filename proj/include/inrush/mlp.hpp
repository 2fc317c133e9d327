#pragma once

// Dense feed-forward network on column-major batches: each column of an input
// matrix is one sample.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace inrush::rl {

enum class Activation { Relu, Identity };

std::string to_string(Activation a);
/// Throws ParseError.
Activation activation_from_string(const std::string& s);

struct Layer {
    Eigen::MatrixXd weight; ///< out x in
    Eigen::VectorXd bias;   ///< out
    Activation activation = Activation::Identity;

    Eigen::Index inputs() const { return weight.cols(); }
    Eigen::Index outputs() const { return weight.rows(); }
};

class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<Layer> layers);

    /// ReLU hidden layers, identity output, He-uniform weights and zero biases.
    static Mlp make(const std::vector<int>& sizes, std::mt19937_64& rng);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    Eigen::Index inputs() const { return layers_.front().inputs(); }
    Eigen::Index outputs() const { return layers_.back().outputs(); }

    std::size_t parameter_count() const;
    /// Flat view: per layer, row-major weights followed by biases.
    double& parameter(std::size_t i);
    double parameter(std::size_t i) const;

    bool operator==(const Mlp& other) const;

private:
    std::vector<Layer> layers_;
};

/// Activations recorded by a forward pass, input first.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> activations;

    const Eigen::MatrixXd& output() const { return activations.back(); }
};

struct MlpGradient {
    std::vector<Eigen::MatrixXd> weight;
    std::vector<Eigen::VectorXd> bias;

    static MlpGradient zeros_like(const Mlp& net);
    std::size_t parameter_count() const;
    /// Same layout as Mlp::parameter.
    double parameter(std::size_t i) const;
};

/// Throws ShapeMismatch.
Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x);
ForwardCache mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x);
/// Forward through the first `n_layers` layers only.
ForwardCache mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& x, std::size_t n_layers);

/// Parameter gradients of a scalar loss given dLoss/dOutput for the batch
/// recorded in `cache`. Throws ShapeMismatch.
MlpGradient mlp_gradient(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& d_output);

/// Accumulates into `grad` the gradients of the first `n_layers` layers given
/// dLoss/d(output of layer n_layers - 1) in `delta`, using a cache from the
/// partial forward pass.
void mlp_backprop(const Mlp& net, const ForwardCache& cache, Eigen::MatrixXd delta, std::size_t n_layers,
                  MlpGradient& grad);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1.0e-8;
};

class Adam {
public:
    Adam(const Mlp& net, double learning_rate, AdamOptions opts = {});

    /// One bias-corrected update; `step` counts from 1.
    void update(Mlp& net, const MlpGradient& grad);

    long step() const { return step_; }
    double learning_rate() const { return lr_; }

private:
    double lr_;
    AdamOptions opts_;
    long step_ = 0;
    MlpGradient m_;
    MlpGradient v_;
};

/// `mlp <n_layers>` then per layer `layer <in> <out> <activation>`, row-major
/// weights and biases at 17 significant digits.
void write_mlp(std::ostream& os, const Mlp& net);
/// Throws ParseError.
Mlp read_mlp(std::istream& is);
void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);

}  // namespace inrush::rl
