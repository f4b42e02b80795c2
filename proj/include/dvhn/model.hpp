#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dvhn {

/// Fully connected layer y = x W^T + b, optionally followed by max(0, .).
struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
    bool rectify = false;

    [[nodiscard]] Eigen::Index in_dim() const { return weight.cols(); }
    [[nodiscard]] Eigen::Index out_dim() const { return weight.rows(); }

    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.rectify == b.rectify && a.weight == b.weight && a.bias == b.bias;
    }
};

struct ModelDims {
    int input_dim = 0;     // M
    int feature_dim = 0;   // M', width of the adapter output f
    int bits = 0;          // K
    int classes = 0;       // C
    int adapter_depth = 1; // number of rectified dense layers in the adapter
};

/// Trainable network: adapter trunk -> f, hash layer f -> h, identity head f -> logits.
///
/// With adapter_depth = 0 the trunk is the identity map and feature_dim must
/// equal input_dim.
struct ModelParams {
    std::vector<DenseLayer> adapter;
    DenseLayer hash_layer;
    DenseLayer identity_head;

    [[nodiscard]] ModelDims dims() const;
    [[nodiscard]] int bits() const { return static_cast<int>(hash_layer.out_dim()); }

    /// Throws ShapeError/ValidationError when layers do not chain or hold non-finite values.
    void validate() const;

    /// Same shapes and flags, all values zero.
    [[nodiscard]] ModelParams zeros_like() const;

    /// Total number of scalar parameters.
    [[nodiscard]] std::size_t size() const;

    /// Visits every weight matrix and bias vector in declaration order:
    /// adapter layers (weight, bias) ..., hash weight, hash bias, head weight, head bias.
    void for_each_tensor(const std::function<void(std::span<double>)>& fn);
    void for_each_tensor(const std::function<void(std::span<const double>)>& fn) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ParamGrads = ModelParams;

/// All parameters concatenated in `for_each_tensor` order.
std::vector<double> flatten(const ModelParams& params);
void assign_flat(ModelParams& params, std::span<const double> values);

/// Adapter layers use fan-in scaled normal init (std sqrt(2 / fan_in)); the
/// hash layer and identity head use normal(0, 0.01) with zero bias.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> pre_activations;  // one per adapter layer
    std::vector<Eigen::MatrixXd> activations;      // [0] = input, then one per adapter layer
    Eigen::MatrixXd features;                      // batch x M'
    Eigen::MatrixXd hash;                          // batch x K
    Eigen::MatrixXd logits;                        // batch x C
};

ForwardTrace forward(const ModelParams& params, const Eigen::MatrixXd& rows);

/// Continuous hash vectors only, computed in fixed row blocks so results do
/// not depend on how many threads share the work. `threads` <= 1 runs inline.
Eigen::MatrixXd forward_hash(const ModelParams& params, const Eigen::MatrixXd& rows,
                             int threads = 1);

/// +1 where h >= 0, -1 elsewhere.
Eigen::VectorXd sign_binarize(const Eigen::VectorXd& h);
Eigen::MatrixXd sign_binarize(const Eigen::MatrixXd& h);

/// Backpropagates the given upstream partials through the network recorded in
/// `trace`. `grad_features` is an extra direct partial on f and may be empty.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const Eigen::MatrixXd& grad_hash, const Eigen::MatrixXd& grad_logits,
                    const Eigen::MatrixXd& grad_features = {});

}  // namespace dvhn
