#include "dvhn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>

#include "dvhn/errors.hpp"

namespace dvhn {

namespace {

constexpr Eigen::Index kForwardBlockRows = 256;

std::span<double> span_of(Eigen::MatrixXd& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> span_of(Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

DenseLayer normal_layer(int out, int in, double stddev, bool rectify, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.rectify = rectify;
    return layer;
}

void check_layer(const DenseLayer& layer, const char* name) {
    if (layer.bias.size() != layer.weight.rows()) {
        throw ShapeError(std::string(name) + ": bias length does not match weight rows");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
        throw ValidationError(std::string(name) + ": non-finite parameters");
    }
}

}  // namespace

ModelDims ModelParams::dims() const {
    ModelDims d;
    d.adapter_depth = static_cast<int>(adapter.size());
    d.input_dim = static_cast<int>(adapter.empty() ? hash_layer.in_dim() : adapter.front().in_dim());
    d.feature_dim = static_cast<int>(hash_layer.in_dim());
    d.bits = static_cast<int>(hash_layer.out_dim());
    d.classes = static_cast<int>(identity_head.out_dim());
    return d;
}

void ModelParams::validate() const {
    Eigen::Index width = adapter.empty() ? hash_layer.in_dim() : adapter.front().in_dim();
    for (const auto& layer : adapter) {
        check_layer(layer, "adapter layer");
        if (layer.in_dim() != width) throw ShapeError("adapter layers do not chain");
        width = layer.out_dim();
    }
    check_layer(hash_layer, "hash layer");
    check_layer(identity_head, "identity head");
    if (hash_layer.in_dim() != width || identity_head.in_dim() != width) {
        throw ShapeError("hash layer and identity head must read the adapter output");
    }
    if (hash_layer.out_dim() < 1 || identity_head.out_dim() < 1 || width < 1) {
        throw ShapeError("model dimensions must be positive");
    }
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    z.for_each_tensor([](std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
    return z;
}

std::size_t ModelParams::size() const {
    std::size_t n = 0;
    for_each_tensor([&n](std::span<const double> t) { n += t.size(); });
    return n;
}

void ModelParams::for_each_tensor(const std::function<void(std::span<double>)>& fn) {
    for (auto& layer : adapter) {
        fn(span_of(layer.weight));
        fn(span_of(layer.bias));
    }
    fn(span_of(hash_layer.weight));
    fn(span_of(hash_layer.bias));
    fn(span_of(identity_head.weight));
    fn(span_of(identity_head.bias));
}

void ModelParams::for_each_tensor(const std::function<void(std::span<const double>)>& fn) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&fn](std::span<double> t) { fn(std::span<const double>(t)); });
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(params.size());
    params.for_each_tensor(
        [&out](std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
    return out;
}

void assign_flat(ModelParams& params, std::span<const double> values) {
    if (values.size() != params.size()) throw ShapeError("flat parameter vector has wrong length");
    std::size_t offset = 0;
    params.for_each_tensor([&](std::span<double> t) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
        offset += t.size();
    });
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    if (dims.input_dim < 1 || dims.feature_dim < 1 || dims.bits < 1 || dims.classes < 1 ||
        dims.adapter_depth < 0) {
        throw ValidationError("model dimensions must be positive");
    }
    if (dims.adapter_depth == 0 && dims.feature_dim != dims.input_dim) {
        throw ValidationError("an empty adapter requires feature_dim == input_dim");
    }
    std::mt19937_64 rng(seed);
    ModelParams params;
    int in = dims.input_dim;
    for (int l = 0; l < dims.adapter_depth; ++l) {
        params.adapter.push_back(
            normal_layer(dims.feature_dim, in, std::sqrt(2.0 / in), true, rng));
        in = dims.feature_dim;
    }
    params.hash_layer = normal_layer(dims.bits, dims.feature_dim, 0.01, false, rng);
    params.identity_head = normal_layer(dims.classes, dims.feature_dim, 0.01, false, rng);
    return params;
}

ForwardTrace forward(const ModelParams& params, const Eigen::MatrixXd& rows) {
    const auto expected = params.dims().input_dim;
    if (rows.cols() != expected) {
        throw ShapeError("input width " + std::to_string(rows.cols()) +
                         " does not match model input dimension " + std::to_string(expected));
    }
    ForwardTrace trace;
    trace.activations.push_back(rows);
    for (const auto& layer : params.adapter) {
        trace.pre_activations.push_back(affine(layer, trace.activations.back()));
        Eigen::MatrixXd a = trace.pre_activations.back();
        if (layer.rectify) a = a.cwiseMax(0.0);
        trace.activations.push_back(std::move(a));
    }
    trace.features = trace.activations.back();
    trace.hash = affine(params.hash_layer, trace.features);
    trace.logits = affine(params.identity_head, trace.features);
    return trace;
}

Eigen::MatrixXd forward_hash(const ModelParams& params, const Eigen::MatrixXd& rows, int threads) {
    const auto expected = params.dims().input_dim;
    if (rows.cols() != expected) {
        throw ShapeError("input width " + std::to_string(rows.cols()) +
                         " does not match model input dimension " + std::to_string(expected));
    }
    Eigen::MatrixXd out(rows.rows(), params.bits());
    const Eigen::Index blocks = (rows.rows() + kForwardBlockRows - 1) / kForwardBlockRows;
    auto run_block = [&](Eigen::Index b) {
        const Eigen::Index begin = b * kForwardBlockRows;
        const Eigen::Index count = std::min(kForwardBlockRows, rows.rows() - begin);
        Eigen::MatrixXd x = rows.middleRows(begin, count);
        for (const auto& layer : params.adapter) {
            x = affine(layer, x);
            if (layer.rectify) x = x.cwiseMax(0.0);
        }
        out.middleRows(begin, count) = affine(params.hash_layer, x);
    };
    const auto workers = static_cast<Eigen::Index>(std::max(1, threads));
    if (workers == 1 || blocks <= 1) {
        for (Eigen::Index b = 0; b < blocks; ++b) run_block(b);
        return out;
    }
    std::vector<std::jthread> pool;
    for (Eigen::Index w = 0; w < std::min(workers, blocks); ++w) {
        pool.emplace_back([&, w] {
            for (Eigen::Index b = w; b < blocks; b += workers) run_block(b);
        });
    }
    pool.clear();
    return out;
}

Eigen::VectorXd sign_binarize(const Eigen::VectorXd& h) {
    return h.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

Eigen::MatrixXd sign_binarize(const Eigen::MatrixXd& h) {
    return h.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace,
                    const Eigen::MatrixXd& grad_hash, const Eigen::MatrixXd& grad_logits,
                    const Eigen::MatrixXd& grad_features) {
    const auto batch = trace.features.rows();
    if (grad_hash.rows() != batch || grad_hash.cols() != params.hash_layer.out_dim()) {
        throw ShapeError("grad_hash must be batch x K");
    }
    if (grad_logits.rows() != batch || grad_logits.cols() != params.identity_head.out_dim()) {
        throw ShapeError("grad_logits must be batch x C");
    }
    if (grad_features.size() != 0 &&
        (grad_features.rows() != batch || grad_features.cols() != trace.features.cols())) {
        throw ShapeError("grad_features must be batch x M'");
    }
    if (trace.pre_activations.size() != params.adapter.size()) {
        throw ShapeError("trace was not produced by these parameters");
    }

    ParamGrads grads = params.zeros_like();
    grads.hash_layer.weight = grad_hash.transpose() * trace.features;
    grads.hash_layer.bias = grad_hash.colwise().sum().transpose();
    grads.identity_head.weight = grad_logits.transpose() * trace.features;
    grads.identity_head.bias = grad_logits.colwise().sum().transpose();

    Eigen::MatrixXd upstream =
        grad_hash * params.hash_layer.weight + grad_logits * params.identity_head.weight;
    if (grad_features.size() != 0) upstream += grad_features;

    for (auto l = static_cast<std::ptrdiff_t>(params.adapter.size()) - 1; l >= 0; --l) {
        const auto& layer = params.adapter[static_cast<std::size_t>(l)];
        const auto& pre = trace.pre_activations[static_cast<std::size_t>(l)];
        if (layer.rectify) {
            upstream = (pre.array() > 0.0).select(upstream, 0.0);
        }
        auto& g = grads.adapter[static_cast<std::size_t>(l)];
        g.weight = upstream.transpose() * trace.activations[static_cast<std::size_t>(l)];
        g.bias = upstream.colwise().sum().transpose();
        if (l > 0) upstream = upstream * layer.weight;
    }
    return grads;
}

}  // namespace dvhn
