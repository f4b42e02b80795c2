#include "dvhn/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dvhn/errors.hpp"

namespace dvhn {

LossGrad batch_hard_triplet(const Eigen::MatrixXd& h, const std::vector<std::uint32_t>& labels,
                            double margin) {
    const auto n = h.rows();
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw ShapeError("triplet loss: label count does not match batch rows");
    }
    if (!(margin >= 0.0)) throw ContractError("triplet loss: margin must be >= 0");

    // Pairwise Euclidean distances, computed directly rather than through the
    // Gram expansion so that near-duplicate rows do not lose precision.
    Eigen::MatrixXd dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            dist(i, j) = dist(j, i) = (h.row(i) - h.row(j)).norm();
        }
    }

    LossGrad out;
    out.grad = Eigen::MatrixXd::Zero(h.rows(), h.cols());
    bool any_negative = false;
    for (Eigen::Index a = 0; a < n; ++a) {
        Eigen::Index pos = -1;
        Eigen::Index neg = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == a) continue;
            if (labels[j] == labels[a]) {
                if (pos < 0 || dist(a, j) > dist(a, pos)) pos = j;
            } else if (neg < 0 || dist(a, j) < dist(a, neg)) {
                neg = j;
            }
        }
        if (pos < 0) {
            throw ContractError("triplet loss: label " + std::to_string(labels[a]) +
                                " has a single row in the batch");
        }
        if (neg < 0) continue;
        any_negative = true;
        const double term = margin + dist(a, pos) - dist(a, neg);
        if (term <= 0.0) continue;
        out.loss += term;
        // d||x - y|| / dx = (x - y) / ||x - y||, taken as 0 at x == y.
        if (dist(a, pos) > 0.0) {
            const Eigen::RowVectorXd u = (h.row(a) - h.row(pos)) / dist(a, pos);
            out.grad.row(a) += u;
            out.grad.row(pos) -= u;
        }
        if (dist(a, neg) > 0.0) {
            const Eigen::RowVectorXd u = (h.row(a) - h.row(neg)) / dist(a, neg);
            out.grad.row(a) -= u;
            out.grad.row(neg) += u;
        }
    }
    if (!any_negative) throw ContractError("triplet loss: batch holds a single label");
    out.loss /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    return out;
}

LossGrad identity_loss(const Eigen::MatrixXd& logits, const std::vector<std::uint32_t>& labels) {
    const auto n = logits.rows();
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw ShapeError("identity loss: label count does not match batch rows");
    }
    if (n == 0) throw ShapeError("identity loss: empty batch");
    LossGrad out;
    out.grad.resize(n, logits.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] >= logits.cols()) {
            throw ShapeError("identity loss: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(logits.cols()) + " classes");
        }
        const double top = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp();
        const double z = e.sum();
        out.loss += std::log(z) - (logits(i, labels[i]) - top);
        out.grad.row(i) = e / z;
        out.grad(i, labels[i]) -= 1.0;
    }
    out.loss /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    return out;
}

LossGrad quant_coupling(const Eigen::MatrixXd& h, const Eigen::MatrixXd& codes) {
    if (h.rows() != codes.rows() || h.cols() != codes.cols()) {
        throw ShapeError("quantization coupling: h and codes differ in shape");
    }
    if (h.rows() == 0) throw ShapeError("quantization coupling: empty batch");
    if (!((codes.array() == 1.0) || (codes.array() == -1.0)).all()) {
        throw ValidationError("quantization coupling: codes must be -1/+1");
    }
    const auto n = static_cast<double>(h.rows());
    const Eigen::MatrixXd diff = h - codes;
    return {diff.squaredNorm() / n, 2.0 * diff / n};
}

double quant_classification_value(const Eigen::MatrixXd& codes, const Eigen::MatrixXd& targets,
                                  const Eigen::MatrixXd& classifier, double mu, double nu) {
    if (classifier.rows() != codes.rows() || classifier.cols() != targets.rows() ||
        codes.cols() != targets.cols()) {
        throw ShapeError("classification objective: need B K x N, Y C x N, W_h K x C");
    }
    return mu * (targets - classifier.transpose() * codes).squaredNorm() +
           nu * classifier.squaredNorm();
}

Eigen::MatrixXd one_hot(const std::vector<std::uint32_t>& labels, std::uint32_t classes) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) throw ShapeError("one_hot: label out of range");
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

LossBundle combine_losses(double triplet, double identity, double coupling, double lambda,
                          double sigma, double eta) {
    LossBundle b;
    b.triplet = triplet;
    b.identity = identity;
    b.quant_coupling = coupling;
    b.lambda = lambda;
    b.sigma = sigma;
    b.eta = eta;
    b.total = lambda * triplet + sigma * identity + eta * coupling;
    return b;
}

}  // namespace dvhn
