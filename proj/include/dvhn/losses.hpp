#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dvhn {

struct LossGrad {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // same shape as the differentiated input
};

/// Batch-hard triplet loss on continuous hash vectors (rows of `h`).
///
/// Per anchor: max(0, margin + max_{same label, not self} ||h_a - h_p||
///                            - min_{other label} ||h_a - h_n||), averaged
/// over anchors. Ties pick the lowest row index. Every label in the batch must
/// have at least two rows and there must be at least two labels.
LossGrad batch_hard_triplet(const Eigen::MatrixXd& h, const std::vector<std::uint32_t>& labels,
                            double margin);

/// Mean softmax cross-entropy of `logits` (batch x C) against `labels`.
LossGrad identity_loss(const Eigen::MatrixXd& logits, const std::vector<std::uint32_t>& labels);

/// Mean over rows of ||b_i - h_i||^2, gradient taken with respect to h.
/// `codes` must hold only -1 and +1.
LossGrad quant_coupling(const Eigen::MatrixXd& h, const Eigen::MatrixXd& codes);

/// Label-reconstruction objective of the binary classifier:
///   mu * sum_i ||y_i - W_h^T b_i||^2 + nu * ||W_h||_F^2
/// with `codes` K x N, `targets` C x N one-hot columns and `classifier` K x C.
double quant_classification_value(const Eigen::MatrixXd& codes, const Eigen::MatrixXd& targets,
                                  const Eigen::MatrixXd& classifier, double mu, double nu);

/// N x C one-hot matrix.
Eigen::MatrixXd one_hot(const std::vector<std::uint32_t>& labels, std::uint32_t classes);

struct LossBundle {
    double triplet = 0.0;
    double identity = 0.0;
    double quant_coupling = 0.0;
    double total = 0.0;
    double lambda = 1.0;
    double sigma = 1.0;
    double eta = 0.0;
};

LossBundle combine_losses(double triplet, double identity, double coupling, double lambda,
                          double sigma, double eta);

}  // namespace dvhn
