#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvhn/hamming.hpp"

// Independent oracles: finite differences, exhaustive enumeration and naive
// per-bit loops. They never call the code paths they are used to check.
namespace dvhn::verify {

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-8);

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step);

enum class LossTerm { triplet, identity, coupling, combined };

const char* to_string(LossTerm term);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t num_checked = 0;
    std::string worst;  // which tensor/entry had max_rel_error
};

struct GradCheckOptions {
    double step = 1e-5;
    double floor = 1e-8;
    /// Test hook: analytic gradients are replaced by g * (1 + fault) + fault * 1e-3.
    double fault = 0.0;
};

/// Draws a random network (dims <= 16, batch <= 8, adapter depth 0..2) and
/// batch from `seed`, resampling until no rectifier input, hinge term or
/// hardest-positive/negative choice sits within 1e-3 of a kink, then compares
/// backward() with central differences of the chosen loss for every parameter.
GradCheckResult network_gradient_check(LossTerm term, std::uint64_t seed,
                                       const GradCheckOptions& options = {});

/// Same comparison at the loss inputs (h or logits) instead of the parameters.
GradCheckResult loss_input_gradient_check(LossTerm term, std::uint64_t seed,
                                          const GradCheckOptions& options = {});

/// Lowest objective ||W^T B||^2 - 2 tr(P^T B) reachable by changing only row k
/// of B, by enumerating all 2^N sign patterns. N must be <= 20.
double best_row_objective(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& target,
                          const Eigen::MatrixXd& codes, Eigen::Index row);

/// Checks a single sweep from `before` to `after` row by row: the state right
/// after row k was written (rows < k from `after`, the rest from `before`) must
/// not be beaten by any other sign pattern for row k. Returns the first
/// offending row, or -1.
Eigen::Index first_suboptimal_row_update(const Eigen::MatrixXd& classifier,
                                         const Eigen::MatrixXd& target,
                                         const Eigen::MatrixXd& before,
                                         const Eigen::MatrixXd& after, double tol);

/// Rows of `codes` that some other sign pattern strictly improves (others
/// fixed), by enumeration. Empty at a coordinate-wise optimum.
std::vector<Eigen::Index> suboptimal_rows(const Eigen::MatrixXd& classifier,
                                          const Eigen::MatrixXd& target,
                                          const Eigen::MatrixXd& codes, double tol);

/// Number of positions where two -1/+1 vectors differ, bit by bit.
std::uint32_t naive_hamming(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Ranking by per-bit Hamming distance with a comparison sort on (distance, index).
RankedList naive_rank(const Eigen::VectorXd& query, const Eigen::MatrixXd& gallery_rows);

}  // namespace dvhn::verify
