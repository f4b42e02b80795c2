#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dvhn/dataset.hpp"
#include "dvhn/losses.hpp"
#include "dvhn/model.hpp"

namespace dvhn {

/// Every hyperparameter of the alternating optimization. Field names double as
/// config-file keys.
struct TrainConfig {
    int bits_K = 64;
    double margin_alpha = 0.3;
    double lr = 3e-4;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double lambda = 1.0;
    double sigma = 1.0;
    double mu = 1.0;
    double nu = 0.1;
    double eta = 0.1;
    int P = 16;
    int K1 = 6;
    int inner_iters = 100;
    int outer_iters_T = 50;
    std::uint64_t seed = 0;
    int adapter_depth = 1;
    int adapter_width = 0;  // 0 means "same as the input dimension"
    int dcc_sweeps = 1;
    double convergence_tol = 1e-5;
    int convergence_window = 3;
    int threads = 1;  // parallelism of full-set forward passes only

    void validate() const;
};

/// Sets one field by its config key. Throws ValidationError for unknown keys
/// or unparsable values.
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` text; `#` starts a comment.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& cfg);
std::vector<std::string> config_keys();

/// Classifier that exactly minimizes the label-reconstruction objective for
/// fixed codes:  W_h = (B B^T + (nu/mu) I)^-1 B Y,  B K x N, Y N x C one-hot.
/// Uses an LDL^T solve; throws SingularityError when B B^T is singular and
/// nu == 0.
Eigen::MatrixXd solve_wh(const Eigen::MatrixXd& codes, const Eigen::MatrixXd& targets_nc,
                         double mu, double nu);

/// P = W_h Y^T + (eta/mu) H, the linear target of the code update (K x N).
Eigen::MatrixXd dcc_target(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& targets_nc,
                           const Eigen::MatrixXd& hash_kn, double mu, double eta);

/// ||W_h^T B||_F^2 - 2 tr(P^T B).
double dcc_objective(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& target,
                     const Eigen::MatrixXd& codes);

/// One sweep of discrete cyclic coordinate descent over the rows of B. Each
/// row is replaced by its exact minimizer of `dcc_objective` with the other
/// rows fixed (sign(0) = +1). When `row_objectives` is given it receives the
/// objective before the sweep followed by the value after every row update.
Eigen::MatrixXd dcc_update_b(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& targets_nc,
                             const Eigen::MatrixXd& hash_kn, double mu, double eta,
                             const Eigen::MatrixXd& codes,
                             std::vector<double>* row_objectives = nullptr);

struct HistoryEntry {
    int t = 0;
    LossBundle losses;  // means over the inner SGD iterations
    double recon_before_wh = 0.0;
    double recon_after_wh = 0.0;
    double recon_after_b = 0.0;
    // Discrete subproblem objective mu*||Y - W_h^T B||^2 + nu*||W_h||^2 + eta*||B - H||^2.
    double discrete_before = 0.0;
    double discrete_after = 0.0;
};

struct TrainResult {
    ModelParams params;
    Eigen::MatrixXd classifier;  // W_h, K x C
    Eigen::MatrixXd codes;       // B, K x N over the training set
    std::vector<HistoryEntry> history;
    bool converged = false;
};

using TrainProgress = std::function<void(const HistoryEntry&)>;

/// Alternating optimization: per outer iteration, `inner_iters` AMSGrad steps
/// on lambda*triplet + sigma*identity + eta*coupling with B frozen, then a full
/// forward pass for H, the closed-form W_h update and `dcc_sweeps` sweeps over B.
TrainResult train(const EmbeddingSet& dataset, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

}  // namespace dvhn
