#include "dvhn/solver.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "dvhn/errors.hpp"
#include "dvhn/optimizer.hpp"

namespace dvhn {

namespace {

// Below this reciprocal condition number B B^T is treated as singular.
constexpr double kSingularRcond = 1e-12;

void check_codes(const Eigen::MatrixXd& codes) {
    if (!((codes.array() == 1.0) || (codes.array() == -1.0)).all()) {
        throw ValidationError("code matrix must hold only -1 and +1");
    }
}

double discrete_objective(const Eigen::MatrixXd& codes, const Eigen::MatrixXd& targets_cn,
                          const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& hash_kn,
                          const TrainConfig& cfg) {
    return quant_classification_value(codes, targets_cn, classifier, cfg.mu, cfg.nu) +
           cfg.eta * (codes - hash_kn).squaredNorm();
}

}  // namespace

Eigen::MatrixXd solve_wh(const Eigen::MatrixXd& codes, const Eigen::MatrixXd& targets_nc,
                         double mu, double nu) {
    if (!(mu > 0.0)) throw ValidationError("solve_wh: mu must be > 0");
    if (!(nu >= 0.0)) throw ValidationError("solve_wh: nu must be >= 0");
    if (codes.cols() != targets_nc.rows()) {
        throw ShapeError("solve_wh: B is K x N and Y must be N x C");
    }
    const auto k = codes.rows();
    Eigen::MatrixXd system = codes * codes.transpose();
    system.diagonal().array() += nu / mu;
    const Eigen::MatrixXd rhs = codes * targets_nc;
    // LDL^T rather than LL^T: no square roots, so diagonal systems solve exactly.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0 ||
        ldlt.rcond() < kSingularRcond) {
        throw SingularityError("solve_wh: B B^T + (nu/mu) I is singular for K=" +
                               std::to_string(k) + "; use nu > 0");
    }
    return ldlt.solve(rhs);
}

Eigen::MatrixXd dcc_target(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& targets_nc,
                           const Eigen::MatrixXd& hash_kn, double mu, double eta) {
    if (!(mu > 0.0)) throw ValidationError("dcc: mu must be > 0");
    if (classifier.cols() != targets_nc.cols() || hash_kn.rows() != classifier.rows() ||
        hash_kn.cols() != targets_nc.rows()) {
        throw ShapeError("dcc: need W_h K x C, Y N x C, H K x N");
    }
    return classifier * targets_nc.transpose() + (eta / mu) * hash_kn;
}

double dcc_objective(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& target,
                     const Eigen::MatrixXd& codes) {
    return (classifier.transpose() * codes).squaredNorm() - 2.0 * target.cwiseProduct(codes).sum();
}

Eigen::MatrixXd dcc_update_b(const Eigen::MatrixXd& classifier, const Eigen::MatrixXd& targets_nc,
                             const Eigen::MatrixXd& hash_kn, double mu, double eta,
                             const Eigen::MatrixXd& codes, std::vector<double>* row_objectives) {
    const Eigen::MatrixXd target = dcc_target(classifier, targets_nc, hash_kn, mu, eta);
    if (codes.rows() != target.rows() || codes.cols() != target.cols()) {
        throw ShapeError("dcc: B must be K x N");
    }
    check_codes(codes);
    Eigen::MatrixXd b = codes;
    const Eigen::MatrixXd gram = classifier * classifier.transpose();
    if (row_objectives) {
        row_objectives->clear();
        row_objectives->push_back(dcc_objective(classifier, target, b));
    }
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
        // q_k - sum_{l != k} (v_k . v_l) b_l
        Eigen::RowVectorXd arg = target.row(k) - gram.row(k) * b + gram(k, k) * b.row(k);
        b.row(k) = arg.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
        if (row_objectives) row_objectives->push_back(dcc_objective(classifier, target, b));
    }
    return b;
}

TrainResult train(const EmbeddingSet& dataset, const TrainConfig& cfg,
                  const TrainProgress& progress) {
    cfg.validate();
    dataset.validate();

    std::mt19937_64 seeder(cfg.seed);
    const auto model_seed = seeder();
    const auto sampler_seed = seeder();
    const auto classifier_seed = seeder();

    ModelDims dims;
    dims.input_dim = static_cast<int>(dataset.dim());
    dims.feature_dim = cfg.adapter_width > 0 ? cfg.adapter_width : dims.input_dim;
    dims.bits = cfg.bits_K;
    dims.classes = static_cast<int>(dataset.num_ids());
    dims.adapter_depth = cfg.adapter_depth;

    TrainResult result;
    result.params = init_params(dims, model_seed);

    const Eigen::MatrixXd rows = dataset.all_rows();
    const Eigen::MatrixXd targets_nc = one_hot(dataset.labels, dataset.num_ids());
    const Eigen::MatrixXd targets_cn = targets_nc.transpose();

    Eigen::MatrixXd hash_kn = forward_hash(result.params, rows, cfg.threads).transpose();
    result.codes = sign_binarize(hash_kn);
    {
        std::mt19937_64 rng(classifier_seed);
        std::normal_distribution<double> normal(0.0, 0.01);
        result.classifier.resize(dims.bits, dims.classes);
        for (Eigen::Index c = 0; c < result.classifier.cols(); ++c) {
            for (Eigen::Index r = 0; r < result.classifier.rows(); ++r) {
                result.classifier(r, c) = normal(rng);
            }
        }
    }

    if (cfg.outer_iters_T == 0) return result;

    AmsgradConfig ocfg;
    ocfg.lr = cfg.lr;
    ocfg.beta1 = cfg.beta1;
    ocfg.beta2 = cfg.beta2;
    ocfg.weight_decay = cfg.weight_decay;
    Amsgrad optim(ocfg, result.params.size());

    SamplerConfig scfg;
    scfg.num_identities = cfg.P;
    scfg.instances_per_identity = cfg.K1;
    scfg.seed = sampler_seed;
    PkSampler sampler(dataset, scfg);

    int calm_streak = 0;
    for (int t = 1; t <= cfg.outer_iters_T; ++t) {
        double sum_triplet = 0.0;
        double sum_identity = 0.0;
        double sum_coupling = 0.0;
        for (int i = 0; i < cfg.inner_iters; ++i) {
            const Batch batch = sampler.next();
            const ForwardTrace trace = forward(result.params, dataset.rows(batch.row_indices));

            Eigen::MatrixXd batch_codes(static_cast<Eigen::Index>(batch.row_indices.size()),
                                        cfg.bits_K);
            for (std::size_t r = 0; r < batch.row_indices.size(); ++r) {
                batch_codes.row(static_cast<Eigen::Index>(r)) =
                    result.codes.col(batch.row_indices[r]).transpose();
            }

            const auto triplet = batch_hard_triplet(trace.hash, batch.labels, cfg.margin_alpha);
            const auto identity = identity_loss(trace.logits, batch.labels);
            const auto coupling = quant_coupling(trace.hash, batch_codes);
            const double total =
                cfg.lambda * triplet.loss + cfg.sigma * identity.loss + cfg.eta * coupling.loss;
            if (!std::isfinite(total)) {
                std::ostringstream msg;
                msg << "non-finite loss at outer iteration " << t << ", step " << i
                    << ": triplet=" << triplet.loss << " identity=" << identity.loss
                    << " coupling=" << coupling.loss;
                throw OptimizerError(msg.str());
            }
            sum_triplet += triplet.loss;
            sum_identity += identity.loss;
            sum_coupling += coupling.loss;

            const Eigen::MatrixXd grad_hash = cfg.lambda * triplet.grad + cfg.eta * coupling.grad;
            const Eigen::MatrixXd grad_logits = cfg.sigma * identity.grad;
            optim.step(result.params, backward(result.params, trace, grad_hash, grad_logits));
        }

        hash_kn = forward_hash(result.params, rows, cfg.threads).transpose();

        HistoryEntry entry;
        entry.t = t;
        const double denom = cfg.inner_iters > 0 ? cfg.inner_iters : 1;
        entry.losses = combine_losses(sum_triplet / denom, sum_identity / denom,
                                      sum_coupling / denom, cfg.lambda, cfg.sigma, cfg.eta);
        entry.recon_before_wh = quant_classification_value(result.codes, targets_cn,
                                                         result.classifier, cfg.mu, cfg.nu);
        entry.discrete_before =
            discrete_objective(result.codes, targets_cn, result.classifier, hash_kn, cfg);

        result.classifier = solve_wh(result.codes, targets_nc, cfg.mu, cfg.nu);
        entry.recon_after_wh = quant_classification_value(result.codes, targets_cn,
                                                        result.classifier, cfg.mu, cfg.nu);

        for (int s = 0; s < cfg.dcc_sweeps; ++s) {
            result.codes = dcc_update_b(result.classifier, targets_nc, hash_kn, cfg.mu, cfg.eta,
                                        result.codes);
        }
        entry.recon_after_b = quant_classification_value(result.codes, targets_cn,
                                                       result.classifier, cfg.mu, cfg.nu);
        entry.discrete_after =
            discrete_objective(result.codes, targets_cn, result.classifier, hash_kn, cfg);

        if (!result.history.empty()) {
            const double prev = result.history.back().losses.total;
            const double change = std::abs(entry.losses.total - prev) /
                                  std::max(std::abs(prev), std::numeric_limits<double>::min());
            calm_streak = change < cfg.convergence_tol ? calm_streak + 1 : 0;
        }
        result.history.push_back(entry);
        if (progress) progress(entry);
        if (calm_streak >= cfg.convergence_window) {
            result.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace dvhn
