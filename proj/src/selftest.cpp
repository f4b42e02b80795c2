#include "dvhn/selftest.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "dvhn/hamming.hpp"
#include "dvhn/losses.hpp"
#include "dvhn/metrics.hpp"
#include "dvhn/optimizer.hpp"
#include "dvhn/solver.hpp"
#include "dvhn/verify.hpp"

namespace dvhn {

namespace {

Eigen::MatrixXd random_signs(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = coin(rng) ? 1.0 : -1.0;
    return m;
}

std::vector<std::uint32_t> random_labels(std::size_t n, std::uint32_t classes,
                                         std::mt19937_64& rng) {
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % classes);
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
}

SelftestGroup gradient_group(const SelftestOptions& options) {
    SelftestGroup g{"gradient", true, {}};
    verify::GradCheckOptions gc;
    if (options.inject_fault == "gradient") gc.fault = 1e-2;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        for (auto term : {verify::LossTerm::triplet, verify::LossTerm::identity,
                          verify::LossTerm::coupling, verify::LossTerm::combined}) {
            const auto net = verify::network_gradient_check(term, seed, gc);
            const auto in = verify::loss_input_gradient_check(term, seed, gc);
            worst = std::max({worst, net.max_rel_error, in.max_rel_error});
            if (net.max_rel_error >= 1e-4 || in.max_rel_error >= 1e-4) {
                g.passed = false;
                g.detail = std::string(verify::to_string(term)) + " seed " +
                           std::to_string(seed) + ": " +
                           (net.max_rel_error >= 1e-4 ? net.worst : in.worst);
                return g;
            }
        }
    }
    g.detail = "max relative error " + std::to_string(worst);
    return g;
}

SelftestGroup classifier_group() {
    SelftestGroup g{"classifier", true, {}};
    Eigen::MatrixXd b(2, 2);
    b << 1, 1, -1, 1;  // item codes (1,-1) and (1,1) as columns
    const Eigen::MatrixXd y = Eigen::MatrixXd::Identity(2, 2);
    const auto w = solve_wh(b, y, 1.0, 0.0);
    if (Eigen::MatrixXd(w.transpose() * b) != y) {
        return {"classifier", false, "orthogonal fixture does not reconstruct Y"};
    }
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto codes = random_signs(6, 30, rng);
        const auto y_nc = one_hot(random_labels(30, 4, rng), 4);
        const auto wh = solve_wh(codes, y_nc, 1.0, 0.1);
        const Eigen::MatrixXd grad =
            2.0 * codes * (codes.transpose() * wh - y_nc) + 2.0 * 0.1 * wh;
        if (grad.norm() >= 1e-8 * (1.0 + (codes * y_nc).norm())) {
            return {"classifier", false, "stationarity residual too large"};
        }
    }
    return g;
}

SelftestGroup dcc_group() {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index k = 3;
        const Eigen::Index n = 8;
        const Eigen::Index c = 2;
        Eigen::MatrixXd w(k, c);
        Eigen::MatrixXd h(k, n);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
        for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = normal(rng);
        const auto y = one_hot(random_labels(static_cast<std::size_t>(n), 2, rng), 2);
        const auto b0 = random_signs(k, n, rng);
        std::vector<double> objectives;
        const auto b1 = dcc_update_b(w, y, h, 1.0, 0.5, b0, &objectives);
        for (std::size_t i = 1; i < objectives.size(); ++i) {
            if (objectives[i] > objectives[i - 1] + 1e-9) {
                return {"dcc", false, "objective increased at a row update"};
            }
        }
        const auto p = dcc_target(w, y, h, 1.0, 0.5);
        if (verify::first_suboptimal_row_update(w, p, b0, b1, 1e-9) >= 0) {
            return {"dcc", false, "a row update is not exhaustively optimal"};
        }
    }
    return {"dcc", true, {}};
}

SelftestGroup hamming_group() {
    std::mt19937_64 rng(31);
    for (Eigen::Index k : {1, 63, 64, 65, 256, 2048}) {
        for (int trial = 0; trial < 50; ++trial) {
            const Eigen::VectorXd a = random_signs(k, 1, rng);
            const Eigen::VectorXd b = random_signs(k, 1, rng);
            const auto dd = distance_inner_product_check(a, b);
            if (2 * static_cast<std::int64_t>(dd.hamming) != k - dd.dot ||
                dd.hamming != verify::naive_hamming(a, b)) {
                return {"hamming", false, "distance/inner-product identity failed at K=" +
                                              std::to_string(k)};
            }
        }
    }
    const auto gallery_rows = random_signs(200, 256, rng);
    const Eigen::VectorXd query = random_signs(256, 1, rng);
    const auto gallery = pack_codes(gallery_rows, std::vector<std::uint32_t>(200, 0));
    const auto packed_query = pack_codes(query.transpose(), {0});
    if (rank_gallery(packed_query.item(0), gallery).indices !=
        verify::naive_rank(query, gallery_rows).indices) {
        return {"hamming", false, "packed ranking differs from per-bit oracle"};
    }
    if (unpack_codes(gallery) != gallery_rows) return {"hamming", false, "pack/unpack mismatch"};
    return {"hamming", true, {}};
}

SelftestGroup metrics_group() {
    RankedList r;
    r.indices = {0, 1, 2};
    const auto ap = average_precision(r, 7, {7, 3, 7});
    if (!ap || std::abs(*ap - 5.0 / 6.0) > 1e-12) return {"metrics", false, "AP fixture"};
    RankedList q0;
    q0.indices = {0, 1, 2};
    RankedList q1;
    q1.indices = {0, 1, 2};
    const auto cmc = cmc_curve({q0, q1}, {1, 2}, {1, 0, 2}, 3);
    if (cmc != std::vector<double>{0.5, 0.5, 1.0}) return {"metrics", false, "CMC fixture"};
    return {"metrics", true, {}};
}

SelftestGroup optimizer_group() {
    AmsgradConfig cfg;
    cfg.lr = 0.001;
    cfg.weight_decay = 0.0;
    Amsgrad opt(cfg, 1);
    double p = 0.0;
    const double g = 2.0;
    opt.step(std::span<double>(&p, 1), std::span<const double>(&g, 1));
    if (std::abs(p + 0.001 * 2.0 / (2.0 + 1e-8)) > 1e-15) return {"optimizer", false, "first-step fixture"};
    return {"optimizer", true, {}};
}

}  // namespace

std::vector<SelftestGroup> run_selftest(const SelftestOptions& options) {
    std::vector<SelftestGroup> groups;
    auto guarded = [&groups](const char* name, auto&& fn) {
        try {
            groups.push_back(fn());
        } catch (const std::exception& e) {
            groups.push_back({name, false, e.what()});
        }
    };
    guarded("gradient", [&] { return gradient_group(options); });
    guarded("classifier", classifier_group);
    guarded("dcc", dcc_group);
    guarded("hamming", hamming_group);
    guarded("metrics", metrics_group);
    guarded("optimizer", optimizer_group);
    return groups;
}

}  // namespace dvhn
