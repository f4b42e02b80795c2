// One PASS/FAIL line per acceptance criterion. Exit status 1 if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dvhn/bench.hpp"
#include "dvhn/cli.hpp"
#include "dvhn/hamming.hpp"
#include "dvhn/losses.hpp"
#include "dvhn/metrics.hpp"
#include "dvhn/solver.hpp"
#include "dvhn/verify.hpp"
#include "support.hpp"

using namespace dvhn;
using dvhn::testing::random_normal;
using dvhn::testing::random_signs;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<std::uint32_t> balanced_labels(std::size_t n, std::uint32_t classes, std::mt19937_64& rng) {
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint32_t>(i % classes);
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
}

Outcome gradient_correctness() {
    const auto start = Clock::now();
    double worst = 0.0;
    std::string where;
    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        for (auto term : {verify::LossTerm::triplet, verify::LossTerm::identity,
                          verify::LossTerm::coupling}) {
            for (const auto& r : {verify::network_gradient_check(term, seed),
                                  verify::loss_input_gradient_check(term, seed)}) {
                checked += r.num_checked;
                if (r.max_rel_error > worst) {
                    worst = r.max_rel_error;
                    where = std::string(verify::to_string(term)) + " seed " + std::to_string(seed) +
                            " " + r.worst;
                }
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 10.0,
            fmt("50 configs x 3 terms, %zu entries, max rel error %.3g (%s), %.2f s", checked,
                worst, where.c_str(), elapsed)};
}

Outcome closed_form_classifier() {
    Eigen::MatrixXd b(2, 2);
    b << 1, 1, -1, 1;
    const Eigen::MatrixXd y = Eigen::MatrixXd::Identity(2, 2);
    const Eigen::MatrixXd recon = solve_wh(b, y, 1.0, 0.0).transpose() * b;
    const bool exact = recon == y;

    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> kdist(1, 24);
    std::uniform_int_distribution<int> cdist(2, 10);
    std::uniform_real_distribution<double> log_scale(-2.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = kdist(rng);
        const int c = cdist(rng);
        const int n = c + kdist(rng) * 4;
        const double mu = std::pow(10.0, log_scale(rng));
        const double nu = std::pow(10.0, log_scale(rng));
        const auto codes = random_signs(k, n, rng);
        const auto y_nc = one_hot(balanced_labels(static_cast<std::size_t>(n), static_cast<std::uint32_t>(c), rng),
                                  static_cast<std::uint32_t>(c));
        const auto w = solve_wh(codes, y_nc, mu, nu);
        const Eigen::MatrixXd grad = 2.0 * mu * codes * (codes.transpose() * w - y_nc) + 2.0 * nu * w;
        worst = std::max(worst, grad.norm() / (2.0 * mu * (codes * y_nc).norm()));
    }
    return {exact && worst < 1e-8,
            fmt("orthogonal fixture %s; 100 instances, max relative gradient norm %.3g",
                exact ? "exact" : "NOT exact", worst)};
}

// Literal reading: after one sweep, no row of B can be strictly improved with
// the other rows held at their post-sweep values.
Outcome dcc_rows() {
    const auto start = Clock::now();
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> kdist(2, 6);
    std::uniform_int_distribution<int> ndist(2, 10);
    std::uniform_int_distribution<int> cdist(2, 3);
    int monotone = 0;
    int per_update = 0;
    int post_sweep = 0;
    int fixed_point = 0;
    const int instances = 50;
    for (int trial = 0; trial < instances; ++trial) {
        const int k = kdist(rng);
        const int n = ndist(rng);
        const int c = std::min(cdist(rng), n);
        const auto w = random_normal(k, c, rng, 1.0);
        const auto h = random_normal(k, n, rng, 1.0);
        const auto y = one_hot(balanced_labels(static_cast<std::size_t>(n), static_cast<std::uint32_t>(c), rng),
                               static_cast<std::uint32_t>(c));
        const double mu = 1.0;
        const double eta = 0.5;
        const auto b0 = random_signs(k, n, rng);
        const auto p = dcc_target(w, y, h, mu, eta);

        std::vector<double> objectives;
        const auto b1 = dcc_update_b(w, y, h, mu, eta, b0, &objectives);
        bool mono = true;
        for (std::size_t i = 1; i < objectives.size(); ++i) {
            const double scale = 1.0 + std::abs(objectives[i - 1]);
            if (objectives[i] > objectives[i - 1] + 1e-12 * scale) mono = false;
        }
        monotone += mono;
        per_update += verify::first_suboptimal_row_update(w, p, b0, b1, 1e-9) < 0;
        post_sweep += verify::suboptimal_rows(w, p, b1, 1e-9).empty();

        auto b = b1;
        for (int sweep = 0; sweep < 1000; ++sweep) {
            auto next = dcc_update_b(w, y, h, mu, eta, b);
            if (next == b) break;
            b = std::move(next);
        }
        fixed_point += verify::suboptimal_rows(w, p, b, 1e-9).empty();
    }
    const double elapsed = seconds_since(start);
    return {monotone == instances && post_sweep == instances && elapsed < 30.0,
            fmt("%d instances N<=10: monotone %d, post-sweep rows optimal %d, each row optimal "
                "when written %d, optimal at sweep fixed point %d, %.2f s",
                instances, monotone, post_sweep, per_update, fixed_point, elapsed)};
}

Outcome hamming_identity() {
    std::mt19937_64 rng(303);
    std::size_t mismatches = 0;
    for (Eigen::Index k : {1, 63, 64, 65, 256, 2048}) {
        const auto a = random_signs(1000, k, rng);
        const auto b = random_signs(1000, k, rng);
        const auto pa = pack_codes(a, std::vector<std::uint32_t>(1000, 0));
        const auto pb = pack_codes(b, std::vector<std::uint32_t>(1000, 0));
        for (std::size_t i = 0; i < 1000; ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double dot = a.row(r).dot(b.row(r));
            const double d = hamming_distance(pa.item(i), pb.item(i));
            if (d != (static_cast<double>(k) - dot) / 2.0) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("6 widths x 1000 pairs, %zu mismatches", mismatches)};
}

Outcome storage_claim() {
    BenchConfig cfg;
    cfg.bits = 2048;
    cfg.gallery_size = 16;
    cfg.query_size = 1;
    const auto r = run_bench(cfg);
    const auto code = r.code_bytes_total / r.gallery_size;
    const auto real = r.float64_bytes_total / r.gallery_size;
    return {code == 256 && real == 16384 && r.storage_ratio == 64.0,
            fmt("K=2048: %zu code bytes vs %zu float64 bytes per item, ratio %g", code, real,
                r.storage_ratio)};
}

Outcome retrieval_oracle() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> ndist(1, 5000);
    std::uniform_int_distribution<int> kdist(1, 256);
    int agree = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = trial == 0 ? 5000 : ndist(rng);
        const int k = trial == 0 ? 256 : kdist(rng);
        const auto g = random_signs(n, k, rng);
        const auto gallery = pack_codes(g, std::vector<std::uint32_t>(static_cast<std::size_t>(n), 0));
        const RowMatrix g_rows = g;
        bool ok = true;
        for (int q = 0; q < 3 && ok; ++q) {
            const Eigen::VectorXd qc = random_signs(1, k, rng).row(0).transpose();
            const auto packed = pack_codes(qc.transpose(), {0});
            const auto scan = rank_gallery(packed.item(0), gallery);
            const auto naive = verify::naive_rank(qc, g);
            const auto euclid = float_rank_gallery(std::span<const double>(qc.data(), qc.size()), g_rows);
            ok = scan.indices == naive.indices && scan.distances == naive.distances &&
                 scan.indices == euclid.indices;
        }
        agree += ok;
    }
    return {agree == 20, fmt("%d/20 instances agree with the per-bit and float-Euclidean rankings", agree)};
}

Outcome metric_fixtures() {
    RankedList r;
    r.indices = {0, 1, 2};
    const double ap = average_precision(r, 1, {1, 0, 1}).value_or(-1.0);
    const bool ap_ok = std::abs(ap - 5.0 / 6.0) < 1e-12;
    const auto cmc = cmc_curve({r, r}, {1, 2}, {1, 0, 2}, 3);
    const bool cmc_ok = cmc == std::vector<double>{0.5, 0.5, 1.0};

    const std::size_t n = 50;
    const int trials = 10000;
    std::mt19937_64 rng(505);
    std::vector<std::uint32_t> labels(n, 0);
    labels[0] = 1;
    RankedList shuffled;
    shuffled.indices.resize(n);
    std::iota(shuffled.indices.begin(), shuffled.indices.end(), 0U);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::shuffle(shuffled.indices.begin(), shuffled.indices.end(), rng);
        const double v = *average_precision(shuffled, 1, labels);
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / trials;
    const double se = std::sqrt((sum_sq / trials - mean * mean) / (trials - 1));
    double harmonic = 0.0;
    for (std::size_t i = 1; i <= n; ++i) harmonic += 1.0 / static_cast<double>(i);
    const double expected = harmonic / static_cast<double>(n);
    const bool random_ok = std::abs(mean - expected) < 3.0 * se;
    return {ap_ok && cmc_ok && random_ok,
            fmt("AP %.6f, CMC (%g, %g, %g), random mAP %.5f vs H_N/N %.5f (%.2f SE)", ap, cmc[0],
                cmc[1], cmc[2], mean, expected, std::abs(mean - expected) / se)};
}

// Expected AP of a uniformly random ranking of n items with r relevant ones.
double random_ranking_ap(std::size_t n, std::size_t r) {
    double harmonic = 0.0;
    for (std::size_t i = 1; i <= n; ++i) harmonic += 1.0 / static_cast<double>(i);
    const double nd = static_cast<double>(n);
    if (n == 1) return 1.0;
    return harmonic / nd + (static_cast<double>(r) - 1.0) * (nd - harmonic) / (nd * (nd - 1.0));
}

TrainConfig smoke_config() {
    TrainConfig cfg;
    cfg.bits_K = 16;
    cfg.outer_iters_T = 10;
    cfg.seed = 7;
    cfg.threads = 1;
    return cfg;
}

struct Smoke {
    TrainResult result;
    double seconds = 0.0;
};

Smoke run_smoke() {
    const auto start = Clock::now();
    Smoke s;
    s.result = train(generate_synthetic(32, 20, 64, 0.15, 7), smoke_config());
    s.seconds = seconds_since(start);
    return s;
}

Outcome smoke_monotone(const Smoke& smoke) {
    int violations = 0;
    std::string first;
    auto note = [&](int t, const char* step, double from, double to) {
        if (to <= from) return;
        if (violations++ == 0) first = fmt("t=%d %s step %.6f -> %.6f", t, step, from, to);
    };
    double previous = smoke.result.history.empty() ? 0.0 : smoke.result.history.front().recon_before_wh;
    int discrete_up = 0;
    for (const auto& h : smoke.result.history) {
        note(h.t, "carry", previous, h.recon_before_wh);
        note(h.t, "W_h", h.recon_before_wh, h.recon_after_wh);
        note(h.t, "B", h.recon_after_wh, h.recon_after_b);
        previous = h.recon_after_b;
        discrete_up += h.discrete_after > h.discrete_before;
    }
    std::string detail = fmt("%d increases over %zu iterations", violations, smoke.result.history.size());
    if (violations > 0) detail += ", first " + first;
    detail += fmt("; B-step objective including the eta coupling increased %d times", discrete_up);
    return {violations == 0, detail};
}

Outcome smoke_retrieval(const Smoke& smoke) {
    const auto splits = generate_synthetic_splits(32, 20, 2, 8, 64, 0.15, 7);
    auto cfg = smoke_config();
    cfg.outer_iters_T = 0;
    const auto untrained = train(splits.train, cfg);

    auto map_of = [&](const ModelParams& params) {
        return evaluate(encode_set(params, splits.query), encode_set(params, splits.gallery)).map;
    };
    const double trained_map = map_of(smoke.result.params);
    const double untrained_map = map_of(untrained.params);

    double baseline = 0.0;
    for (std::size_t i = 0; i < splits.query.size(); ++i) {
        std::size_t relevant = 0;
        for (std::size_t j = 0; j < splits.gallery.size(); ++j) {
            relevant += splits.gallery.raw_label(j) == splits.query.raw_label(i);
        }
        baseline += random_ranking_ap(splits.gallery.size(), relevant);
    }
    baseline /= static_cast<double>(splits.query.size());
    return {trained_map > untrained_map && trained_map > 5.0 * baseline,
            fmt("held-out mAP trained %.4f, untrained %.4f, random baseline %.4f (5x = %.4f)",
                trained_map, untrained_map, baseline, 5.0 * baseline)};
}

Outcome smoke_runtime(const Smoke& smoke) {
    return {smoke.seconds < 120.0, fmt("%.2f s single-threaded", smoke.seconds)};
}

Outcome determinism() {
    dvhn::testing::TempDir dir;
    save_embeddings(generate_synthetic(32, 20, 64, 0.15, 7), dir / "train.emb");
    for (const char* tag : {"a", "b"}) {
        std::ostringstream out;
        std::ostringstream err;
        const int status = run_cli({"dvhn", "train", "--input", (dir / "train.emb").string(), "--bits", "16",
                                    "--outer-iters", "10", "--seed", "7", "--quiet", "--out",
                                    (dir / (std::string(tag) + ".dvhm")).string(), "--history",
                                    (dir / (std::string(tag) + ".hist")).string()},
                                   out, err);
        if (status != 0) return {false, "train exited with " + std::to_string(status) + ": " + err.str()};
    }
    using dvhn::testing::read_bytes;
    const bool same_model = read_bytes(dir / "a.dvhm") == read_bytes(dir / "b.dvhm");
    const bool same_history = read_bytes(dir / "a.hist") == read_bytes(dir / "b.hist");
    return {same_model && same_history,
            fmt("checkpoints %s, histories %s", same_model ? "identical" : "differ",
                same_history ? "identical" : "differ")};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&failures](const char* name, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.passed;
        std::printf("%s %s: %s\n", o.passed ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    };

    report("gradient correctness", gradient_correctness);
    report("closed-form classifier", closed_form_classifier);
    report("discrete code rows", dcc_rows);
    report("hamming identity", hamming_identity);
    report("storage", storage_claim);
    report("retrieval oracle", retrieval_oracle);
    report("metric fixtures", metric_fixtures);

    Smoke smoke;
    bool smoke_ran = true;
    try {
        smoke = run_smoke();
    } catch (const std::exception& e) {
        smoke_ran = false;
        report("smoke", [&] { return Outcome{false, e.what()}; });
    }
    if (smoke_ran) {
        report("smoke objective non-increasing", [&] { return smoke_monotone(smoke); });
        report("smoke held-out retrieval", [&] { return smoke_retrieval(smoke); });
        report("smoke runtime", [&] { return smoke_runtime(smoke); });
    }
    report("determinism", determinism);

    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
