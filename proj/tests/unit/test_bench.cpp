#include <doctest.h>

#include "json.hpp"

#include "dvhn/bench.hpp"
#include "dvhn/errors.hpp"

using namespace dvhn;

TEST_CASE("storage accounting") {
    for (std::size_t k : {1, 63, 64, 65, 256, 2048}) {
        BenchConfig cfg;
        cfg.bits = k;
        cfg.gallery_size = 3;
        cfg.query_size = 1;
        const auto r = run_bench(cfg);
        CHECK(r.code_bytes_total == 3 * 8 * ((k + 63) / 64));
        CHECK(r.float64_bytes_total == 3 * 8 * k);
    }
    BenchConfig cfg;
    cfg.gallery_size = 4;
    cfg.query_size = 1;
    const auto r = run_bench(cfg);
    CHECK(r.code_bytes_total / r.gallery_size == 256);
    CHECK(r.float64_bytes_total / r.gallery_size == 16384);
    CHECK(r.storage_ratio == 64.0);
}

TEST_CASE("single-item gallery") {
    BenchConfig cfg;
    cfg.bits = 64;
    cfg.gallery_size = 1;
    cfg.query_size = 2;
    const auto r = run_bench(cfg);
    CHECK(r.orderings_match);
    CHECK(r.gallery_size == 1);
    CHECK(r.hamming_total_seconds >= 0.0);
    CHECK(r.euclidean_total_seconds >= 0.0);
    const auto j = nlohmann::json::parse(format_bench_json(r));
    CHECK(j.at("orderings_match").get<bool>());
    CHECK(j.at("storage_ratio").get<double>() == 64.0);
    CHECK(format_bench_text(r).find("speedup_ratio") != std::string::npos);
}

TEST_CASE("full-size scan orderings agree") {
    BenchConfig cfg;
    cfg.bits = 2048;
    cfg.gallery_size = 100000;
    cfg.query_size = 2;
    cfg.threads = 2;
    const auto r = run_bench(cfg);
    CHECK(r.orderings_match);
    CHECK(r.speedup_ratio > 0.0);
    CHECK(r.hamming_parallel_seconds > 0.0);
    MESSAGE("speedup_ratio " << r.speedup_ratio);
}

TEST_CASE("bench preconditions") {
    BenchConfig cfg;
    cfg.repeats = 2;
    CHECK_THROWS_AS(run_bench(cfg), ValidationError);
    cfg = {};
    cfg.gallery_size = 0;
    CHECK_THROWS_AS(run_bench(cfg), ValidationError);
    cfg = {};
    cfg.bits = 0;
    CHECK_THROWS_AS(run_bench(cfg), ValidationError);
}
