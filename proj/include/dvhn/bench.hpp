#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace dvhn {

struct BenchConfig {
    std::size_t bits = 2048;
    std::size_t gallery_size = 10000;
    std::size_t query_size = 10;
    std::uint64_t seed = 0;
    int repeats = 3;
    int threads = 1;  // > 1 additionally times a query-parallel Hamming scan
};

struct BenchReport {
    std::size_t bits = 0;
    std::size_t gallery_size = 0;
    std::size_t query_size = 0;
    int repeats = 0;
    double hamming_total_seconds = 0.0;    // median over repeats, all queries
    double euclidean_total_seconds = 0.0;  // median over repeats, all queries
    double speedup_ratio = 0.0;
    int threads = 1;
    double hamming_parallel_seconds = 0.0;  // only when threads > 1
    std::size_t code_bytes_total = 0;
    std::size_t float64_bytes_total = 0;
    double storage_ratio = 0.0;
    bool orderings_match = false;
};

/// Random codes and their -1/+1 float64 embeddings, ranked by full scan in
/// both representations. Orderings are compared for every query.
BenchReport run_bench(const BenchConfig& cfg);

std::string format_bench_text(const BenchReport& report);
std::string format_bench_json(const BenchReport& report);

}  // namespace dvhn
