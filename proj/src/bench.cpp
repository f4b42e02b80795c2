#include "dvhn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dvhn/errors.hpp"
#include "dvhn/hamming.hpp"

namespace dvhn {

namespace {

CodeMatrix random_codes(std::size_t n, std::size_t bits, std::mt19937_64& rng) {
    CodeMatrix codes;
    codes.num_items = n;
    codes.bits = bits;
    codes.words_per_item = words_for_bits(bits);
    codes.packed.resize(n * codes.words_per_item);
    codes.labels.assign(n, 0);
    const std::uint64_t mask =
        bits % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (bits % 64)) - 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t w = 0; w < codes.words_per_item; ++w) {
            codes.packed[i * codes.words_per_item + w] = rng();
        }
        codes.packed[(i + 1) * codes.words_per_item - 1] &= mask;
    }
    return codes;
}

RowMatrix embed(const CodeMatrix& codes) { return unpack_codes(codes); }

template <typename Fn>
double median_seconds(int repeats, Fn&& fn) {
    fn();  // warm-up
    std::vector<double> times;
    for (int r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2),
                     times.end());
    return std::max(times[times.size() / 2], 1e-9);
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
    if (cfg.bits < 1 || cfg.gallery_size < 1 || cfg.query_size < 1) {
        throw ValidationError("bench: sizes must be >= 1");
    }
    if (cfg.repeats < 3) throw ValidationError("bench: repeats must be >= 3");

    std::mt19937_64 rng(cfg.seed);
    const auto gallery = random_codes(cfg.gallery_size, cfg.bits, rng);
    const auto queries = random_codes(cfg.query_size, cfg.bits, rng);
    const RowMatrix gallery_vecs = embed(gallery);
    const RowMatrix query_vecs = embed(queries);

    BenchReport report;
    report.bits = cfg.bits;
    report.gallery_size = cfg.gallery_size;
    report.query_size = cfg.query_size;
    report.repeats = cfg.repeats;
    report.threads = std::max(1, cfg.threads);
    report.code_bytes_total = cfg.gallery_size * gallery.bytes_per_item();
    report.float64_bytes_total = cfg.gallery_size * cfg.bits * sizeof(double);
    report.storage_ratio = static_cast<double>(report.float64_bytes_total) /
                           static_cast<double>(report.code_bytes_total);

    std::vector<RankedList> hamming_lists(cfg.query_size);
    std::vector<RankedList> float_lists(cfg.query_size);
    auto hamming_scan = [&] {
        for (std::size_t q = 0; q < cfg.query_size; ++q) {
            hamming_lists[q] = rank_gallery(queries.item(q), gallery);
        }
    };
    auto float_scan = [&] {
        for (std::size_t q = 0; q < cfg.query_size; ++q) {
            const auto row = static_cast<Eigen::Index>(q);
            float_lists[q] = float_rank_gallery(
                std::span<const double>(query_vecs.row(row).data(), cfg.bits), gallery_vecs);
        }
    };
    report.hamming_total_seconds = median_seconds(cfg.repeats, hamming_scan);
    report.euclidean_total_seconds = median_seconds(cfg.repeats, float_scan);
    report.speedup_ratio = report.euclidean_total_seconds / report.hamming_total_seconds;

    report.orderings_match = true;
    for (std::size_t q = 0; q < cfg.query_size; ++q) {
        if (hamming_lists[q].indices != float_lists[q].indices) report.orderings_match = false;
    }

    if (report.threads > 1) {
        const auto workers = static_cast<std::size_t>(report.threads);
        std::vector<RankedList> parallel_lists(cfg.query_size);
        report.hamming_parallel_seconds = median_seconds(cfg.repeats, [&] {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < std::min(workers, cfg.query_size); ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t q = w; q < cfg.query_size; q += workers) {
                        parallel_lists[q] = rank_gallery(queries.item(q), gallery);
                    }
                });
            }
        });
        for (std::size_t q = 0; q < cfg.query_size; ++q) {
            if (parallel_lists[q].indices != hamming_lists[q].indices) report.orderings_match = false;
        }
    }
    return report;
}

std::string format_bench_text(const BenchReport& r) {
    std::ostringstream out;
    auto line = [&out](const char* key, auto value) {
        out << key;
        for (std::size_t pad = std::char_traits<char>::length(key); pad < 26; ++pad) out << ' ';
        out << value << '\n';
    };
    line("bits", r.bits);
    line("gallery_size", r.gallery_size);
    line("query_size", r.query_size);
    line("repeats", r.repeats);
    line("hamming_total_seconds", r.hamming_total_seconds);
    line("euclidean_total_seconds", r.euclidean_total_seconds);
    line("speedup_ratio", r.speedup_ratio);
    if (r.threads > 1) {
        line("threads", r.threads);
        line("hamming_parallel_seconds", r.hamming_parallel_seconds);
    }
    line("code_bytes_total", r.code_bytes_total);
    line("float64_bytes_total", r.float64_bytes_total);
    line("storage_ratio", r.storage_ratio);
    line("orderings_match", r.orderings_match ? "yes" : "no");
    return out.str();
}

std::string format_bench_json(const BenchReport& r) {
    nlohmann::json doc;
    doc["K"] = r.bits;
    doc["N_gallery"] = r.gallery_size;
    doc["N_query"] = r.query_size;
    doc["repeats"] = r.repeats;
    doc["hamming_total_seconds"] = r.hamming_total_seconds;
    doc["euclidean_total_seconds"] = r.euclidean_total_seconds;
    doc["speedup_ratio"] = r.speedup_ratio;
    doc["threads"] = r.threads;
    if (r.threads > 1) doc["hamming_parallel_seconds"] = r.hamming_parallel_seconds;
    doc["code_bytes_total"] = r.code_bytes_total;
    doc["float64_bytes_total"] = r.float64_bytes_total;
    doc["storage_ratio"] = r.storage_ratio;
    doc["orderings_match"] = r.orderings_match;
    return doc.dump();
}

}  // namespace dvhn
