#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvhn/hamming.hpp"

namespace dvhn {

struct EvalReport {
    std::vector<double> cmc;  // cmc[r-1] = fraction matched within rank r
    double map = 0.0;
    std::size_t num_queries = 0;
    std::size_t num_queries_skipped = 0;  // queries with no relevant gallery item
};

/// (1/R) * sum over relevant positions p of precision@p. Returns nullopt when
/// the gallery holds no item with the query's label (the query is skipped).
std::optional<double> average_precision(const RankedList& ranking, std::uint32_t query_label,
                                        const std::vector<std::uint32_t>& gallery_labels);

/// Entry r-1 is the fraction of non-skipped queries whose first correct match
/// sits at rank <= r.
std::vector<double> cmc_curve(const std::vector<RankedList>& rankings,
                              const std::vector<std::uint32_t>& query_labels,
                              const std::vector<std::uint32_t>& gallery_labels,
                              std::size_t max_rank);

struct EvalOptions {
    std::size_t max_rank = 20;
    /// Query i and gallery item i are the same item; drop it from query i's ranking.
    bool exclude_self = false;
    int threads = 1;
};

EvalReport evaluate(const CodeMatrix& queries, const CodeMatrix& gallery,
                    const EvalOptions& options = {});

std::string format_report_text(const EvalReport& report);
std::string format_report_json(const EvalReport& report);

}  // namespace dvhn
