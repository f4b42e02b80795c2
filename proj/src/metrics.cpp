#include "dvhn/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "dvhn/errors.hpp"

namespace dvhn {

namespace {

struct QueryOutcome {
    std::optional<double> ap;
    std::size_t first_match = 0;  // 1-based; 0 when skipped
};

QueryOutcome score_query(const RankedList& ranking, std::uint32_t query_label,
                         const std::vector<std::uint32_t>& gallery_labels) {
    QueryOutcome out;
    out.ap = average_precision(ranking, query_label, gallery_labels);
    if (!out.ap) return out;
    for (std::size_t p = 0; p < ranking.indices.size(); ++p) {
        if (gallery_labels[ranking.indices[p]] == query_label) {
            out.first_match = p + 1;
            break;
        }
    }
    return out;
}

}  // namespace

std::optional<double> average_precision(const RankedList& ranking, std::uint32_t query_label,
                                        const std::vector<std::uint32_t>& gallery_labels) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t p = 0; p < ranking.indices.size(); ++p) {
        const auto idx = ranking.indices[p];
        if (idx >= gallery_labels.size()) throw ShapeError("ranking index outside the gallery");
        if (gallery_labels[idx] == query_label) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(p + 1);
        }
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

std::vector<double> cmc_curve(const std::vector<RankedList>& rankings,
                              const std::vector<std::uint32_t>& query_labels,
                              const std::vector<std::uint32_t>& gallery_labels,
                              std::size_t max_rank) {
    if (max_rank < 1) throw ValidationError("cmc_curve: max_rank must be >= 1");
    if (rankings.size() != query_labels.size()) {
        throw ShapeError("cmc_curve: one ranking per query label is required");
    }
    std::vector<double> hits(max_rank, 0.0);
    std::size_t scored = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        const auto& ranking = rankings[q];
        std::optional<std::size_t> first;
        for (std::size_t p = 0; p < ranking.indices.size(); ++p) {
            if (gallery_labels.at(ranking.indices[p]) == query_labels[q]) {
                first = p;
                break;
            }
        }
        if (!first) continue;
        ++scored;
        if (*first < max_rank) hits[*first] += 1.0;
    }
    std::vector<double> cmc(max_rank, 0.0);
    if (scored == 0) return cmc;
    double running = 0.0;
    for (std::size_t r = 0; r < max_rank; ++r) {
        running += hits[r];
        cmc[r] = running / static_cast<double>(scored);
    }
    return cmc;
}

EvalReport evaluate(const CodeMatrix& queries, const CodeMatrix& gallery,
                    const EvalOptions& options) {
    if (queries.num_items == 0) throw ValidationError("evaluate: no queries");
    if (gallery.num_items == 0) throw ValidationError("evaluate: empty gallery");
    if (queries.bits != gallery.bits) {
        throw ShapeError("evaluate: query K=" + std::to_string(queries.bits) +
                         " differs from gallery K=" + std::to_string(gallery.bits));
    }
    if (options.max_rank < 1) throw ValidationError("evaluate: max_rank must be >= 1");
    if (options.exclude_self && queries.num_items != gallery.num_items) {
        throw ValidationError("evaluate: self-match exclusion needs query and gallery to be the same set");
    }

    const auto nq = queries.num_items;
    std::vector<QueryOutcome> outcomes(nq);
    auto run = [&](std::size_t q) {
        const auto ranking = rank_gallery(queries.item(q), gallery, std::nullopt,
                                          options.exclude_self ? std::optional(q) : std::nullopt);
        outcomes[q] = score_query(ranking, queries.labels[q], gallery.labels);
    };
    const auto workers = static_cast<std::size_t>(std::max(1, options.threads));
    if (workers == 1 || nq < 2) {
        for (std::size_t q = 0; q < nq; ++q) run(q);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, nq); ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t q = w; q < nq; q += workers) run(q);
            });
        }
    }

    EvalReport report;
    report.num_queries = nq;
    report.cmc.assign(options.max_rank, 0.0);
    std::vector<double> hits(options.max_rank, 0.0);
    double ap_sum = 0.0;
    std::size_t scored = 0;
    for (const auto& o : outcomes) {
        if (!o.ap) {
            ++report.num_queries_skipped;
            continue;
        }
        ++scored;
        ap_sum += *o.ap;
        if (o.first_match <= options.max_rank) hits[o.first_match - 1] += 1.0;
    }
    if (scored > 0) {
        report.map = ap_sum / static_cast<double>(scored);
        double running = 0.0;
        for (std::size_t r = 0; r < options.max_rank; ++r) {
            running += hits[r];
            report.cmc[r] = running / static_cast<double>(scored);
        }
    }
    return report;
}

std::string format_report_text(const EvalReport& report) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    for (std::size_t r = 0; r < report.cmc.size(); ++r) {
        out << "rank_" << (r + 1) << " = " << report.cmc[r] << '\n';
    }
    out << "map = " << report.map << '\n';
    out << "num_queries = " << report.num_queries << '\n';
    out << "skipped = " << report.num_queries_skipped << '\n';
    return out.str();
}

std::string format_report_json(const EvalReport& report) {
    nlohmann::json doc;
    doc["cmc"] = report.cmc;
    doc["map"] = report.map;
    doc["num_queries"] = report.num_queries;
    doc["skipped"] = report.num_queries_skipped;
    return doc.dump();
}

}  // namespace dvhn
