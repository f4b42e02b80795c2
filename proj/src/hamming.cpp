#include "dvhn/hamming.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dvhn/detail/binary_io.hpp"
#include "dvhn/errors.hpp"

namespace dvhn {

namespace {

constexpr std::uint32_t kCodeVersion = 1;

std::uint64_t tail_mask(std::size_t bits) {
    const auto rem = bits % 64;
    return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

void emit_top(RankedList& out, std::size_t top_k) {
    if (out.indices.size() > top_k) {
        out.indices.resize(top_k);
        out.distances.resize(top_k);
    }
}

}  // namespace

void CodeMatrix::validate() const {
    if (bits == 0) throw ValidationError("code matrix has K = 0");
    if (words_per_item != words_for_bits(bits)) {
        throw ValidationError("code matrix words_per_item does not match K");
    }
    if (packed.size() != num_items * words_per_item || labels.size() != num_items) {
        throw ValidationError("code matrix storage does not match N");
    }
    const auto mask = tail_mask(bits);
    for (std::size_t i = 0; i < num_items; ++i) {
        if ((item(i).back() & ~mask) != 0) {
            throw ValidationError("code item " + std::to_string(i) + " has bits set past K");
        }
    }
}

CodeMatrix pack_codes(const Eigen::MatrixXd& codes, std::vector<std::uint32_t> labels) {
    if (static_cast<std::size_t>(codes.rows()) != labels.size()) {
        throw ShapeError("pack_codes: label count does not match code rows");
    }
    if (codes.cols() < 1) throw ShapeError("pack_codes: K must be >= 1");
    CodeMatrix out;
    out.num_items = static_cast<std::size_t>(codes.rows());
    out.bits = static_cast<std::size_t>(codes.cols());
    out.words_per_item = words_for_bits(out.bits);
    out.packed.assign(out.num_items * out.words_per_item, 0);
    out.labels = std::move(labels);
    for (std::size_t i = 0; i < out.num_items; ++i) {
        auto* words = out.packed.data() + i * out.words_per_item;
        for (std::size_t j = 0; j < out.bits; ++j) {
            const double v = codes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v == 1.0) {
                words[j / 64] |= std::uint64_t{1} << (j % 64);
            } else if (v != -1.0) {
                throw ValidationError("pack_codes: entry (" + std::to_string(i) + ", " +
                                      std::to_string(j) + ") is not -1/+1");
            }
        }
    }
    return out;
}

Eigen::MatrixXd unpack_codes(const CodeMatrix& codes) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(codes.num_items),
                        static_cast<Eigen::Index>(codes.bits));
    for (std::size_t i = 0; i < codes.num_items; ++i) {
        const auto words = codes.item(i);
        for (std::size_t j = 0; j < codes.bits; ++j) {
            const bool set = (words[j / 64] >> (j % 64)) & 1U;
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = set ? 1.0 : -1.0;
        }
    }
    return out;
}

DistanceDot distance_inner_product_check(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() == 0) {
        throw ShapeError("distance_inner_product_check: vectors must share a positive length");
    }
    Eigen::MatrixXd both(2, a.size());
    both.row(0) = a.transpose();
    both.row(1) = b.transpose();
    const auto packed = pack_codes(both, {0, 0});
    DistanceDot out;
    out.hamming = hamming_distance(packed.item(0), packed.item(1));
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        out.dot += static_cast<std::int64_t>(a[j]) * static_cast<std::int64_t>(b[j]);
    }
    return out;
}

RankedList rank_gallery(std::span<const std::uint64_t> query, const CodeMatrix& gallery,
                        std::optional<std::size_t> top_k, std::optional<std::size_t> exclude) {
    if (gallery.num_items == 0) throw ValidationError("rank_gallery: empty gallery");
    if (query.size() != gallery.words_per_item) {
        throw ShapeError("rank_gallery: query layout does not match gallery");
    }
    const auto n = gallery.num_items;
    std::vector<std::uint32_t> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = hamming_distance(query, gallery.item(i));

    // Counting sort over distances in [0, K]; scanning items in index order
    // makes equal distances come out by ascending index.
    std::vector<std::size_t> start(gallery.bits + 2, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (exclude && *exclude == i) continue;
        ++start[dist[i] + 1];
    }
    std::partial_sum(start.begin(), start.end(), start.begin());
    const std::size_t kept = start.back();
    RankedList out;
    out.indices.resize(kept);
    out.distances.resize(kept);
    for (std::size_t i = 0; i < n; ++i) {
        if (exclude && *exclude == i) continue;
        const auto slot = start[dist[i]]++;
        out.indices[slot] = static_cast<std::uint32_t>(i);
        out.distances[slot] = dist[i];
    }
    if (top_k) emit_top(out, *top_k);
    return out;
}

RankedList float_rank_gallery(std::span<const double> query, const RowMatrix& gallery,
                              std::optional<std::size_t> top_k) {
    if (gallery.rows() == 0) throw ValidationError("float_rank_gallery: empty gallery");
    if (static_cast<Eigen::Index>(query.size()) != gallery.cols()) {
        throw ShapeError("float_rank_gallery: query width does not match gallery");
    }
    const auto n = static_cast<std::size_t>(gallery.rows());
    const auto dim = query.size();
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = gallery.data() + i * dim;
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = row[j] - query[j];
            s += d * d;
        }
        sq[i] = s;
    }
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(),
                     [&sq](std::uint32_t a, std::uint32_t b) { return sq[a] < sq[b]; });
    RankedList out;
    out.indices = std::move(order);
    out.distances.resize(n);
    for (std::size_t r = 0; r < n; ++r) out.distances[r] = std::sqrt(sq[out.indices[r]]);
    if (top_k) emit_top(out, *top_k);
    return out;
}

CodeMatrix encode_set(const ModelParams& params, const EmbeddingSet& set, int threads) {
    const Eigen::MatrixXd h = forward_hash(params, set.all_rows(), threads);
    std::vector<std::uint32_t> labels(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) labels[i] = set.raw_label(i);
    return pack_codes(sign_binarize(h), std::move(labels));
}

void save_codes(const CodeMatrix& codes, const std::filesystem::path& path) {
    codes.validate();
    if (codes.num_items == 0) throw ValidationError("refusing to write an empty code file");
    detail::BinaryWriter out(path);
    out.magic("DVHC");
    out.put<std::uint32_t>(kCodeVersion);
    out.put(static_cast<std::uint32_t>(codes.bits));
    out.put(static_cast<std::uint32_t>(codes.num_items));
    out.put_all(std::span<const std::uint64_t>(codes.packed));
    out.put_all(std::span<const std::uint32_t>(codes.labels));
    out.finish();
}

CodeMatrix load_codes(const std::filesystem::path& path) {
    detail::BinaryReader in(path);
    in.expect_magic("DVHC");
    in.expect_version(kCodeVersion);
    CodeMatrix codes;
    codes.bits = in.get<std::uint32_t>();
    codes.num_items = in.get<std::uint32_t>();
    if (codes.bits == 0) throw FormatError("'" + path.string() + "' declares K = 0");
    if (codes.num_items == 0) throw ValidationError("'" + path.string() + "' holds no codes");
    codes.words_per_item = words_for_bits(codes.bits);
    codes.packed.resize(codes.num_items * codes.words_per_item);
    codes.labels.resize(codes.num_items);
    in.get_all(std::span<std::uint64_t>(codes.packed));
    in.get_all(std::span<std::uint32_t>(codes.labels));
    if (!in.at_end()) throw FormatError("'" + path.string() + "' has trailing bytes");
    codes.validate();
    return codes;
}

}  // namespace dvhn
