#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dvhn/dataset.hpp"
#include "dvhn/model.hpp"

namespace dvhn {

/// K-bit codes for N items, packed item-major into 64-bit words.
///
/// Bit j of an item is 1 iff its code is +1 at position j; it lives in word
/// j / 64 at bit position j % 64. Bits past K-1 in the last word are zero.
struct CodeMatrix {
    std::size_t num_items = 0;
    std::size_t bits = 0;
    std::size_t words_per_item = 0;
    std::vector<std::uint64_t> packed;
    std::vector<std::uint32_t> labels;

    [[nodiscard]] std::span<const std::uint64_t> item(std::size_t i) const {
        return {packed.data() + i * words_per_item, words_per_item};
    }
    [[nodiscard]] std::size_t bytes_per_item() const { return 8 * words_per_item; }

    /// Throws ValidationError if the layout or the trailing-zero rule is broken.
    void validate() const;

    friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;
};

constexpr std::size_t words_for_bits(std::size_t bits) { return (bits + 63) / 64; }

/// `codes` is N x K with entries in {-1, +1}.
CodeMatrix pack_codes(const Eigen::MatrixXd& codes, std::vector<std::uint32_t> labels);
/// Inverse of pack_codes: N x K matrix of -1/+1.
Eigen::MatrixXd unpack_codes(const CodeMatrix& codes);

/// popcount(a XOR b) summed over words.
inline std::uint32_t hamming_distance(std::span<const std::uint64_t> a,
                                      std::span<const std::uint64_t> b) {
    std::uint32_t d = 0;
    for (std::size_t w = 0; w < a.size(); ++w) {
        d += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
    }
    return d;
}

struct DistanceDot {
    std::uint32_t hamming = 0;
    std::int64_t dot = 0;
};

/// Hamming distance (through the packed popcount path) and inner product of
/// two -1/+1 vectors. They always satisfy hamming == (K - dot) / 2.
DistanceDot distance_inner_product_check(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct RankedList {
    std::size_t query_index = 0;
    std::vector<std::uint32_t> indices;
    std::vector<double> distances;
};

/// Full-scan Hamming ranking, ascending distance, ties by ascending gallery
/// index. `exclude` drops one gallery index (self-match removal). With `top_k`
/// the result is exactly the first top_k entries of the full ranking.
RankedList rank_gallery(std::span<const std::uint64_t> query, const CodeMatrix& gallery,
                        std::optional<std::size_t> top_k = std::nullopt,
                        std::optional<std::size_t> exclude = std::nullopt);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Euclidean-distance ranking over real vectors with the same tie rule.
RankedList float_rank_gallery(std::span<const double> query, const RowMatrix& gallery,
                              std::optional<std::size_t> top_k = std::nullopt);

/// sign(forward(params, rows).h) packed, labels = raw identity ids.
CodeMatrix encode_set(const ModelParams& params, const EmbeddingSet& set, int threads = 1);

void save_codes(const CodeMatrix& codes, const std::filesystem::path& path);
CodeMatrix load_codes(const std::filesystem::path& path);

}  // namespace dvhn
