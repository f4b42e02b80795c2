#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace dvhn {

enum class Split : std::uint8_t { train, query, gallery };

// Row-major so that a single row is contiguous, which keeps the on-disk layout
// and the in-memory layout identical.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A labeled set of precomputed embedding vectors.
///
/// Features are kept at the 32-bit precision they are stored with; callers that
/// do optimization math promote rows to double through `rows()`. Labels are
/// dense (0..num_ids-1) in order of first appearance; `identity_ids` maps each
/// dense label back to the raw identity it was loaded or generated with, which
/// is what makes query and gallery files comparable with each other.
struct EmbeddingSet {
    FeatureMatrix features;
    std::vector<std::uint32_t> labels;
    std::vector<std::uint32_t> identity_ids;
    Split split = Split::train;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
    [[nodiscard]] std::uint32_t num_ids() const {
        return static_cast<std::uint32_t>(identity_ids.size());
    }

    [[nodiscard]] std::uint32_t raw_label(std::size_t row) const {
        return identity_ids[labels[row]];
    }

    /// Selected rows promoted to double, one row per index.
    [[nodiscard]] Eigen::MatrixXd rows(const std::vector<std::uint32_t>& indices) const;
    /// All rows promoted to double.
    [[nodiscard]] Eigen::MatrixXd all_rows() const;

    /// Throws ValidationError if any EmbeddingSet invariant is broken.
    void validate() const;

    friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

/// Builds a set from raw identity labels, relabeling them densely in order of
/// first appearance.
EmbeddingSet make_embedding_set(FeatureMatrix features,
                                const std::vector<std::uint32_t>& raw_labels,
                                Split split = Split::train);

EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// Header-less CSV: each line holds `dim` floats followed by an integer label.
EmbeddingSet load_embeddings_csv(const std::filesystem::path& path);

/// Size in bytes of the fixed EMB1 header.
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;

/// Identities are Gaussian blobs (per-coordinate standard deviation
/// `cluster_spread`) around distinct unit-norm centers. Raw identity ids are
/// 0..num_ids-1. Deterministic given the seed.
EmbeddingSet generate_synthetic(int num_ids, int per_id, int dim, double cluster_spread,
                                std::uint64_t seed);

struct SyntheticSplits {
    EmbeddingSet train;
    EmbeddingSet query;
    EmbeddingSet gallery;
};

/// Same identity centers as `generate_synthetic` with the same seed (the train
/// part is bit-identical to it), plus held-out query and gallery draws from an
/// independent noise stream.
SyntheticSplits generate_synthetic_splits(int num_ids, int train_per_id, int query_per_id,
                                          int gallery_per_id, int dim, double cluster_spread,
                                          std::uint64_t seed);

struct SamplerConfig {
    int num_identities = 16;          // P
    int instances_per_identity = 6;   // K1
    std::uint64_t seed = 0;
};

struct Batch {
    std::vector<std::uint32_t> row_indices;
    std::vector<std::uint32_t> labels;
};

/// One P x K1 batch drawn with the caller's generator. PkSampler is the
/// cached form of this for repeated draws from one set.
Batch sample_pk_batch(const EmbeddingSet& set, const SamplerConfig& cfg, std::mt19937_64& rng);

/// Identity-balanced P x K1 batch sampler.
///
/// Identities are drawn without replacement. Instances are drawn without
/// replacement when an identity has at least K1 rows and with replacement
/// otherwise, so the batch shape is always fixed.
class PkSampler {
public:
    PkSampler(const EmbeddingSet& set, SamplerConfig cfg);

    Batch next();

    [[nodiscard]] const SamplerConfig& config() const { return cfg_; }

private:
    SamplerConfig cfg_;
    std::vector<std::vector<std::uint32_t>> rows_by_label_;
    std::mt19937_64 rng_;
};

}  // namespace dvhn
