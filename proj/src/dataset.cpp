#include "dvhn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>

#include "dvhn/detail/binary_io.hpp"
#include "dvhn/errors.hpp"

namespace dvhn {

namespace {

constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::uint64_t kHeldOutStream = 0x9E3779B97F4A7C15ULL;

Eigen::MatrixXd draw_centers(std::mt19937_64& rng, int num_ids, int dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd centers(num_ids, dim);
    for (int c = 0; c < num_ids; ++c) {
        double norm = 0.0;
        // A zero draw is measure-zero, but retry rather than divide by it.
        while (norm == 0.0) {
            for (int j = 0; j < dim; ++j) centers(c, j) = normal(rng);
            norm = centers.row(c).norm();
        }
        centers.row(c) /= norm;
    }
    return centers;
}

EmbeddingSet draw_around(const Eigen::MatrixXd& centers, int per_id, double spread,
                         std::mt19937_64& rng, Split split) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto num_ids = static_cast<int>(centers.rows());
    const auto dim = static_cast<int>(centers.cols());
    FeatureMatrix features(static_cast<Eigen::Index>(num_ids) * per_id, dim);
    std::vector<std::uint32_t> labels;
    labels.reserve(static_cast<std::size_t>(num_ids) * per_id);
    Eigen::Index row = 0;
    for (int c = 0; c < num_ids; ++c) {
        for (int i = 0; i < per_id; ++i, ++row) {
            for (int j = 0; j < dim; ++j) {
                features(row, j) = static_cast<float>(centers(c, j) + spread * normal(rng));
            }
            labels.push_back(static_cast<std::uint32_t>(c));
        }
    }
    return make_embedding_set(std::move(features), labels, split);
}

void check_synthetic_args(int num_ids, int per_id, int dim, double spread) {
    if (num_ids < 2 || per_id < 2 || dim < 2) {
        throw ValidationError("synthetic sets need num_ids >= 2, per_id >= 2 and dim >= 2");
    }
    if (!(spread > 0.0) || !std::isfinite(spread)) {
        throw ValidationError("cluster_spread must be a positive finite number");
    }
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

Eigen::MatrixXd EmbeddingSet::rows(const std::vector<std::uint32_t>& indices) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), features.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = features.row(indices[i]).cast<double>();
    }
    return out;
}

Eigen::MatrixXd EmbeddingSet::all_rows() const { return features.cast<double>(); }

void EmbeddingSet::validate() const {
    if (labels.empty()) throw ValidationError("embedding set is empty (N = 0)");
    if (features.cols() < 1) throw ValidationError("embedding dimension must be >= 1");
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ValidationError("feature rows (" + std::to_string(features.rows()) +
                              ") do not match label count (" + std::to_string(labels.size()) +
                              ")");
    }
    if (identity_ids.empty()) throw ValidationError("embedding set has no identities");
    if (!features.allFinite()) throw ValidationError("embedding set has non-finite features");
    // Dense labels in order of first appearance.
    std::uint32_t next_new = 0;
    for (auto label : labels) {
        if (label >= identity_ids.size()) {
            throw ValidationError("label " + std::to_string(label) + " is out of range");
        }
        if (label == next_new) {
            ++next_new;
        } else if (label > next_new) {
            throw ValidationError("labels are not dense in order of first appearance");
        }
    }
    if (next_new != identity_ids.size()) {
        throw ValidationError("identity table lists identities that never occur");
    }
    auto sorted = identity_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ValidationError("identity table has duplicate raw ids");
    }
}

EmbeddingSet make_embedding_set(FeatureMatrix features,
                                const std::vector<std::uint32_t>& raw_labels, Split split) {
    EmbeddingSet set;
    set.features = std::move(features);
    set.split = split;
    set.labels.reserve(raw_labels.size());
    std::unordered_map<std::uint32_t, std::uint32_t> dense;
    for (auto raw : raw_labels) {
        auto [it, inserted] =
            dense.try_emplace(raw, static_cast<std::uint32_t>(set.identity_ids.size()));
        if (inserted) set.identity_ids.push_back(raw);
        set.labels.push_back(it->second);
    }
    set.validate();
    return set;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    detail::BinaryReader in(path);
    in.expect_magic("DVHE");
    in.expect_version(kEmbeddingVersion);
    const auto n = in.get<std::uint32_t>();
    const auto m = in.get<std::uint32_t>();
    const auto c = in.get<std::uint32_t>();
    if (n == 0 || m == 0 || c == 0) {
        throw ValidationError("'" + path.string() + "' declares an empty shape (N=" +
                          std::to_string(n) + ", M=" + std::to_string(m) +
                          ", C=" + std::to_string(c) + ")");
    }
    FeatureMatrix features(n, m);
    in.get_all(std::span<float>(features.data(), static_cast<std::size_t>(features.size())));
    std::vector<std::uint32_t> raw(n);
    in.get_all(std::span<std::uint32_t>(raw));
    if (!in.at_end()) throw FormatError("'" + path.string() + "' has trailing bytes");
    if (!features.allFinite()) {
        throw ValidationError("'" + path.string() + "' contains non-finite features");
    }
    auto set = make_embedding_set(std::move(features), raw);
    if (set.num_ids() != c) {
        throw FormatError("'" + path.string() + "' header declares C=" + std::to_string(c) +
                          " but labels hold " + std::to_string(set.num_ids()) + " identities");
    }
    return set;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
    set.validate();
    detail::BinaryWriter out(path);
    out.magic("DVHE");
    out.put<std::uint32_t>(kEmbeddingVersion);
    out.put(static_cast<std::uint32_t>(set.size()));
    out.put(static_cast<std::uint32_t>(set.dim()));
    out.put(set.num_ids());
    out.put_all(std::span<const float>(set.features.data(),
                                       static_cast<std::size_t>(set.features.size())));
    for (std::size_t i = 0; i < set.size(); ++i) out.put(set.raw_label(i));
    out.finish();
}

EmbeddingSet load_embeddings_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<float> values;
    std::vector<std::uint32_t> raw;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view rest = trim(line);
        if (rest.empty()) continue;
        std::vector<std::string_view> fields;
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(trim(rest.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (fields.size() < 2) throw FormatError(where + ": expected features then a label");
        if (dim == 0) dim = fields.size() - 1;
        if (fields.size() - 1 != dim) {
            throw FormatError(where + ": expected " + std::to_string(dim) + " features");
        }
        for (std::size_t j = 0; j < dim; ++j) {
            float v = 0.0f;
            auto [ptr, ec] = std::from_chars(fields[j].data(), fields[j].data() + fields[j].size(), v);
            if (ec != std::errc() || ptr != fields[j].data() + fields[j].size()) {
                throw FormatError(where + ": bad number '" + std::string(fields[j]) + "'");
            }
            values.push_back(v);
        }
        std::uint32_t label = 0;
        const auto& lf = fields.back();
        auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc() || ptr != lf.data() + lf.size()) {
            throw FormatError(where + ": bad label '" + std::string(lf) + "'");
        }
        raw.push_back(label);
    }
    if (raw.empty()) throw ValidationError("'" + path.string() + "' holds no rows");
    FeatureMatrix features = Eigen::Map<FeatureMatrix>(
        values.data(), static_cast<Eigen::Index>(raw.size()), static_cast<Eigen::Index>(dim));
    if (!features.allFinite()) {
        throw ValidationError("'" + path.string() + "' contains non-finite features");
    }
    return make_embedding_set(std::move(features), raw);
}

EmbeddingSet generate_synthetic(int num_ids, int per_id, int dim, double cluster_spread,
                                std::uint64_t seed) {
    check_synthetic_args(num_ids, per_id, dim, cluster_spread);
    std::mt19937_64 rng(seed);
    const auto centers = draw_centers(rng, num_ids, dim);
    return draw_around(centers, per_id, cluster_spread, rng, Split::train);
}

SyntheticSplits generate_synthetic_splits(int num_ids, int train_per_id, int query_per_id,
                                          int gallery_per_id, int dim, double cluster_spread,
                                          std::uint64_t seed) {
    check_synthetic_args(num_ids, train_per_id, dim, cluster_spread);
    if (query_per_id < 1 || gallery_per_id < 1) {
        throw ValidationError("held-out splits need at least one row per identity");
    }
    std::mt19937_64 rng(seed);
    const auto centers = draw_centers(rng, num_ids, dim);
    SyntheticSplits out;
    out.train = draw_around(centers, train_per_id, cluster_spread, rng, Split::train);
    std::mt19937_64 held_out(seed ^ kHeldOutStream);
    out.query = draw_around(centers, query_per_id, cluster_spread, held_out, Split::query);
    out.gallery = draw_around(centers, gallery_per_id, cluster_spread, held_out, Split::gallery);
    return out;
}

namespace {

std::vector<std::vector<std::uint32_t>> index_by_label(const EmbeddingSet& set) {
    std::vector<std::vector<std::uint32_t>> rows(set.num_ids());
    for (std::size_t i = 0; i < set.size(); ++i) {
        rows[set.labels[i]].push_back(static_cast<std::uint32_t>(i));
    }
    return rows;
}

void check_sampler(const SamplerConfig& cfg, std::size_t num_ids) {
    if (cfg.num_identities < 2 || cfg.instances_per_identity < 2) {
        throw SamplingError("P x K1 sampling needs P >= 2 and K1 >= 2");
    }
    if (static_cast<std::size_t>(cfg.num_identities) > num_ids) {
        throw SamplingError("cannot sample P=" + std::to_string(cfg.num_identities) +
                            " identities from a set with C=" + std::to_string(num_ids));
    }
}

Batch draw_batch(const std::vector<std::vector<std::uint32_t>>& rows_by_label,
                 const SamplerConfig& cfg, std::mt19937_64& rng) {
    using Dist = std::uniform_int_distribution<std::size_t>;
    const auto p = static_cast<std::size_t>(cfg.num_identities);
    const auto k1 = static_cast<std::size_t>(cfg.instances_per_identity);

    std::vector<std::uint32_t> ids(rows_by_label.size());
    std::iota(ids.begin(), ids.end(), 0U);
    for (std::size_t i = 0; i < p; ++i) {
        std::swap(ids[i], ids[Dist(i, ids.size() - 1)(rng)]);
    }

    Batch batch;
    batch.row_indices.reserve(p * k1);
    batch.labels.reserve(p * k1);
    for (std::size_t i = 0; i < p; ++i) {
        const auto label = ids[i];
        const auto& pool = rows_by_label[label];
        if (pool.size() >= k1) {
            auto shuffled = pool;
            for (std::size_t j = 0; j < k1; ++j) {
                std::swap(shuffled[j], shuffled[Dist(j, shuffled.size() - 1)(rng)]);
                batch.row_indices.push_back(shuffled[j]);
            }
        } else {
            Dist pick(0, pool.size() - 1);
            for (std::size_t j = 0; j < k1; ++j) batch.row_indices.push_back(pool[pick(rng)]);
        }
        batch.labels.insert(batch.labels.end(), k1, label);
    }
    return batch;
}

}  // namespace

Batch sample_pk_batch(const EmbeddingSet& set, const SamplerConfig& cfg, std::mt19937_64& rng) {
    check_sampler(cfg, set.num_ids());
    return draw_batch(index_by_label(set), cfg, rng);
}

PkSampler::PkSampler(const EmbeddingSet& set, SamplerConfig cfg)
    : cfg_(cfg), rows_by_label_(index_by_label(set)), rng_(cfg.seed) {
    check_sampler(cfg_, rows_by_label_.size());
}

Batch PkSampler::next() { return draw_batch(rows_by_label_, cfg_, rng_); }

}  // namespace dvhn
