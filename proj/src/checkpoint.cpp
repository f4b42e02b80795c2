#include "dvhn/checkpoint.hpp"

#include <string>

#include "dvhn/detail/binary_io.hpp"
#include "dvhn/errors.hpp"

namespace dvhn {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_matrix(detail::BinaryWriter& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.put(static_cast<float>(m(r, c)));
    }
}

void put_vector(detail::BinaryWriter& out, const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out.put(static_cast<float>(v[i]));
}

Eigen::MatrixXd get_matrix(detail::BinaryReader& in, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = in.get<float>();
    }
    return m;
}

Eigen::VectorXd get_vector(detail::BinaryReader& in, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = in.get<float>();
    return v;
}

DenseLayer get_layer(detail::BinaryReader& in, Eigen::Index out, Eigen::Index in_dim, bool rectify) {
    DenseLayer layer;
    layer.weight = get_matrix(in, out, in_dim);
    layer.bias = get_vector(in, out);
    layer.rectify = rectify;
    return layer;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const auto& params = checkpoint.params;
    params.validate();
    for (const auto& layer : params.adapter) {
        if (!layer.rectify) {
            throw ValidationError("checkpoint format requires rectified adapter layers");
        }
    }
    const auto dims = params.dims();
    if (checkpoint.classifier.rows() != dims.bits || checkpoint.classifier.cols() != dims.classes) {
        throw ShapeError("checkpoint classifier must be K x C");
    }
    detail::BinaryWriter out(path);
    out.magic("DVHM");
    out.put<std::uint32_t>(kCheckpointVersion);
    for (int v : {dims.input_dim, dims.feature_dim, dims.bits, dims.classes, dims.adapter_depth}) {
        out.put(static_cast<std::uint32_t>(v));
    }
    for (const auto& layer : params.adapter) {
        put_matrix(out, layer.weight);
        put_vector(out, layer.bias);
    }
    put_matrix(out, params.hash_layer.weight);
    put_vector(out, params.hash_layer.bias);
    put_matrix(out, params.identity_head.weight);
    put_vector(out, params.identity_head.bias);
    put_matrix(out, checkpoint.classifier);
    out.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    detail::BinaryReader in(path);
    in.expect_magic("DVHM");
    in.expect_version(kCheckpointVersion);
    const auto m = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    const auto m_prime = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    const auto k = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    const auto c = static_cast<Eigen::Index>(in.get<std::uint32_t>());
    const auto depth = in.get<std::uint32_t>();
    if (m == 0 || m_prime == 0 || k == 0 || c == 0) {
        throw FormatError("'" + path.string() + "' declares a zero dimension");
    }
    if (depth == 0 && m != m_prime) {
        throw FormatError("'" + path.string() + "' has no adapter but M != M'");
    }
    {
        const auto layers = static_cast<std::uintmax_t>(depth);
        const auto mu = static_cast<std::uintmax_t>(m);
        const auto mp = static_cast<std::uintmax_t>(m_prime);
        const auto ku = static_cast<std::uintmax_t>(k);
        const auto cu = static_cast<std::uintmax_t>(c);
        std::uintmax_t floats = (ku + cu) * (mp + 1) + ku * cu;
        if (layers > 0) floats += (mu + 1) * mp + (layers - 1) * (mp + 1) * mp;
        if (std::filesystem::file_size(path) != 28 + 4 * floats) {
            throw FormatError("'" + path.string() + "' size does not match its header");
        }
    }
    Checkpoint cp;
    Eigen::Index width = m;
    for (std::uint32_t l = 0; l < depth; ++l) {
        cp.params.adapter.push_back(get_layer(in, m_prime, width, true));
        width = m_prime;
    }
    cp.params.hash_layer = get_layer(in, k, m_prime, false);
    cp.params.identity_head = get_layer(in, c, m_prime, false);
    cp.classifier = get_matrix(in, k, c);
    if (!in.at_end()) throw FormatError("'" + path.string() + "' has trailing bytes");
    cp.params.validate();
    if (!cp.classifier.allFinite()) throw ValidationError("checkpoint classifier is non-finite");
    return cp;
}

}  // namespace dvhn
