#include <doctest.h>

#include <algorithm>

#include "dvhn/errors.hpp"
#include "dvhn/hamming.hpp"
#include "dvhn/model.hpp"
#include "dvhn/verify.hpp"
#include "support.hpp"

using namespace dvhn;
using dvhn::testing::random_signs;

namespace {

CodeMatrix pack_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return pack_codes(m, std::vector<std::uint32_t>(rows.size(), 0));
}

}  // namespace

TEST_CASE("bit layout") {
    const auto c = pack_rows({{1, -1, -1, 1}});
    CHECK(c.words_per_item == 1);
    CHECK((c.packed[0] & 0xF) == 9);
    CHECK(c.packed[0] == 9);

    const auto ones = pack_codes(Eigen::MatrixXd::Ones(1, 64), {0});
    CHECK(ones.packed[0] == 0xFFFF'FFFF'FFFF'FFFFULL);

    Eigen::MatrixXd k65 = -Eigen::MatrixXd::Ones(1, 65);
    k65(0, 64) = 1.0;
    const auto wide = pack_codes(k65, {0});
    CHECK(wide.words_per_item == 2);
    CHECK(wide.packed[0] == 0);
    CHECK(wide.packed[1] == 1);
    CHECK(wide.bytes_per_item() == 16);
}

TEST_CASE("pack and unpack are inverse for every tested width") {
    std::mt19937_64 rng(3);
    for (std::size_t k : {1, 63, 64, 65, 256, 2048}) {
        const auto codes = random_signs(7, static_cast<Eigen::Index>(k), rng);
        const auto packed = pack_codes(codes, std::vector<std::uint32_t>(7, 1));
        CHECK(packed.words_per_item == words_for_bits(k));
        CHECK(packed.bytes_per_item() == 8 * ((k + 63) / 64));
        CHECK_NOTHROW(packed.validate());
        CHECK(unpack_codes(packed) == codes);
    }
}

TEST_CASE("packing rejects malformed input") {
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(2, 3);
    bad(1, 1) = 0.0;
    CHECK_THROWS_AS(pack_codes(bad, {0, 0}), ValidationError);
    CHECK_THROWS_AS(pack_codes(Eigen::MatrixXd::Ones(2, 3), {0}), ShapeError);

    auto c = pack_codes(Eigen::MatrixXd::Ones(1, 3), {0});
    c.packed[0] |= 1ULL << 5;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("distance fixtures") {
    const auto c = pack_rows({{1, -1, -1, 1}, {1, 1, 1, 1}});
    CHECK(hamming_distance(c.item(0), c.item(0)) == 0);
    CHECK(hamming_distance(c.item(0), c.item(1)) == 2);

    Eigen::VectorXd a(4);
    Eigen::VectorXd b(4);
    a << 1, 1, -1, 1;
    b << 1, -1, -1, -1;
    const auto dd = distance_inner_product_check(a, b);
    CHECK(dd.dot == 0);
    CHECK(dd.hamming == 2);
    CHECK(distance_inner_product_check(a, a).hamming == 0);
    CHECK(distance_inner_product_check(a, -a).hamming == 4);
    CHECK(distance_inner_product_check(a, -a).dot == -4);
}

TEST_CASE("complement within K is at distance K") {
    std::mt19937_64 rng(1);
    for (std::size_t k : {1, 63, 64, 65, 256}) {
        const auto codes = random_signs(1, static_cast<Eigen::Index>(k), rng);
        const Eigen::MatrixXd both = (Eigen::MatrixXd(2, codes.cols()) << codes, -codes).finished();
        const auto packed = pack_codes(both, {0, 0});
        CHECK(hamming_distance(packed.item(0), packed.item(1)) == k);
    }
}

TEST_CASE("packed distance is a metric and agrees with the bit loop and the inner product") {
    std::mt19937_64 rng(7);
    for (std::size_t k : {1, 63, 64, 65, 256, 2048}) {
        const auto codes = random_signs(60, static_cast<Eigen::Index>(k), rng);
        const auto packed = pack_codes(codes, std::vector<std::uint32_t>(60, 0));
        for (int trial = 0; trial < 200; ++trial) {
            const auto i = static_cast<std::size_t>(rng() % 60);
            const auto j = static_cast<std::size_t>(rng() % 60);
            const auto l = static_cast<std::size_t>(rng() % 60);
            const auto dij = hamming_distance(packed.item(i), packed.item(j));
            const auto ei = static_cast<Eigen::Index>(i);
            const auto ej = static_cast<Eigen::Index>(j);
            REQUIRE(dij == hamming_distance(packed.item(j), packed.item(i)));
            REQUIRE(dij == verify::naive_hamming(codes.row(ei).transpose(), codes.row(ej).transpose()));
            REQUIRE((dij == 0) == (codes.row(ei) == codes.row(ej)));
            REQUIRE(dij <= hamming_distance(packed.item(i), packed.item(l)) +
                               hamming_distance(packed.item(l), packed.item(j)));
            const double dot = codes.row(ei).dot(codes.row(ej));
            REQUIRE(2.0 * dij == static_cast<double>(k) - dot);
        }
    }
}

TEST_CASE("ranking order and ties") {
    const auto gallery = pack_rows({{-1, -1, 1, 1}, {1, 1, 1, 1}, {-1, 1, 1, 1}});
    const auto query = pack_rows({{1, 1, 1, 1}});
    const auto r = rank_gallery(query.item(0), gallery);
    CHECK(r.indices == std::vector<std::uint32_t>{1, 2, 0});
    CHECK(r.distances == std::vector<double>{0, 1, 2});

    const auto tied = pack_rows({{1, -1}, {-1, 1}, {1, -1}});
    const auto t = rank_gallery(pack_rows({{1, -1}}).item(0), tied);
    CHECK(t.indices == std::vector<std::uint32_t>{0, 2, 1});

    const auto one = pack_rows({{1, 1}});
    CHECK(rank_gallery(query.item(0).first(1), one).indices == std::vector<std::uint32_t>{0});
    CHECK(rank_gallery(query.item(0), gallery, std::nullopt, 1).indices ==
          std::vector<std::uint32_t>{2, 0});
}

TEST_CASE("ranking matches the naive oracle and top-k is a prefix") {
    std::mt19937_64 rng(19);
    const auto g = random_signs(200, 256, rng);
    const auto gallery = pack_codes(g, std::vector<std::uint32_t>(200, 0));
    for (int q = 0; q < 5; ++q) {
        const auto qc = random_signs(1, 256, rng);
        const auto packed = pack_codes(qc, {0});
        const auto full = rank_gallery(packed.item(0), gallery);
        const auto oracle = verify::naive_rank(qc.row(0).transpose(), g);
        CHECK(full.indices == oracle.indices);
        CHECK(full.distances == oracle.distances);
        for (std::size_t k : {0, 1, 7, 100, 199, 200, 500}) {
            const auto top = rank_gallery(packed.item(0), gallery, k);
            const auto n = std::min<std::size_t>(k, 200);
            REQUIRE(top.indices.size() == n);
            CHECK(std::equal(top.indices.begin(), top.indices.end(), full.indices.begin()));
        }
    }
}

TEST_CASE("Euclidean ranking on -1/+1 vectors equals Hamming ranking") {
    std::mt19937_64 rng(5);
    const auto g = random_signs(300, 64, rng);
    const auto gallery = pack_codes(g, std::vector<std::uint32_t>(300, 0));
    const RowMatrix g_rows = g;
    for (int q = 0; q < 5; ++q) {
        const Eigen::VectorXd qc = random_signs(1, 64, rng).row(0).transpose();
        const auto packed = pack_codes(qc.transpose(), {0});
        const auto h = rank_gallery(packed.item(0), gallery);
        const auto f = float_rank_gallery(std::span<const double>(qc.data(), 64), g_rows);
        CHECK(h.indices == f.indices);
        for (std::size_t i = 0; i < h.distances.size(); ++i) {
            CHECK(f.distances[i] * f.distances[i] == doctest::Approx(4.0 * h.distances[i]));
        }
    }
    const RowMatrix single = RowMatrix::Ones(1, 3);
    const std::vector<double> probe{0.0, 0.0, 0.0};
    CHECK(float_rank_gallery(probe, single).indices == std::vector<std::uint32_t>{0});
}

TEST_CASE("encoding a set composes forward, sign and pack") {
    const auto data = generate_synthetic(3, 4, 6, 0.1, 2);
    const auto params = init_params({6, 6, 70, 3, 1}, 4);
    const auto codes = encode_set(params, data);
    CHECK(codes.num_items == 12);
    CHECK(codes.bits == 70);
    const Eigen::MatrixXd manual = sign_binarize(forward(params, data.all_rows()).hash);
    CHECK(unpack_codes(codes) == manual);
    for (std::size_t i = 0; i < 12; ++i) CHECK(codes.labels[i] == data.raw_label(i));
    CHECK(encode_set(params, data, 2) == codes);
}

TEST_CASE("DVHC files") {
    dvhn::testing::TempDir dir;
    std::mt19937_64 rng(2);
    const auto codes = pack_codes(random_signs(5, 70, rng), {4, 4, 9, 1, 0});
    save_codes(codes, dir / "c.dvhc");
    CHECK(load_codes(dir / "c.dvhc") == codes);
    CHECK(std::filesystem::file_size(dir / "c.dvhc") == 4 + 4 + 4 + 4 + 5 * 16 + 5 * 4);

    auto bytes = dvhn::testing::read_bytes(dir / "c.dvhc");
    bytes.push_back(0);
    dvhn::testing::write_bytes(dir / "t.dvhc", bytes);
    CHECK_THROWS_AS(load_codes(dir / "t.dvhc"), FormatError);
    bytes.resize(10);
    dvhn::testing::write_bytes(dir / "s.dvhc", bytes);
    CHECK_THROWS_AS(load_codes(dir / "s.dvhc"), IoError);
    CHECK_THROWS_AS(save_codes(CodeMatrix{}, dir / "e.dvhc"), ValidationError);
}
