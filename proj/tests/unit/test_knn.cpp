#include "support/helpers.hpp"
#include "temi/error.hpp"
#include "temi/feature_io.hpp"
#include "temi/knn.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace temi;
using testing_support::TempDir;

namespace {

FeatureSet from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    FeatureSet f;
    f.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) f.data(i, j++) = v;
        ++i;
    }
    return f;
}

std::vector<std::int64_t> row_of(const NeighborTable& nt, std::size_t i) {
    return {nt.idx.begin() + static_cast<std::ptrdiff_t>(i * nt.k), nt.idx.begin() + static_cast<std::ptrdiff_t>((i + 1) * nt.k)};
}

} // namespace

TEST_CASE("three points on the unit circle") {
    const double deg = std::numbers::pi / 180.0;
    const FeatureSet f = from_rows({{1.0, 0.0}, {std::cos(deg), std::sin(deg)}, {0.0, 1.0}});
    const NeighborTable nt = mine_knn(f, 1);
    CHECK(nt.idx == std::vector<std::int64_t>{1, 0, 1});
}

TEST_CASE("duplicate points are each other's nearest neighbor") {
    const FeatureSet f = from_rows({{1.0, 2.0}, {1.0, 2.0}, {-3.0, 1.0}});
    const NeighborTable nt = mine_knn(f, 1);
    CHECK(nt.neighbor(0, 0) == 1);
    CHECK(nt.similarity(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("k = n - 1 gives every other index exactly once") {
    std::mt19937_64 rng(3);
    FeatureSet f;
    f.data = testing_support::random_matrix(9, 4, rng);
    const NeighborTable nt = mine_knn(f, 8);
    for (std::size_t i = 0; i < 9; ++i) {
        auto row = row_of(nt, i);
        std::sort(row.begin(), row.end());
        std::vector<std::int64_t> expected;
        for (std::int64_t j = 0; j < 9; ++j)
            if (j != static_cast<std::int64_t>(i)) expected.push_back(j);
        CHECK(row == expected);
    }
}

TEST_CASE("mining agrees with the brute-force reference") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        FeatureSet f;
        f.data = testing_support::random_matrix(300 + trial * 37, 5, rng);
        // Duplicated and scaled rows create exact ties.
        f.data.row(7) = f.data.row(3);
        f.data.row(9) = 2.5 * f.data.row(3);
        f.data.row(11).setZero();
        const std::size_t k = 1 + static_cast<std::size_t>(trial) * 7;
        for (bool self : {false, true}) {
            KnnOptions opts;
            opts.include_self = self;
            opts.threads = trial % 2 == 0 ? 1 : 3;
            const NeighborTable nt = mine_knn(f, k, opts);
            const auto rows = testing_support::to_rows(f.data);
            const auto ref = oracle::brute_force_knn(rows, k, self);
            auto unit = [&](std::size_t a) {
                oracle::Vec v = rows[a];
                if (oracle::dot(v, v) == 0.0) v.assign(v.size(), 1.0);
                const double norm = std::sqrt(oracle::dot(v, v));
                for (double& x : v) x /= norm;
                return v;
            };
            auto cosine = [&](std::size_t a, std::size_t b) { return oracle::dot(unit(a), unit(b)); };
            for (std::size_t i = 0; i < f.n(); ++i) {
                const auto got = row_of(nt, i);
                if (got == ref[i]) continue;
                // Rankings may differ only among candidates tied to rounding precision.
                for (std::size_t j = 0; j < k; ++j) {
                    const auto g = static_cast<std::size_t>(got[j]);
                    const auto r = static_cast<std::size_t>(ref[i][j]);
                    REQUIRE(std::abs(cosine(i, g) - cosine(i, r)) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("neighbor table invariants hold on random data") {
    std::mt19937_64 rng(5);
    FeatureSet f;
    f.data = testing_support::random_matrix(120, 6, rng);
    const NeighborTable nt = mine_knn(f, 15);
    CHECK_NOTHROW(validate(nt));
    for (std::size_t i = 0; i < nt.n; ++i)
        for (std::size_t j = 0; j < nt.k; ++j) {
            CHECK(nt.neighbor(i, j) != static_cast<std::int64_t>(i));
            if (j > 0) CHECK(nt.similarity(i, j) <= nt.similarity(i, j - 1));
        }
}

TEST_CASE("cosine neighbors are invariant to positive row scaling") {
    std::mt19937_64 rng(8);
    FeatureSet f;
    f.data = testing_support::random_matrix(80, 4, rng);
    FeatureSet scaled = f;
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (Eigen::Index i = 0; i < scaled.data.rows(); ++i) scaled.data.row(i) *= u(rng);
    CHECK(mine_knn(f, 7).idx == mine_knn(scaled, 7).idx);
}

TEST_CASE("parallel mining matches sequential mining") {
    std::mt19937_64 rng(2);
    FeatureSet f;
    f.data = testing_support::random_matrix(700, 8, rng);
    KnnOptions one, many;
    many.threads = 4;
    const NeighborTable a = mine_knn(f, 20, one);
    const NeighborTable b = mine_knn(f, 20, many);
    CHECK(a.idx == b.idx);
    CHECK(a.sim == b.sim);
}

TEST_CASE("k outside [1, n-1] is an argument error") {
    const FeatureSet f = from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}});
    CHECK_THROWS_AS((void)mine_knn(f, 0), ArgumentError);
    CHECK_THROWS_AS((void)mine_knn(f, 3), ArgumentError);
    KnnOptions self;
    self.include_self = true;
    CHECK_NOTHROW((void)mine_knn(f, 3, self));
}

TEST_CASE("true positive rate") {
    const FeatureSet f = from_rows({{1.0, 0.0}, {0.9, 0.1}, {0.0, 1.0}, {0.1, 0.9}});
    const NeighborTable nt = mine_knn(f, 1);
    CHECK(true_positive_rate(nt, Labels{0, 0, 0, 0}) == 1.0);
    CHECK(true_positive_rate(nt, Labels{0, 0, 1, 1}) == 1.0);
    CHECK(true_positive_rate(nt, Labels{0, 1, 0, 1}) == 0.0);
    CHECK_THROWS_AS((void)true_positive_rate(nt, Labels{0, 1}), ArgumentError);
}

TEST_CASE("zero separation gives chance-level neighborhoods") {
    SynthConfig cfg;
    cfg.classes = 5;
    cfg.n_per_class = 120;
    cfg.dim = 16;
    cfg.separation = 0.0;
    const FeatureSet f = generate_synthetic(cfg);
    const double tpr = true_positive_rate(mine_knn(f, 20), *f.labels);
    CHECK(std::abs(tpr - 0.2) < 0.05);
}

TEST_CASE("neighbor files round-trip and reject corruption") {
    TempDir dir("knn");
    std::mt19937_64 rng(1);
    FeatureSet f;
    f.data = testing_support::random_matrix(30, 3, rng);
    NeighborTable nt = mine_knn(f, 4);
    for (auto& s : nt.sim) s = static_cast<double>(static_cast<float>(s));
    save_neighbors(nt, dir / "a.knn");
    const NeighborTable back = load_neighbors(dir / "a.knn");
    CHECK(back.idx == nt.idx);
    CHECK(back.sim == nt.sim);
    CHECK(back.k == 4);

    const std::string bytes = testing_support::read_file(dir / "a.knn");
    CHECK(bytes.substr(0, 8) == "TEMIKNN0");
    CHECK(bytes.size() == 8 + 4 + 8 + 4 + 30 * 4 * (8 + 4));
    testing_support::write_file(dir / "t.knn", bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS((void)load_neighbors(dir / "t.knn"), IoError);
    std::string bad = bytes;
    std::int64_t out_of_range = 1000;
    std::memcpy(bad.data() + 24, &out_of_range, 8);
    testing_support::write_file(dir / "r.knn", bad);
    CHECK_THROWS_AS((void)load_neighbors(dir / "r.knn"), ValidationError);
}
