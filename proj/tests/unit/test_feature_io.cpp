#include "support/helpers.hpp"
#include "temi/error.hpp"
#include "temi/feature_io.hpp"
#include "temi/knn.hpp"
#include "temi/metrics.hpp"

#include <doctest.h>

#include <cstring>

using namespace temi;
using testing_support::TempDir;

namespace {

FeatureSet tiny(bool labels) {
    FeatureSet f;
    f.data.resize(3, 2);
    f.data << 1.0, 2.0, -0.5, 0.25, 3.0, -4.0;
    if (labels) f.labels = Labels{0, 1, 1};
    return f;
}

} // namespace

TEST_CASE("feature file round-trips bytes and values") {
    TempDir dir("fio");
    for (bool labels : {false, true}) {
        const FeatureSet f = tiny(labels);
        save_features(f, dir / "a.tfeat");
        const FeatureSet g = load_features(dir / "a.tfeat");
        CHECK(g.data == f.data);
        CHECK(g.labels == f.labels);
        save_features(g, dir / "b.tfeat");
        CHECK(testing_support::read_file(dir / "a.tfeat") == testing_support::read_file(dir / "b.tfeat"));
    }
}

TEST_CASE("feature file layout matches the documented header") {
    TempDir dir("fio");
    save_features(tiny(true), dir / "a.tfeat");
    const std::string bytes = testing_support::read_file(dir / "a.tfeat");
    REQUIRE(bytes.size() == 8 + 4 + 8 + 4 + 4 + 3 * 2 * 4 + 3 * 4);
    CHECK(bytes.substr(0, 8) == "TEMIFEAT");
    std::uint32_t version = 0, d = 0, flags = 0;
    std::uint64_t n = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    std::memcpy(&n, bytes.data() + 12, 8);
    std::memcpy(&d, bytes.data() + 20, 4);
    std::memcpy(&flags, bytes.data() + 24, 4);
    CHECK(version == 1);
    CHECK(n == 3);
    CHECK(d == 2);
    CHECK(flags == 1);
    float first = 0;
    std::memcpy(&first, bytes.data() + 28, 4);
    CHECK(first == 1.0f);
}

TEST_CASE("metadata string survives a round trip") {
    TempDir dir("fio");
    FeatureSet f = tiny(false);
    f.meta = "model=test";
    save_features(f, dir / "m.tfeat");
    CHECK(load_features(dir / "m.tfeat").meta == "model=test");
}

TEST_CASE("malformed feature files are rejected") {
    TempDir dir("fio");
    save_features(tiny(true), dir / "ok.tfeat");
    const std::string good = testing_support::read_file(dir / "ok.tfeat");

    testing_support::write_file(dir / "magic.tfeat", "NOTAFEAT" + good.substr(8));
    CHECK_THROWS_AS((void)load_features(dir / "magic.tfeat"), FormatError);

    testing_support::write_file(dir / "short.tfeat", good.substr(0, good.size() - 3));
    CHECK_THROWS_AS((void)load_features(dir / "short.tfeat"), IoError);

    testing_support::write_file(dir / "long.tfeat", good + "x");
    CHECK_THROWS_AS((void)load_features(dir / "long.tfeat"), FormatError);

    std::string bad_version = good;
    bad_version[8] = 7;
    testing_support::write_file(dir / "ver.tfeat", bad_version);
    CHECK_THROWS_AS((void)load_features(dir / "ver.tfeat"), FormatError);

    CHECK_THROWS_AS((void)load_features(dir / "missing.tfeat"), IoError);
}

TEST_CASE("validate enforces the feature-set invariants") {
    FeatureSet f = tiny(true);
    CHECK_NOTHROW(validate(f));
    FeatureSet nan = f;
    nan.data(1, 1) = std::nan("");
    CHECK_THROWS_AS(validate(nan), ValidationError);
    FeatureSet neg = f;
    (*neg.labels)[0] = -1;
    CHECK_THROWS_AS(validate(neg), ValidationError);
    FeatureSet len = f;
    len.labels->pop_back();
    CHECK_THROWS_AS(validate(len), ValidationError);
    FeatureSet one;
    one.data = Matrix::Ones(1, 3);
    CHECK_THROWS_AS(validate(one), ValidationError);
}

TEST_CASE("CSV import parses header, features and labels") {
    TempDir dir("fio");
    testing_support::write_file(dir / "f.csv", "f0,f1,label\n1,2,0\n3.5,-1,1\n0,0,1\n");
    const FeatureSet f = load_features_any(dir / "f.csv");
    CHECK(f.n() == 3);
    CHECK(f.d() == 2);
    CHECK(f.data(1, 0) == doctest::Approx(3.5));
    CHECK(f.labels == Labels{0, 1, 1});

    testing_support::write_file(dir / "nolabel.csv", "f0,f1\n1,2\n3,4\n");
    CHECK_FALSE(load_features_csv(dir / "nolabel.csv").has_labels());

    testing_support::write_file(dir / "bad.csv", "f0,f1\n1,2\n3\n");
    CHECK_THROWS_AS((void)load_features_csv(dir / "bad.csv"), ValidationError);
    testing_support::write_file(dir / "hdr.csv", "x,y\n1,2\n3,4\n");
    CHECK_THROWS_AS((void)load_features_csv(dir / "hdr.csv"), ValidationError);
}

TEST_CASE("standardize gives zero mean, unit population std and is idempotent") {
    SynthConfig cfg;
    cfg.n_per_class = 30;
    cfg.classes = 3;
    cfg.dim = 5;
    FeatureSet f = generate_synthetic(cfg);
    f.data.col(2).setConstant(4.0); // constant column keeps scale 1
    const FeatureSet s = standardize(f);
    for (Eigen::Index j = 0; j < s.data.cols(); ++j) {
        const double mean = s.data.col(j).mean();
        const double var = (s.data.col(j).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-12);
        if (j != 2) CHECK(std::abs(var - 1.0) < 1e-9);
    }
    const FeatureSet twice = standardize(s);
    CHECK((twice.data - s.data).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("synthetic generator is deterministic and well formed") {
    SynthConfig cfg;
    cfg.n_per_class = 20;
    cfg.classes = 4;
    cfg.dim = 6;
    const FeatureSet a = generate_synthetic(cfg);
    const FeatureSet b = generate_synthetic(cfg);
    CHECK(a.data == b.data);
    CHECK(a.n() == 80);
    CHECK(a.num_classes() == 4);
    CHECK_NOTHROW(validate(a));
    cfg.seed = 2;
    CHECK(generate_synthetic(cfg).data != a.data);

    // Values are float32-representable so the file round trip is exact.
    for (Eigen::Index i = 0; i < a.data.size(); ++i)
        CHECK(static_cast<double>(static_cast<float>(a.data.data()[i])) == a.data.data()[i]);
}

TEST_CASE("stretched synthetic leaves the default generator untouched") {
    SynthConfig cfg;
    cfg.n_per_class = 10;
    cfg.classes = 3;
    cfg.dim = 4;
    const FeatureSet plain = generate_synthetic(cfg);
    cfg.stretch = 0.0;
    cfg.stretch_dims = 5;
    CHECK(generate_synthetic(cfg).data == plain.data);
    cfg.stretch = 3.0;
    cfg.stretch_dims = 1;
    const FeatureSet stretched = generate_synthetic(cfg);
    CHECK(stretched.data != plain.data);
    CHECK(stretched.labels == plain.labels);
}

TEST_CASE("large separation gives nearly pure neighborhoods") {
    SynthConfig cfg;
    cfg.n_per_class = 60;
    cfg.classes = 4;
    cfg.dim = 16;
    cfg.separation = 20.0;
    cfg.noise = 1.0;
    const FeatureSet f = generate_synthetic(cfg);
    const NeighborTable nt = mine_knn(standardize(f), 10);
    CHECK(true_positive_rate(nt, *f.labels) > 0.99);
}

TEST_CASE("relabeling generated classes does not change matched accuracy") {
    SynthConfig cfg;
    cfg.n_per_class = 25;
    cfg.classes = 4;
    cfg.dim = 8;
    const FeatureSet f = generate_synthetic(cfg);
    Labels pred = *f.labels;
    pred[3] = 2;
    pred[40] = 0;
    Labels relabeled = *f.labels;
    for (auto& l : relabeled) l = (l * 3 + 1) % 4;
    CHECK(hungarian_acc(pred, *f.labels).acc == hungarian_acc(pred, relabeled).acc);
}
