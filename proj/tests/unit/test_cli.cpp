#include "cli.hpp"
#include "support/helpers.hpp"
#include "temi/error.hpp"
#include "temi/feature_io.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sstream>

using testing_support::TempDir;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Outcome o;
    o.code = temi::cli::run(args, out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

} // namespace

TEST_CASE("help and argument errors") {
    CHECK(run({"--help"}).code == 0);
    const Outcome sub = run({"train", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--beta") != std::string::npos);

    const Outcome none = run({});
    CHECK(none.code == 3);
    CHECK(none.err.rfind("error[argument]:", 0) == 0);
    CHECK(run({"bogus"}).code == 3);
    CHECK(run({"synth", "--classes", "x", "-o", "a"}).code == 3);
    CHECK(run({"theorem-check", "--search", "annealing"}).code == 3);
}

TEST_CASE("error kinds map to exit codes") {
    TempDir dir("cli_errors");
    const Outcome missing = run({"knn", "-i", (dir / "nope.tfeat").string(), "-o", (dir / "x.knn").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("error[io]:", 0) == 0);

    testing_support::write_file(dir / "bad.tfeat", "TEMIFEAX garbage");
    const Outcome bad = run({"knn", "-i", (dir / "bad.tfeat").string(), "-o", (dir / "x.knn").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.rfind("error[validation]:", 0) == 0);

    REQUIRE(run({"synth", "--classes", "2", "--n-per-class", "10", "--dim", "4", "-o", (dir / "f.tfeat").string()}).code == 0);
    const Outcome big_k = run({"knn", "-i", (dir / "f.tfeat").string(), "-k", "20", "-o", (dir / "x.knn").string()});
    CHECK(big_k.code == 3);
    REQUIRE(run({"knn", "-i", (dir / "f.tfeat").string(), "-k", "5", "-o", (dir / "f.knn").string()}).code == 0);

    const std::vector<std::string> base{"train", "-i", (dir / "f.tfeat").string(), "--knn", (dir / "f.knn").string(), "-o",
                                        (dir / "run").string()};
    auto with = [&](std::initializer_list<std::string> extra) {
        std::vector<std::string> a = base;
        a.insert(a.end(), extra);
        return run(a);
    };
    const Outcome beta = with({"--beta", "0.5"});
    CHECK(beta.code == 3);
    CHECK(beta.err.find("beta") != std::string::npos);
    CHECK(with({"--beta", "1.2"}).code == 3);
    CHECK(with({"--tau", "0"}).code == 3);
    CHECK(with({"--batch", "1"}).code == 3);
    CHECK(with({"-k", "7"}).code == 3); // neighbor file was mined with k = 5
    CHECK(with({"--loss", "dino"}).code == 3);
}

TEST_CASE("manifests record outputs and input hashes") {
    TempDir dir("cli_synth");
    const auto path = dir / "s.tfeat";
    const Outcome o = run({"synth", "--classes", "3", "--n-per-class", "5", "--dim", "4", "--seed", "7", "-o", path.string()});
    REQUIRE(o.code == 0);
    const temi::FeatureSet f = temi::load_features(path);
    CHECK(f.n() == 15);
    CHECK(f.d() == 4);
    const auto m = nlohmann::json::parse(testing_support::read_file(path.string() + ".manifest.json"));
    CHECK(m.at("subcommand") == "synth");
    CHECK(m.at("seed") == 7);
    CHECK(m.at("outputs") == nlohmann::json::array({path.string()}));
    CHECK(m.contains("wall_time_seconds"));

    const auto knn = dir / "s.knn";
    REQUIRE(run({"knn", "-i", path.string(), "-k", "3", "-o", knn.string()}).code == 0);
    const auto km = nlohmann::json::parse(testing_support::read_file(knn.string() + ".manifest.json"));
    const std::string digest = km.at("inputs").at(path.string());
    CHECK(digest.size() == 64);
    CHECK(digest.find_first_not_of("0123456789abcdef") == std::string::npos);
}

TEST_CASE("eval of truth against itself is perfect") {
    TempDir dir("cli_eval");
    REQUIRE(run({"synth", "--classes", "4", "--n-per-class", "6", "--dim", "3", "-o", (dir / "f.tfeat").string()}).code == 0);
    const temi::FeatureSet f = temi::load_features(dir / "f.tfeat");
    testing_support::write_file(dir / "pred.json", nlohmann::json{{"assignments", *f.labels}}.dump());

    const Outcome o = run({"eval", "--pred", (dir / "pred.json").string(), "--truth", (dir / "f.tfeat").string()});
    REQUIRE(o.code == 0);
    const auto j = nlohmann::json::parse(o.out);
    CHECK(j.at("acc") == 1.0);
    CHECK(j.at("nmi") == 1.0);
    CHECK(j.at("ari") == 1.0);
    CHECK(j.at("ami") == 1.0);

    const Outcome csv = run({"eval", "--pred", (dir / "pred.json").string(), "--truth", (dir / "pred.json").string(), "--csv",
                             "--method", "oracle", "--backbone", "synth"});
    REQUIRE(csv.code == 0);
    CHECK(csv.out == "method,backbone,acc,nmi,ari,ami\noracle,synth,100.00,100.00,100.00,100.00\n");

    testing_support::write_file(dir / "short.json", "[0, 1]");
    CHECK(run({"eval", "--pred", (dir / "short.json").string(), "--truth", (dir / "f.tfeat").string()}).code == 3);
}

TEST_CASE("theorem-check prints a verdict") {
    const Outcome o = run({"theorem-check", "--nx", "6", "--classes", "2", "--prior", "0.7,0.3"});
    REQUIRE(o.code == 0);
    const auto v = nlohmann::json::parse(o.out);
    CHECK(v.at("recovered") == true);
    CHECK(v.at("lemma_residual").get<double>() < 1e-12);
    CHECK(run({"theorem-check", "--classes", "2", "--prior", "1"}).code == 3);
}
