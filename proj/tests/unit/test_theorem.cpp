#include "support/helpers.hpp"
#include "temi/error.hpp"
#include "temi/theorem.hpp"

#include <doctest.h>

using namespace temi;

namespace {

double entropy(const Vector& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

} // namespace

TEST_CASE("model construction") {
    const DiscreteModel m = make_one_hot_model(7, vec({0.5, 0.3, 0.2}));
    CHECK(m.one_hot);
    CHECK(m.n_x() == 7);
    CHECK(m.classes() == 3);
    CHECK(std::abs(m.p_x.sum() - 1.0) < 1e-15);
    CHECK(std::abs(m.joint.sum() - 1.0) < 1e-14);
    CHECK((m.joint - m.joint.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(((m.joint.rowwise().sum() - m.p_x).cwiseAbs().maxCoeff()) < 1e-15);
    // Blocks of sizes 3, 2, 2.
    CHECK(m.class_given_x(2, 0) == 1.0);
    CHECK(m.class_given_x(3, 1) == 1.0);
    CHECK(m.class_given_x(6, 2) == 1.0);
    CHECK(m.p_x(0) == doctest::Approx(0.5 / 3.0));

    Rng rng(2);
    const DiscreteModel soft = make_random_model(5, 3, rng);
    CHECK_FALSE(soft.one_hot);
    for (Eigen::Index x = 0; x < 5; ++x) CHECK(std::abs(soft.class_given_x.row(x).sum() - 1.0) < 1e-12);
    CHECK_THROWS_AS((void)make_one_hot_model(2, vec({0.2, 0.3, 0.5})), ArgumentError);
}

TEST_CASE("pair mutual information of a block model is the prior entropy") {
    for (const Vector& prior : {vec({0.5, 0.5}), vec({0.5, 0.3, 0.2}), vec({0.1, 0.2, 0.3, 0.4})}) {
        const DiscreteModel m = make_one_hot_model(9, prior);
        CHECK(pair_mutual_information(m) == doctest::Approx(entropy(prior)).epsilon(1e-12));
    }
}

TEST_CASE("expected pmi equals mutual information minus the pair KL") {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + static_cast<std::size_t>(t) % 7;
        const std::size_t c = 1 + static_cast<std::size_t>(t) % 4;
        const DiscreteModel m = t % 2 == 0 ? make_random_model(n, c, rng) : make_one_hot_model(std::max(n, c), Vector::Constant(static_cast<Eigen::Index>(c), 1.0 / static_cast<double>(c)));
        const Matrix q = random_classifier(m.n_x(), 1 + static_cast<std::size_t>(t) % 5, rng);
        const LemmaCheck l = lemma_check(m, q);
        CHECK(l.residual < 1e-12);
        CHECK(l.kl >= -1e-12);
        CHECK(l.lhs <= l.mi + 1e-12);
    }
}

TEST_CASE("expected pmi at the true posterior reaches the mutual information") {
    const DiscreteModel m = make_one_hot_model(6, vec({0.6, 0.4}));
    const ExpectedPmi at_truth = exact_expected_pmi(m, m.class_given_x);
    CHECK_FALSE(at_truth.clamped);
    CHECK(at_truth.value == doctest::Approx(pair_mutual_information(m)).epsilon(1e-12));
    CHECK(pair_kl(m, m.class_given_x) == doctest::Approx(0.0).epsilon(1e-12));

    // A single cluster carries no information.
    CHECK(std::abs(exact_expected_pmi(m, Matrix::Constant(6, 1, 1.0)).value) < 1e-15);

    // Splitting a positive-probability pair across clusters hits the clamp.
    Matrix split = m.class_given_x;
    split.row(0) << 0.0, 1.0;
    CHECK(exact_expected_pmi(m, split).clamped);

    CHECK_THROWS_AS((void)exact_expected_pmi(m, Matrix::Constant(6, 2, 0.4)), ArgumentError);
    CHECK_THROWS_AS((void)exact_expected_pmi(m, Matrix::Constant(5, 2, 0.5)), ArgumentError);
}

TEST_CASE("expected pmi gradient matches finite differences along the simplex") {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
        const DiscreteModel m = make_random_model(5, 3, rng);
        const Matrix q = random_classifier(5, 3, rng);
        const Matrix g = expected_pmi_gradient(m, q);
        for (Eigen::Index i = 0; i < 5; ++i) {
            // Move mass from column 2 to column 0 of row i, staying on the simplex.
            auto f = [&](const oracle::Vec& v) {
                Matrix p = q;
                p(i, 0) += v[0];
                p(i, 2) -= v[0];
                return exact_expected_pmi(m, p).value;
            };
            const double numeric = oracle::central_difference(f, {0.0}, 0);
            CHECK(oracle::relative_error(g(i, 0) - g(i, 2), numeric) < 1e-6);
        }
    }
}

TEST_CASE("exhaustive search recovers block posteriors") {
    for (const Vector& prior : {vec({0.5, 0.5}), vec({0.7, 0.3}), vec({0.4, 0.35, 0.25})}) {
        const DiscreteModel m = make_one_hot_model(6, prior);
        const TheoremVerdict v = theorem_check(m, TheoremSearch::exhaustive);
        CHECK(v.recovered);
        CHECK(v.matched_accuracy == 1.0);
        CHECK(v.rows_one_hot);
        CHECK(v.objective == doctest::Approx(entropy(prior)).epsilon(1e-12));
        CHECK(std::abs(v.kl_gap) < 1e-12);
        CHECK(v.candidates == static_cast<std::size_t>(std::pow(prior.size(), 6)));
    }
    CHECK_THROWS_AS((void)theorem_check(make_one_hot_model(11, vec({0.5, 0.5})), TheoremSearch::exhaustive), ArgumentError);
}

TEST_CASE("gradient search recovers block posteriors") {
    TheoremOptions opts;
    opts.seed = 3;
    const DiscreteModel m = make_one_hot_model(12, vec({0.4, 0.35, 0.25}));
    const TheoremVerdict v = theorem_check(m, TheoremSearch::gradient, opts);
    CHECK_FALSE(v.optimizer_failed);
    CHECK(v.recovered);
    CHECK(v.kl_gap < 1e-3);
    CHECK(v.objective + v.kl_gap == doctest::Approx(pair_mutual_information(m)).epsilon(1e-12));
    CHECK(to_string(TheoremSearch::gradient) == "gradient");
}
