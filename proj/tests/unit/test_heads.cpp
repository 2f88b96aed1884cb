#include "support/helpers.hpp"
#include "temi/error.hpp"
#include "temi/heads.hpp"

#include <doctest.h>

using namespace temi;
using testing_support::TempDir;

namespace {

HeadArch small_arch(std::size_t d, std::size_t h1, std::size_t h2, std::size_t c, Activation act = Activation::gelu) {
    HeadArch a;
    a.input_dim = d;
    a.hidden1 = h1;
    a.hidden2 = h2;
    a.classes = c;
    a.activation = act;
    return a;
}

HeadParams random_params(const HeadArch& arch, std::mt19937_64& rng) {
    HeadParams p(arch);
    std::normal_distribution<double> g(0.0, 0.5);
    for (double& v : p.flat()) v = g(rng);
    return p;
}

// Max relative error of backward() against central differences of sum(G .* logits).
double gradient_check(const HeadArch& arch, std::mt19937_64& rng, Eigen::Index batch) {
    const HeadParams params = random_params(arch, rng);
    const Matrix x = testing_support::random_matrix(batch, static_cast<Eigen::Index>(arch.input_dim), rng);
    const Matrix upstream = testing_support::random_matrix(batch, static_cast<Eigen::Index>(arch.classes), rng);
    const ForwardCache cache = forward_batch(params, x, 0.1);
    const HeadParams grad = backward(params, cache, x, upstream);

    auto objective = [&](const oracle::Vec& flat) {
        HeadParams p(arch);
        p.flat() = testing_support::from_vec(flat);
        return (forward_batch(p, x, 0.1).logits.array() * upstream.array()).sum();
    };
    const oracle::Vec flat = testing_support::to_vec(params.flat());
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i)
        worst = std::max(worst, oracle::relative_error(grad.flat()(static_cast<Eigen::Index>(i)),
                                                      oracle::central_difference(objective, flat, i)));
    return worst;
}

} // namespace

TEST_CASE("zero parameters give the uniform distribution") {
    const HeadParams p(small_arch(3, 4, 4, 5));
    const Vector out = forward(p, Vector::Ones(3), 0.1);
    for (double v : out) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("temperature softmax examples") {
    Vector logits(2);
    logits << 1.0, 0.0;
    const Vector p = softmax(logits, 0.1);
    CHECK(p(0) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(std::exp(-10.0) / (1.0 + std::exp(-10.0))).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(4.54e-5).epsilon(1e-2));

    std::mt19937_64 rng(4);
    const HeadArch arch = small_arch(4, 6, 6, 3);
    const HeadParams params = random_params(arch, rng);
    const Vector hot = forward(params, Vector::Ones(4), 1e6);
    CHECK(hot.maxCoeff() < 1.0 / 3.0 + 1e-5);
}

TEST_CASE("forward outputs are probability vectors and shift invariant") {
    std::mt19937_64 rng(9);
    const HeadArch arch = small_arch(5, 8, 7, 4);
    HeadParams params = random_params(arch, rng);
    const Matrix x = testing_support::random_matrix(50, 5, rng, 3.0);
    const ForwardCache c = forward_batch(params, x, 0.1);
    for (Eigen::Index i = 0; i < c.probs.rows(); ++i) {
        CHECK(std::abs(c.probs.row(i).sum() - 1.0) < 1e-9);
        CHECK(c.probs.row(i).minCoeff() >= 0.0);
    }
    params.b3().array() += 123.0;
    const ForwardCache shifted = forward_batch(params, x, 0.1);
    CHECK((shifted.probs - c.probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-finite input is a numeric error") {
    const HeadParams p(small_arch(2, 3, 3, 2));
    Vector x(2);
    x << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)forward(p, x, 0.1), NumericError);
    CHECK_THROWS_AS((void)forward(p, Vector::Ones(2), 0.0), ArgumentError);
}

TEST_CASE("backward matches finite differences") {
    std::mt19937_64 rng(21);
    SUBCASE("identity activations") {
        for (int t = 0; t < 5; ++t) CHECK(gradient_check(small_arch(3, 4, 5, 3, Activation::identity), rng, 4) < 1e-4);
    }
    SUBCASE("GELU activations") {
        for (int t = 0; t < 10; ++t) {
            std::uniform_int_distribution<std::size_t> dim(1, 8), hid(1, 16), cls(2, 5);
            CHECK(gradient_check(small_arch(dim(rng), hid(rng), hid(rng), cls(rng)), rng, 3) < 1e-4);
        }
    }
}

TEST_CASE("backward edge cases") {
    std::mt19937_64 rng(1);
    const HeadArch arch = small_arch(3, 5, 4, 3);
    const HeadParams params = random_params(arch, rng);
    const Matrix x = testing_support::random_matrix(1, 3, rng);
    const Matrix g = testing_support::random_matrix(1, 3, rng);

    const HeadParams zero = backward(params, forward_batch(params, x, 0.1), x, Matrix::Zero(1, 3));
    CHECK(zero.flat().cwiseAbs().maxCoeff() == 0.0);

    Matrix x2(2, 3), g2(2, 3);
    x2 << x, x;
    g2 << g, g;
    const HeadParams once = backward(params, forward_batch(params, x, 0.1), x, g);
    const HeadParams twice = backward(params, forward_batch(params, x2, 0.1), x2, g2);
    CHECK((twice.flat() - 2.0 * once.flat()).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS((void)backward(params, forward_batch(params, x, 0.1), x, Matrix::Zero(1, 4)), ArgumentError);
}

TEST_CASE("softmax Jacobian conversion matches finite differences") {
    std::mt19937_64 rng(6);
    const double tau = 0.3;
    const Vector z = testing_support::random_matrix(4, 1, rng);
    const Vector gp = testing_support::random_matrix(4, 1, rng);
    Matrix probs = softmax(z, tau).transpose();
    const Matrix gl = prob_grad_to_logit_grad(probs, gp.transpose(), tau);
    auto f = [&](const oracle::Vec& zz) { return oracle::dot(oracle::softmax(zz, tau), testing_support::to_vec(gp)); };
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(oracle::relative_error(gl(0, static_cast<Eigen::Index>(i)), oracle::central_difference(f, testing_support::to_vec(z), i)) <
              1e-6);
}

TEST_CASE("AdamW single steps") {
    SUBCASE("zero gradient and no decay leaves parameters unchanged") {
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        OptimizerState opt(cfg, 3);
        Vector p(3);
        p << 1.0, -2.0, 0.5;
        const Vector before = p;
        adamw_step(opt, p, Vector::Zero(3));
        CHECK(p == before);
    }
    SUBCASE("scalar step with beta1 = beta2 = 0") {
        AdamWConfig cfg{0.1, 0.0, 0.0, 0.0, 1e-8};
        OptimizerState opt(cfg, 1);
        Vector p = Vector::Ones(1);
        adamw_step(opt, p, Vector::Ones(1));
        CHECK(p(0) == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    }
    SUBCASE("decoupled decay only") {
        AdamWConfig cfg{0.1, 0.1, 0.9, 0.999, 1e-8};
        OptimizerState opt(cfg, 2);
        Vector p(2);
        p << 2.0, -4.0;
        adamw_step(opt, p, Vector::Zero(2));
        CHECK(p(0) == doctest::Approx(2.0 * 0.99).epsilon(1e-15));
        CHECK(p(1) == doctest::Approx(-4.0 * 0.99).epsilon(1e-15));
    }
    SUBCASE("bias-corrected first step moves by lr in the gradient sign") {
        AdamWConfig cfg{0.01, 0.0, 0.9, 0.999, 1e-12};
        OptimizerState opt(cfg, 2);
        Vector p = Vector::Zero(2);
        Vector g(2);
        g << 3.0, -0.2;
        adamw_step(opt, p, g);
        CHECK(p(0) == doctest::Approx(-0.01).epsilon(1e-9));
        CHECK(p(1) == doctest::Approx(0.01).epsilon(1e-9));
        CHECK(opt.step == 1);
    }
    SUBCASE("learning-rate override") {
        AdamWConfig cfg{1.0, 0.0, 0.0, 0.0, 1e-8};
        OptimizerState opt(cfg, 1);
        Vector p = Vector::Zero(1);
        adamw_step(opt, p, Vector::Ones(1), 0.25);
        CHECK(p(0) == doctest::Approx(-0.25).epsilon(1e-7));
    }
}

TEST_CASE("teacher EMA") {
    const HeadArch arch = small_arch(1, 1, 1, 2);
    HeadEnsemble ens;
    ens.arch = arch;
    ens.heads.push_back({HeadParams(arch), HeadParams(arch)});
    ens.heads[0].student.flat().setOnes();
    teacher_ema_update(ens, 0.996);
    for (double v : ens.heads[0].teacher.flat()) CHECK(v == doctest::Approx(0.004).epsilon(1e-12));

    SUBCASE("momentum near one barely moves the teacher") {
        const Vector before = ens.heads[0].teacher.flat();
        const double gap = (ens.heads[0].student.flat() - before).norm();
        teacher_ema_update(ens, 0.999999);
        CHECK((ens.heads[0].teacher.flat() - before).norm() < 1e-5 * gap);
    }
    SUBCASE("frozen student: geometric convergence inside the convex hull") {
        std::mt19937_64 rng(3);
        const HeadArch a = small_arch(2, 3, 3, 2);
        HeadEnsemble e = init_ensemble(a, 2, 5);
        for (auto& h : e.heads) h.student = random_params(a, rng);
        const double m = 0.9;
        std::vector<double> initial_gap;
        for (const auto& h : e.heads) initial_gap.push_back((h.student.flat() - h.teacher.flat()).norm());
        for (int t = 1; t <= 50; ++t) {
            std::vector<Vector> old;
            for (const auto& h : e.heads) old.push_back(h.teacher.flat());
            teacher_ema_update(e, m);
            for (std::size_t h = 0; h < e.size(); ++h) {
                const Vector& s = e.heads[h].student.flat();
                const Vector& tt = e.heads[h].teacher.flat();
                for (Eigen::Index i = 0; i < s.size(); ++i) {
                    CHECK(tt(i) >= std::min(old[h](i), s(i)) - 1e-15);
                    CHECK(tt(i) <= std::max(old[h](i), s(i)) + 1e-15);
                }
                CHECK((s - tt).norm() <= std::pow(m, t) * initial_gap[h] + 1e-9);
            }
        }
    }
    CHECK_THROWS_AS(teacher_ema_update(ens, 1.0), ArgumentError);
}

TEST_CASE("ensemble initialization") {
    const HeadArch arch = small_arch(6, 10, 8, 4);
    const HeadEnsemble a = init_ensemble(arch, 3, 42);
    const HeadEnsemble b = init_ensemble(arch, 3, 42);
    for (std::size_t h = 0; h < 3; ++h) {
        CHECK(a.heads[h].student.flat() == a.heads[h].teacher.flat());
        CHECK(a.heads[h].student.flat() == b.heads[h].student.flat());
        CHECK(a.heads[h].student.b1().isZero());
        CHECK(a.heads[h].student.b3().isZero());
        CHECK(a.heads[h].student.w1().cwiseAbs().maxCoeff() <= 2.0 / std::sqrt(6.0));
        CHECK(a.heads[h].student.w2().cwiseAbs().maxCoeff() <= 2.0 / std::sqrt(10.0));
    }
    CHECK(a.heads[0].student.flat() != a.heads[1].student.flat());
    CHECK(init_ensemble(arch, 3, 43).heads[0].student.flat() != a.heads[0].student.flat());
    // Adding heads does not disturb existing ones.
    CHECK(init_ensemble(arch, 5, 42).heads[2].student.flat() == a.heads[2].student.flat());
}

TEST_CASE("checkpoint round trip") {
    TempDir dir("ckpt");
    std::mt19937_64 rng(2);
    const HeadArch arch = small_arch(3, 4, 5, 2);
    HeadEnsemble ens = init_ensemble(arch, 2, 7, 0.25);
    for (auto& h : ens.heads) h.student = random_params(arch, rng);
    std::vector<OptimizerState> opts(2, OptimizerState(AdamWConfig{}, arch.param_count()));
    opts[1].step = 17;
    opts[1].m.setConstant(0.5);

    save_checkpoint(ens, &opts, dir / "a.ckpt");
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    CHECK(back.ensemble.arch == arch);
    CHECK(back.ensemble.tau == 0.25);
    REQUIRE(back.ensemble.size() == 2);
    for (std::size_t h = 0; h < 2; ++h)
        CHECK((back.ensemble.heads[h].student.flat() - ens.heads[h].student.flat()).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(back.optimizers.size() == 2);
    CHECK(back.optimizers[1].step == 17);
    CHECK(back.optimizers[1].m(0) == 0.5);

    save_checkpoint(back.ensemble, &back.optimizers, dir / "b.ckpt");
    CHECK(testing_support::read_file(dir / "a.ckpt") == testing_support::read_file(dir / "b.ckpt"));

    save_checkpoint(ens, nullptr, dir / "c.ckpt");
    CHECK(load_checkpoint(dir / "c.ckpt").optimizers.empty());

    const std::string bytes = testing_support::read_file(dir / "a.ckpt");
    CHECK(bytes.substr(0, 8) == "TEMICKPT");
    testing_support::write_file(dir / "d.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS((void)load_checkpoint(dir / "d.ckpt"), IoError);
}
