#include "temi/theorem.hpp"

#include "temi/error.hpp"
#include "temi/metrics.hpp"

#include <cmath>
#include <limits>

namespace temi {

namespace {

constexpr double kClamp = 1e-8;
constexpr double kOneHotTol = 1e-3;

Vector dirichlet_ones(std::size_t k, Rng& rng) {
    std::exponential_distribution<double> expo(1.0);
    Vector v(static_cast<Eigen::Index>(k));
    for (auto& x : v) x = expo(rng) + 1e-3;
    return v / v.sum();
}

Vector class_occupancy(const DiscreteModel& model, const Matrix& classifier) {
    return (model.p_x.transpose() * classifier).transpose();
}

void check_classifier(const DiscreteModel& model, const Matrix& classifier) {
    require_arg(static_cast<std::size_t>(classifier.rows()) == model.n_x() && classifier.cols() >= 1,
                "classifier must have one row per example");
    for (Eigen::Index i = 0; i < classifier.rows(); ++i)
        require_arg(classifier.row(i).minCoeff() >= 0.0 && std::abs(classifier.row(i).sum() - 1.0) < 1e-9,
                    "classifier rows must be distributions");
}

Labels row_argmax(const Matrix& m) {
    Labels out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Eigen::Index arg = 0;
        m.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(arg);
    }
    return out;
}

Matrix row_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - mx).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

void finish_verdict(const DiscreteModel& model, TheoremVerdict& v) {
    const Labels truth = row_argmax(model.class_given_x);
    const Labels pred = row_argmax(v.classifier);
    v.matched_accuracy = hungarian_acc(pred, truth).acc;
    v.rows_one_hot = true;
    for (Eigen::Index i = 0; i < v.classifier.rows(); ++i)
        if (v.classifier.row(i).maxCoeff() < 1.0 - kOneHotTol) v.rows_one_hot = false;
    v.mutual_information = pair_mutual_information(model);
    v.kl_gap = pair_kl(model, v.classifier);
    v.recovered = !v.optimizer_failed && v.matched_accuracy == 1.0 && v.rows_one_hot;
}

TheoremVerdict exhaustive_search(const DiscreteModel& model) {
    const std::size_t n = model.n_x();
    const std::size_t c = model.classes();
    require_arg(n <= 10 && c <= 3, "exhaustive theorem check supports n_x <= 10 and C <= 3");
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= c;

    TheoremVerdict v;
    v.objective = -std::numeric_limits<double>::infinity();
    Matrix q = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    for (std::size_t code = 0; code < total; ++code) {
        q.setZero();
        std::size_t rest = code;
        for (std::size_t i = 0; i < n; ++i, rest /= c) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(rest % c)) = 1.0;
        const double value = exact_expected_pmi(model, q).value;
        if (value > v.objective) {
            v.objective = value;
            v.classifier = q;
        }
    }
    v.candidates = total;
    return v;
}

TheoremVerdict gradient_search(const DiscreteModel& model, const TheoremOptions& opts) {
    require_arg(opts.restarts >= 1 && opts.iterations >= 1 && opts.step > 0.0, "gradient theorem check: invalid options");
    const auto n = static_cast<Eigen::Index>(model.n_x());
    const auto c = static_cast<Eigen::Index>(model.classes());
    TheoremVerdict v;
    v.objective = -std::numeric_limits<double>::infinity();
    bool any_ok = false;
    for (std::size_t r = 0; r < opts.restarts; ++r) {
        Rng rng(derive_seed(opts.seed, streams::theorem + r));
        std::normal_distribution<double> gauss(0.0, 1.0);
        Matrix logits(n, c);
        for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);

        double best = -std::numeric_limits<double>::infinity();
        std::size_t since_improvement = 0;
        bool stalled = false;
        Matrix q;
        for (std::size_t it = 0; it < opts.iterations; ++it) {
            q = row_softmax(logits);
            const double value = exact_expected_pmi(model, q).value;
            if (value > best + 1e-15) {
                best = value;
                since_improvement = 0;
            } else if (++since_improvement >= opts.patience) {
                stalled = true;
                break;
            }
            const Matrix g = expected_pmi_gradient(model, q);
            // Softmax chain rule; rows are rescaled by 1/p(x) so every example moves at a comparable rate.
            for (Eigen::Index i = 0; i < n; ++i) {
                const double inner = q.row(i).dot(g.row(i));
                logits.row(i).array() += opts.step / model.p_x(i) * q.row(i).array() * (g.row(i).array() - inner);
            }
        }
        q = row_softmax(logits);
        const double final_value = exact_expected_pmi(model, q).value;
        if (!stalled) any_ok = true;
        if (final_value > v.objective) {
            v.objective = final_value;
            v.classifier = q;
        }
    }
    v.optimizer_failed = !any_ok;
    v.candidates = opts.restarts;
    return v;
}

} // namespace

DiscreteModel make_model(const Vector& prior, const Matrix& x_given_c) {
    require_arg(prior.size() >= 1 && x_given_c.rows() == prior.size() && x_given_c.cols() >= 1,
                "model: prior length must equal the number of rows of p(x|c)");
    require_arg(prior.minCoeff() >= 0.0 && std::abs(prior.sum() - 1.0) < 1e-9, "model: prior must be a distribution");
    for (Eigen::Index c = 0; c < x_given_c.rows(); ++c)
        require_arg(x_given_c.row(c).minCoeff() >= 0.0 && std::abs(x_given_c.row(c).sum() - 1.0) < 1e-9,
                    "model: p(x|c) rows must be distributions");
    DiscreteModel m;
    m.prior = prior;
    m.x_given_c = x_given_c;
    m.p_x = (prior.transpose() * x_given_c).transpose();
    require_arg(m.p_x.minCoeff() > 0.0, "model: every example needs p(x) > 0");
    const auto n = x_given_c.cols();
    m.class_given_x.resize(n, prior.size());
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index c = 0; c < prior.size(); ++c) m.class_given_x(x, c) = x_given_c(c, x) * prior(c) / m.p_x(x);
    // p(x, x') = sum_c p(x|c) p(c) p(x'|c)
    m.joint = x_given_c.transpose() * prior.asDiagonal() * x_given_c;
    m.one_hot = true;
    for (Eigen::Index x = 0; x < n; ++x)
        if (m.class_given_x.row(x).maxCoeff() < 1.0 - 1e-12) m.one_hot = false;
    return m;
}

DiscreteModel make_one_hot_model(std::size_t n_x, const Vector& prior) {
    const auto classes = static_cast<std::size_t>(prior.size());
    require_arg(classes >= 1 && n_x >= classes, "one-hot model: need n_x >= C");
    Matrix x_given_c = Matrix::Zero(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(n_x));
    std::size_t start = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t size = n_x / classes + (c < n_x % classes ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i)
            x_given_c(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(start + i)) = 1.0 / static_cast<double>(size);
        start += size;
    }
    return make_model(prior, x_given_c);
}

DiscreteModel make_random_model(std::size_t n_x, std::size_t classes, Rng& rng) {
    require_arg(n_x >= 1 && classes >= 1, "random model: empty shape");
    const Vector prior = dirichlet_ones(classes, rng);
    Matrix x_given_c(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(n_x));
    for (std::size_t c = 0; c < classes; ++c) x_given_c.row(static_cast<Eigen::Index>(c)) = dirichlet_ones(n_x, rng).transpose();
    return make_model(prior, x_given_c);
}

Matrix random_classifier(std::size_t n_x, std::size_t classes, Rng& rng) {
    Matrix q(static_cast<Eigen::Index>(n_x), static_cast<Eigen::Index>(classes));
    for (std::size_t i = 0; i < n_x; ++i) q.row(static_cast<Eigen::Index>(i)) = dirichlet_ones(classes, rng).transpose();
    return q;
}

ExpectedPmi exact_expected_pmi(const DiscreteModel& model, const Matrix& classifier) {
    check_classifier(model, classifier);
    const Vector occ = class_occupancy(model, classifier);
    const auto n = static_cast<Eigen::Index>(model.n_x());
    ExpectedPmi out;
    for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index y = 0; y < n; ++y) {
            const double p = model.joint(x, y);
            if (p == 0.0) continue;
            double inner = 0.0;
            for (Eigen::Index c = 0; c < classifier.cols(); ++c) {
                const double num = classifier(x, c) * classifier(y, c);
                if (num == 0.0) continue;
                inner += num / std::max(occ(c), kClamp);
            }
            if (inner <= 0.0) {
                out.clamped = true;
                inner = kClamp;
            }
            out.value += p * std::log(inner);
        }
    }
    return out;
}

double pair_mutual_information(const DiscreteModel& model) {
    const auto n = static_cast<Eigen::Index>(model.n_x());
    double mi = 0.0;
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index y = 0; y < n; ++y) {
            const double p = model.joint(x, y);
            if (p > 0.0) mi += p * std::log(p / (model.p_x(x) * model.p_x(y)));
        }
    return mi;
}

double pair_kl(const DiscreteModel& model, const Matrix& classifier) {
    check_classifier(model, classifier);
    const Vector occ = class_occupancy(model, classifier);
    const auto n = static_cast<Eigen::Index>(model.n_x());
    const auto classes = classifier.cols();
    // q(x|c) = q(c|x) p(x) / q(c), then q(x, x') = sum_c q(x|c) q(x'|c) q(c).
    Matrix x_given_c = Matrix::Zero(classes, n);
    for (Eigen::Index c = 0; c < classes; ++c)
        if (occ(c) > 0.0)
            for (Eigen::Index x = 0; x < n; ++x) x_given_c(c, x) = classifier(x, c) * model.p_x(x) / occ(c);
    const Matrix q_joint = x_given_c.transpose() * occ.asDiagonal() * x_given_c;
    double kl = 0.0;
    for (Eigen::Index x = 0; x < n; ++x)
        for (Eigen::Index y = 0; y < n; ++y) {
            const double p = model.joint(x, y);
            if (p == 0.0) continue;
            const double q = q_joint(x, y);
            if (q <= 0.0) return std::numeric_limits<double>::infinity();
            kl += p * std::log(p / q);
        }
    return kl;
}

LemmaCheck lemma_check(const DiscreteModel& model, const Matrix& classifier) {
    LemmaCheck out;
    out.lhs = exact_expected_pmi(model, classifier).value;
    out.mi = pair_mutual_information(model);
    out.kl = pair_kl(model, classifier);
    out.residual = std::abs(out.lhs - (out.mi - out.kl));
    return out;
}

Matrix expected_pmi_gradient(const DiscreteModel& model, const Matrix& classifier) {
    check_classifier(model, classifier);
    const Vector occ = class_occupancy(model, classifier).cwiseMax(kClamp);
    const Matrix scaled = classifier * occ.cwiseInverse().asDiagonal(); // Q_xc / q_c
    Matrix ratio = scaled * classifier.transpose();                     // r(x, x')
    Matrix a = model.joint.cwiseQuotient(ratio.cwiseMax(kClamp));       // p(x, x') / r(x, x')
    // dF/dQ_yc = 2 sum_x' a(y,x') Q_x'c / q_c - p_y sum_{x,x'} a(x,x') Q_xc Q_x'c / q_c^2
    Matrix grad = 2.0 * (a * classifier) * occ.cwiseInverse().asDiagonal();
    const Vector diag = (classifier.transpose() * a * classifier).diagonal();
    const Vector coeff = diag.cwiseQuotient(occ.cwiseAbs2());
    grad -= model.p_x * coeff.transpose();
    return grad;
}

std::string_view to_string(TheoremSearch s) noexcept { return s == TheoremSearch::exhaustive ? "exhaustive" : "gradient"; }

TheoremVerdict theorem_check(const DiscreteModel& model, TheoremSearch search, const TheoremOptions& opts) {
    TheoremVerdict v = search == TheoremSearch::exhaustive ? exhaustive_search(model) : gradient_search(model, opts);
    finish_verdict(model, v);
    return v;
}

} // namespace temi
