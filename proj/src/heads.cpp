#include "temi/heads.hpp"

#include "binary_io.hpp"
#include "temi/error.hpp"
#include "temi/rng.hpp"

#include <cmath>

namespace temi {

namespace {

constexpr std::string_view kMagic = "TEMICKPT";
constexpr std::uint32_t kVersion = 1;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void activate(const Matrix& z, Matrix& a, Matrix& cdf, Activation act) {
    if (act == Activation::identity) {
        a = z;
        return;
    }
    a.resize(z.rows(), z.cols());
    cdf.resize(z.rows(), z.cols());
    const double* zp = z.data();
    double* ap = a.data();
    double* cp = cdf.data();
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        cp[i] = 0.5 * (1.0 + std::erf(zp[i] * kInvSqrt2));
        ap[i] = zp[i] * cp[i];
    }
}

// grad <- grad * act'(z), elementwise.
void activation_backward(const Matrix& z, const Matrix& cdf, Matrix& grad, Activation act) {
    if (act == Activation::identity) return;
    const double* zp = z.data();
    const double* cp = cdf.data();
    double* gp = grad.data();
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double x = zp[i];
        gp[i] *= cp[i] + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    }
}

double truncated_normal(Rng& rng, double stddev) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    double z = gauss(rng);
    while (std::abs(z) > 2.0) z = gauss(rng);
    return z * stddev;
}

void fill_weights(MatrixMap w, std::size_t fan_in, Rng& rng) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = truncated_normal(rng, stddev);
}

} // namespace

void validate(const HeadArch& arch) {
    require_arg(arch.input_dim >= 1, "head arch: input_dim must be >= 1");
    require_arg(arch.hidden1 >= 1 && arch.hidden2 >= 1, "head arch: hidden sizes must be >= 1");
    require_arg(arch.classes >= 2, "head arch: classes must be >= 2");
}

HeadParams::HeadParams(const HeadArch& arch) : arch_(arch), values_(Vector::Zero(static_cast<Eigen::Index>(arch.param_count()))) {}

ForwardCache forward_batch(const HeadParams& params, const Matrix& x, double tau) {
    require_arg(tau > 0.0, "forward: tau must be > 0");
    require_arg(static_cast<std::size_t>(x.cols()) == params.arch().input_dim, "forward: input dimension mismatch");
    if (!x.allFinite()) throw NumericError("forward: non-finite input");
    const Activation act = params.arch().activation;

    ForwardCache c;
    c.z1.noalias() = x * params.w1();
    c.z1.rowwise() += params.b1();
    activate(c.z1, c.a1, c.cdf1, act);
    c.z2.noalias() = c.a1 * params.w2();
    c.z2.rowwise() += params.b2();
    activate(c.z2, c.a2, c.cdf2, act);
    c.logits.noalias() = c.a2 * params.w3();
    c.logits.rowwise() += params.b3();

    const double inv_tau = 1.0 / tau;
    c.log_probs.resize(c.logits.rows(), c.logits.cols());
    c.probs.resize(c.logits.rows(), c.logits.cols());
    for (Eigen::Index i = 0; i < c.logits.rows(); ++i) {
        const double mx = c.logits.row(i).maxCoeff();
        auto shifted = ((c.logits.row(i).array() - mx) * inv_tau).eval();
        const double lse = std::log(shifted.exp().sum());
        c.log_probs.row(i) = shifted - lse;
        c.probs.row(i) = c.log_probs.row(i).array().exp();
    }
    return c;
}

Vector forward(const HeadParams& params, const Vector& x, double tau) {
    Matrix row = x.transpose();
    return forward_batch(params, row, tau).probs.row(0).transpose();
}

Vector softmax(const Vector& logits, double tau) {
    require_arg(tau > 0.0, "softmax: tau must be > 0");
    const Eigen::ArrayXd shifted = (logits.array() - logits.maxCoeff()) / tau;
    const Eigen::ArrayXd e = shifted.exp();
    return (e / e.sum()).matrix();
}

HeadParams backward(const HeadParams& params, const ForwardCache& cache, const Matrix& x, const Matrix& grad_logits) {
    const HeadArch& arch = params.arch();
    require_arg(grad_logits.rows() == x.rows() && static_cast<std::size_t>(grad_logits.cols()) == arch.classes,
                "backward: upstream gradient shape mismatch");
    require_arg(cache.logits.rows() == x.rows(), "backward: cache does not match batch");

    HeadParams g(arch);
    g.w3().noalias() = cache.a2.transpose() * grad_logits;
    g.b3() = grad_logits.colwise().sum();

    Matrix d2 = grad_logits * params.w3().transpose();
    activation_backward(cache.z2, cache.cdf2, d2, arch.activation);
    g.w2().noalias() = cache.a1.transpose() * d2;
    g.b2() = d2.colwise().sum();

    Matrix d1 = d2 * params.w2().transpose();
    activation_backward(cache.z1, cache.cdf1, d1, arch.activation);
    g.w1().noalias() = x.transpose() * d1;
    g.b1() = d1.colwise().sum();
    return g;
}

Matrix prob_grad_to_logit_grad(const Matrix& probs, const Matrix& grad_probs, double tau) {
    require_arg(probs.rows() == grad_probs.rows() && probs.cols() == grad_probs.cols(), "prob_grad_to_logit_grad: shape mismatch");
    Matrix out(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double inner = probs.row(i).dot(grad_probs.row(i));
        out.row(i) = probs.row(i).array() * (grad_probs.row(i).array() - inner) / tau;
    }
    return out;
}

HeadEnsemble init_ensemble(const HeadArch& arch, std::size_t heads, std::uint64_t seed, double tau) {
    validate(arch);
    require_arg(heads >= 1, "init_ensemble: need at least one head");
    require_arg(tau > 0.0, "init_ensemble: tau must be > 0");
    HeadEnsemble ens;
    ens.arch = arch;
    ens.tau = tau;
    ens.heads.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Rng rng(derive_seed(seed, streams::head_init + h));
        HeadParams p(arch);
        fill_weights(p.w1(), arch.input_dim, rng);
        fill_weights(p.w2(), arch.hidden1, rng);
        fill_weights(p.w3(), arch.hidden2, rng);
        ens.heads.push_back({p, p});
    }
    return ens;
}

void teacher_ema_update(HeadEnsemble& ensemble, double momentum) {
    require_arg(momentum > 0.0 && momentum < 1.0, "teacher_ema_update: momentum must be in (0, 1)");
    const double rate = 1.0 - momentum;
    for (auto& pair : ensemble.heads) {
        Vector& t = pair.teacher.flat();
        const Vector& s = pair.student.flat();
        t.array() += rate * (s.array() - t.array());
    }
}

void adamw_step(OptimizerState& opt, Vector& params, const Vector& grads, std::optional<double> lr) {
    require_arg(params.size() == grads.size() && opt.m.size() == params.size() && opt.v.size() == params.size(),
                "adamw_step: parameter/gradient/state size mismatch");
    const AdamWConfig& h = opt.hyper;
    const double rate = lr.value_or(h.lr);
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);

    opt.m = h.beta1 * opt.m + (1.0 - h.beta1) * grads;
    opt.v = h.beta2 * opt.v + (1.0 - h.beta2) * grads.cwiseAbs2();
    params.array() -= rate * h.weight_decay * params.array();
    params.array() -= rate * (opt.m.array() / bc1) / ((opt.v.array() / bc2).sqrt() + h.eps);
}

void adamw_step(OptimizerState& opt, HeadParams& params, const HeadParams& grads, std::optional<double> lr) {
    require_arg(params.arch() == grads.arch(), "adamw_step: gradient arch mismatch");
    adamw_step(opt, params.flat(), grads.flat(), lr);
}

void save_checkpoint(const HeadEnsemble& ensemble, const std::vector<OptimizerState>* optimizers,
                     const std::filesystem::path& path) {
    const HeadArch& a = ensemble.arch;
    detail::BinaryWriter w(path.string());
    w.magic(kMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.input_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.hidden1));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.hidden2));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.classes));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.activation));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ensemble.size()));
    w.put<double>(ensemble.tau);
    for (const auto& pair : ensemble.heads) {
        for (double v : pair.student.flat()) w.put<float>(static_cast<float>(v));
        for (double v : pair.teacher.flat()) w.put<float>(static_cast<float>(v));
    }
    const bool with_opt = optimizers != nullptr && !optimizers->empty();
    w.put<std::uint32_t>(with_opt ? 1u : 0u);
    if (with_opt) {
        require_arg(optimizers->size() == ensemble.size(), "save_checkpoint: one optimizer state per head required");
        const AdamWConfig& h = optimizers->front().hyper;
        w.put<double>(h.lr);
        w.put<double>(h.weight_decay);
        w.put<double>(h.beta1);
        w.put<double>(h.beta2);
        w.put<double>(h.eps);
        for (const auto& o : *optimizers) {
            w.put<std::uint64_t>(o.step);
            for (double v : o.m) w.put<float>(static_cast<float>(v));
            for (double v : o.v) w.put<float>(static_cast<float>(v));
        }
    }
    w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    detail::BinaryReader r(path.string());
    r.expect_magic(kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError(path.string() + ": unsupported TEMICKPT version " + std::to_string(version));
    Checkpoint ck;
    HeadArch& a = ck.ensemble.arch;
    a.input_dim = r.get<std::uint32_t>();
    a.hidden1 = r.get<std::uint32_t>();
    a.hidden2 = r.get<std::uint32_t>();
    a.classes = r.get<std::uint32_t>();
    const auto act = r.get<std::uint32_t>();
    if (act > static_cast<std::uint32_t>(Activation::identity)) throw FormatError(path.string() + ": unknown activation");
    a.activation = static_cast<Activation>(act);
    const auto heads = r.get<std::uint32_t>();
    ck.ensemble.tau = r.get<double>();
    try {
        validate(a);
    } catch (const ArgumentError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (heads == 0 || !(ck.ensemble.tau > 0.0)) throw FormatError(path.string() + ": invalid head count or tau");

    auto read_vec = [&](Vector& v) {
        for (auto& x : v) x = r.get<float>();
    };
    for (std::uint32_t h = 0; h < heads; ++h) {
        HeadPair pair{HeadParams(a), HeadParams(a)};
        read_vec(pair.student.flat());
        read_vec(pair.teacher.flat());
        ck.ensemble.heads.push_back(std::move(pair));
    }
    if (r.get<std::uint32_t>() == 1u) {
        AdamWConfig hyper;
        hyper.lr = r.get<double>();
        hyper.weight_decay = r.get<double>();
        hyper.beta1 = r.get<double>();
        hyper.beta2 = r.get<double>();
        hyper.eps = r.get<double>();
        for (std::uint32_t h = 0; h < heads; ++h) {
            OptimizerState o(hyper, a.param_count());
            o.step = r.get<std::uint64_t>();
            read_vec(o.m);
            read_vec(o.v);
            ck.optimizers.push_back(std::move(o));
        }
    }
    if (!r.at_eof()) throw FormatError(path.string() + ": trailing bytes after payload");
    return ck;
}

} // namespace temi
