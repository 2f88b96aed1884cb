#include "temi/objective.hpp"

#include "temi/error.hpp"
#include "temi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace temi {

namespace {

constexpr double kProbTol = 1e-6;

void require_prob(const Vector& p, const char* what) {
    if (p.size() == 0) throw ArgumentError(std::string(what) + ": empty probability vector");
    if (!p.allFinite() || p.minCoeff() < -1e-12 || std::abs(p.sum() - 1.0) > kProbTol)
        throw ArgumentError(std::string(what) + ": not a probability vector");
}

// Log-domain pmi for one direction. On return `resp` holds the normalized summands
// (zero when the clamp is active); d pmi / d log s_c = beta * resp_c.
double pmi_log_domain(const double* log_s, const double* log_t, const double* log_q, Eigen::Index classes, double beta,
                      double log_eps, double* resp) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < classes; ++c) {
        resp[c] = beta * (log_s[c] + log_t[c]) - log_q[c];
        mx = std::max(mx, resp[c]);
    }
    double lse = mx;
    if (std::isfinite(mx)) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < classes; ++c) sum += std::exp(resp[c] - mx);
        lse = mx + std::log(sum);
    }
    if (!(lse > log_eps)) {
        std::fill(resp, resp + classes, 0.0);
        return log_eps;
    }
    for (Eigen::Index c = 0; c < classes; ++c) resp[c] = std::exp(resp[c] - lse);
    return lse;
}

} // namespace

std::string_view to_string(LossMode mode) noexcept {
    switch (mode) {
    case LossMode::pmi: return "pmi";
    case LossMode::wpmi: return "wpmi";
    case LossMode::temi: return "temi";
    case LossMode::scan: return "scan";
    }
    return "unknown";
}

LossMode parse_loss_mode(std::string_view name) {
    if (name == "pmi") return LossMode::pmi;
    if (name == "wpmi") return LossMode::wpmi;
    if (name == "temi") return LossMode::temi;
    if (name == "scan") return LossMode::scan;
    throw ArgumentError("unknown loss '" + std::string(name) + "' (expected pmi, wpmi, temi or scan)");
}

void validate(const ObjectiveConfig& cfg) {
    require_arg(cfg.beta > 0.5 && cfg.beta <= 1.0, "beta must be in (0.5, 1], got " + std::to_string(cfg.beta));
    require_arg(cfg.marginal_momentum > 0.0 && cfg.marginal_momentum < 1.0, "marginal momentum must be in (0, 1)");
    require_arg(cfg.scan_lambda >= 0.0, "scan lambda must be >= 0");
    require_arg(cfg.eps > 0.0, "eps must be > 0");
}

ObjectiveState::ObjectiveState(const ObjectiveConfig& config, std::size_t heads, std::size_t classes)
    : cfg(config),
      q_marginal(Matrix::Constant(static_cast<Eigen::Index>(heads), static_cast<Eigen::Index>(classes),
                                  1.0 / static_cast<double>(classes))) {
    validate(cfg);
    require_arg(heads >= 1 && classes >= 2, "objective state: need heads >= 1 and classes >= 2");
}

double pmi(const Vector& p_student, const Vector& p_teacher, const Vector& q, double beta, double eps) {
    require_prob(p_student, "pmi");
    require_prob(p_teacher, "pmi");
    require_prob(q, "pmi");
    require_arg(p_student.size() == p_teacher.size() && p_student.size() == q.size(), "pmi: size mismatch");
    double sum = 0.0;
    for (Eigen::Index c = 0; c < q.size(); ++c) {
        const double num = std::pow(std::max(p_student(c), 0.0) * std::max(p_teacher(c), 0.0), beta);
        sum += num / std::max(q(c), eps);
    }
    return std::log(std::max(sum, eps));
}

double symmetrized_loss(const PairSide& x, const PairSide& x_prime, const ObjectiveState& state, std::size_t head) {
    require_arg(head < static_cast<std::size_t>(state.q_marginal.rows()), "symmetrized_loss: head out of range");
    const Vector q = state.q_marginal.row(static_cast<Eigen::Index>(head)).transpose();
    const double beta = state.cfg.beta;
    const double eps = state.cfg.eps;
    return -0.5 * (pmi(x.student, x_prime.teacher, q, beta, eps) + pmi(x_prime.student, x.teacher, q, beta, eps));
}

double instance_weight(const Vector& t_x, const Vector& t_x_prime) {
    require_arg(t_x.size() == t_x_prime.size(), "instance_weight: size mismatch");
    return std::clamp(t_x.dot(t_x_prime), 0.0, 1.0);
}

double temi_weight(std::span<const std::pair<Vector, Vector>> teacher_pairs) {
    require_arg(!teacher_pairs.empty(), "temi_weight: need at least one head");
    double sum = 0.0;
    for (const auto& [tx, txp] : teacher_pairs) sum += instance_weight(tx, txp);
    return sum / static_cast<double>(teacher_pairs.size());
}

void update_marginal(ObjectiveState& state, const Matrix& teacher_probs, std::size_t head) {
    require_arg(teacher_probs.rows() >= 1, "update_marginal: empty batch");
    require_arg(head < static_cast<std::size_t>(state.q_marginal.rows()), "update_marginal: head out of range");
    require_arg(teacher_probs.cols() == state.q_marginal.cols(), "update_marginal: class count mismatch");
    const double m = state.cfg.marginal_momentum;
    auto row = state.q_marginal.row(static_cast<Eigen::Index>(head));
    row = m * row + (1.0 - m) * teacher_probs.colwise().mean();
}

double entropy(const Vector& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double scan_loss(const Vector& s_x, const Vector& t_x_prime, const Vector& batch_mean_student, double lambda, double eps) {
    require_prob(s_x, "scan_loss");
    require_prob(t_x_prime, "scan_loss");
    require_prob(batch_mean_student, "scan_loss");
    const double consistency = -std::log(std::max(s_x.dot(t_x_prime), eps));
    return consistency - lambda * entropy(batch_mean_student);
}

BatchForward forward_pairs(const HeadEnsemble& ensemble, const Matrix& features, std::span<const IndexPair> pairs,
                           unsigned threads) {
    require_arg(!pairs.empty(), "forward_pairs: empty batch");
    const auto b = static_cast<Eigen::Index>(pairs.size());
    BatchForward out;
    out.inputs.resize(2 * b, features.cols());
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        require_arg(p.x < static_cast<std::size_t>(features.rows()) && p.x_prime < static_cast<std::size_t>(features.rows()),
                    "forward_pairs: pair index out of range");
        out.inputs.row(i) = features.row(static_cast<Eigen::Index>(p.x));
        out.inputs.row(b + i) = features.row(static_cast<Eigen::Index>(p.x_prime));
    }
    const std::size_t heads = ensemble.size();
    out.student.resize(heads);
    out.teacher.resize(heads);
    parallel_for(heads, threads, [&](std::size_t h) {
        out.student[h] = forward_batch(ensemble.heads[h].student, out.inputs, ensemble.tau);
        out.teacher[h] = forward_batch(ensemble.heads[h].teacher, out.inputs, ensemble.tau);
    });
    return out;
}

BatchLoss loss_and_grad(const BatchForward& fwd, const ObjectiveState& state, double tau, unsigned threads) {
    require_arg(tau > 0.0, "loss_and_grad: tau must be > 0");
    const std::size_t heads = fwd.student.size();
    require_arg(heads >= 1 && fwd.teacher.size() == heads, "loss_and_grad: missing head outputs");
    require_arg(static_cast<std::size_t>(state.q_marginal.rows()) == heads, "loss_and_grad: marginal rows != heads");
    const auto b = static_cast<Eigen::Index>(fwd.batch());
    const Eigen::Index classes = state.q_marginal.cols();
    require_arg(fwd.student.front().probs.cols() == classes, "loss_and_grad: class count mismatch");

    const ObjectiveConfig& cfg = state.cfg;
    const double log_eps = std::log(cfg.eps);
    const double inv_heads = 1.0 / static_cast<double>(heads);
    const double inv_batch = 1.0 / static_cast<double>(b);

    // Pair weights: per-head teacher agreement, shared by all heads under TEMI.
    Matrix weights = Matrix::Ones(static_cast<Eigen::Index>(heads), b);
    if (cfg.mode == LossMode::wpmi || cfg.mode == LossMode::temi) {
        for (std::size_t h = 0; h < heads; ++h) {
            const Matrix& t = fwd.teacher[h].probs;
            for (Eigen::Index i = 0; i < b; ++i)
                weights(static_cast<Eigen::Index>(h), i) = std::clamp(t.row(i).dot(t.row(b + i)), 0.0, 1.0);
        }
        if (cfg.mode == LossMode::temi) {
            const RowVector shared = weights.colwise().mean();
            weights.rowwise() = shared;
        }
    }

    BatchLoss out;
    out.head_loss.assign(heads, 0.0);
    out.mean_weight.assign(heads, 0.0);
    out.grad_logits.resize(heads);

    parallel_for(heads, threads, [&](std::size_t h) {
        const Matrix& ls = fwd.student[h].log_probs;
        const Matrix& sp = fwd.student[h].probs;
        const Matrix& lt = fwd.teacher[h].log_probs;
        Matrix& grad = out.grad_logits[h];
        grad = Matrix::Zero(2 * b, classes);
        std::vector<double> resp(static_cast<std::size_t>(classes));
        double loss = 0.0;

        if (cfg.mode == LossMode::scan) {
            // Symmetrized consistency on pair dot products, entropy bonus on the mean student output.
            const double scale = inv_heads * inv_batch * 0.5;
            const Vector zeros = Vector::Zero(classes);
            for (Eigen::Index i = 0; i < b; ++i) {
                for (int dir = 0; dir < 2; ++dir) {
                    const Eigen::Index srow = dir == 0 ? i : b + i;
                    const Eigen::Index trow = dir == 0 ? b + i : i;
                    const double val = pmi_log_domain(ls.row(srow).data(), lt.row(trow).data(), zeros.data(), classes, 1.0,
                                                      log_eps, resp.data());
                    loss += -0.5 * val;
                    for (Eigen::Index c = 0; c < classes; ++c)
                        grad(srow, c) += -scale / tau * (resp[static_cast<std::size_t>(c)] - (val > log_eps ? sp(srow, c) : 0.0));
                }
            }
            loss *= inv_batch;
            const Vector mean = sp.colwise().mean().transpose();
            loss -= cfg.scan_lambda * entropy(mean);
            // d(-lambda H(mean)) / d s_jc = lambda (log mean_c + 1) / 2B
            Matrix grad_probs(2 * b, classes);
            for (Eigen::Index c = 0; c < classes; ++c) {
                const double g = cfg.scan_lambda * (std::log(std::max(mean(c), cfg.eps)) + 1.0) / static_cast<double>(2 * b);
                grad_probs.col(c).setConstant(g * inv_heads);
            }
            grad += prob_grad_to_logit_grad(sp, grad_probs, tau);
            out.mean_weight[h] = 1.0;
        } else {
            Vector log_q(classes);
            for (Eigen::Index c = 0; c < classes; ++c)
                log_q(c) = std::log(std::max(state.q_marginal(static_cast<Eigen::Index>(h), c), cfg.eps));
            double weight_sum = 0.0;
            for (Eigen::Index i = 0; i < b; ++i) {
                const double w = weights(static_cast<Eigen::Index>(h), i);
                weight_sum += w;
                for (int dir = 0; dir < 2; ++dir) {
                    const Eigen::Index srow = dir == 0 ? i : b + i;
                    const Eigen::Index trow = dir == 0 ? b + i : i;
                    const double val = pmi_log_domain(ls.row(srow).data(), lt.row(trow).data(), log_q.data(), classes,
                                                      cfg.beta, log_eps, resp.data());
                    loss += -0.5 * w * val;
                    if (val > log_eps) {
                        // d pmi / d z_k = (beta / tau) (resp_k - s_k)
                        const double scale = -0.5 * w * inv_batch * inv_heads * cfg.beta / tau;
                        for (Eigen::Index c = 0; c < classes; ++c)
                            grad(srow, c) += scale * (resp[static_cast<std::size_t>(c)] - sp(srow, c));
                    }
                }
            }
            loss *= inv_batch;
            out.mean_weight[h] = weight_sum * inv_batch;
        }
        out.head_loss[h] = loss;
    });

    double total = 0.0;
    for (double l : out.head_loss) total += l;
    out.total = total * inv_heads;
    return out;
}

} // namespace temi
