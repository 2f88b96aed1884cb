#pragma once

#include "temi/feature_io.hpp"
#include "temi/heads.hpp"
#include "temi/types.hpp"

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace temi {

enum class LossMode { pmi, wpmi, temi, scan };

[[nodiscard]] std::string_view to_string(LossMode mode) noexcept;
/// Parses "pmi", "wpmi", "temi" or "scan"; throws ArgumentError otherwise.
[[nodiscard]] LossMode parse_loss_mode(std::string_view name);

struct ObjectiveConfig {
    LossMode mode = LossMode::temi;
    double beta = 0.6;               // exponent on the pair numerator, (0.5, 1]
    double marginal_momentum = 0.9;  // EMA factor for the class marginal
    double scan_lambda = 4.0;        // entropy weight of the SCAN baseline
    double eps = 1e-8;               // clamp for denominators and log arguments
};

void validate(const ObjectiveConfig& cfg);

/// Per-head EMA class marginals plus the loss configuration.
struct ObjectiveState {
    ObjectiveConfig cfg;
    Matrix q_marginal; // heads x classes, rows sum to 1

    ObjectiveState() = default;
    /// Uniform 1/C marginals for every head.
    ObjectiveState(const ObjectiveConfig& config, std::size_t heads, std::size_t classes);
};

/// log sum_c (p_s(c) p_t(c))^beta / max(q(c), eps), with the log argument clamped below at eps.
[[nodiscard]] double pmi(const Vector& p_student, const Vector& p_teacher, const Vector& q, double beta, double eps = 1e-8);

/// Student/teacher probabilities of one example under one head.
struct PairSide {
    Vector student;
    Vector teacher;
};

/// -1/2 [pmi(s(x), t(x')) + pmi(s(x'), t(x))] using head `head`'s marginal.
[[nodiscard]] double symmetrized_loss(const PairSide& x, const PairSide& x_prime, const ObjectiveState& state, std::size_t head);

/// Teacher-teacher agreement sum_c t_x(c) t_x'(c).
[[nodiscard]] double instance_weight(const Vector& t_x, const Vector& t_x_prime);

/// Mean instance weight over heads; `teacher_pairs[j]` holds head j's (t_x, t_x').
[[nodiscard]] double temi_weight(std::span<const std::pair<Vector, Vector>> teacher_pairs);

/// q <- m q + (1 - m) * mean row of `teacher_probs`.
void update_marginal(ObjectiveState& state, const Matrix& teacher_probs, std::size_t head);

/// -log max(s_x . t_x', eps) - lambda * H(batch_mean_student).
[[nodiscard]] double scan_loss(const Vector& s_x, const Vector& t_x_prime, const Vector& batch_mean_student, double lambda,
                               double eps = 1e-8);

/// Shannon entropy (natural log) of a probability vector; zero entries contribute 0.
[[nodiscard]] double entropy(const Vector& p);

struct IndexPair {
    std::size_t x;
    std::size_t x_prime;
    friend bool operator==(const IndexPair&, const IndexPair&) = default;
};

/// Forward passes of every head over a pair batch. Rows [0, B) are the anchors x,
/// rows [B, 2B) the partners x'.
struct BatchForward {
    Matrix inputs;
    std::vector<ForwardCache> student;
    std::vector<ForwardCache> teacher;

    [[nodiscard]] std::size_t batch() const noexcept { return static_cast<std::size_t>(inputs.rows() / 2); }
};

[[nodiscard]] BatchForward forward_pairs(const HeadEnsemble& ensemble, const Matrix& features,
                                         std::span<const IndexPair> pairs, unsigned threads = 1);

struct BatchLoss {
    double total = 0.0;                 // mean over heads of the per-head batch mean
    std::vector<double> head_loss;      // per head, mean over the batch
    std::vector<double> mean_weight;    // per head, mean pair weight actually applied
    std::vector<Matrix> grad_logits;    // per head, d total / d student logits (pre-temperature), 2B x C
};

/// Loss of the configured mode and its gradient w.r.t. student logits. Teacher outputs,
/// marginals and pair weights are treated as constants.
[[nodiscard]] BatchLoss loss_and_grad(const BatchForward& fwd, const ObjectiveState& state, double tau, unsigned threads = 1);

} // namespace temi
