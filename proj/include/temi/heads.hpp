#pragma once

#include "temi/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace temi {

enum class Activation : std::uint32_t { gelu = 0, identity = 1 };

/// Shape of one clustering head: input -> hidden1 -> hidden2 -> classes.
struct HeadArch {
    std::size_t input_dim = 0;
    std::size_t hidden1 = 512;
    std::size_t hidden2 = 512;
    std::size_t classes = 0;
    Activation activation = Activation::gelu;

    [[nodiscard]] std::size_t param_count() const noexcept {
        return input_dim * hidden1 + hidden1 + hidden1 * hidden2 + hidden2 + hidden2 * classes + classes;
    }
    friend bool operator==(const HeadArch&, const HeadArch&) = default;
};

void validate(const HeadArch& arch);

/// Parameters of a three-layer feed-forward head, stored as one flat vector.
/// The same type carries parameter gradients.
class HeadParams {
public:
    HeadParams() = default;
    explicit HeadParams(const HeadArch& arch);

    [[nodiscard]] const HeadArch& arch() const noexcept { return arch_; }
    [[nodiscard]] Vector& flat() noexcept { return values_; }
    [[nodiscard]] const Vector& flat() const noexcept { return values_; }

    MatrixMap w1() { return matrix(0, arch_.input_dim, arch_.hidden1); }
    MatrixMap w2() { return matrix(off_w2(), arch_.hidden1, arch_.hidden2); }
    MatrixMap w3() { return matrix(off_w3(), arch_.hidden2, arch_.classes); }
    Eigen::Map<RowVector> b1() { return vec(off_b1(), arch_.hidden1); }
    Eigen::Map<RowVector> b2() { return vec(off_b2(), arch_.hidden2); }
    Eigen::Map<RowVector> b3() { return vec(off_b3(), arch_.classes); }

    [[nodiscard]] ConstMatrixMap w1() const { return matrix(0, arch_.input_dim, arch_.hidden1); }
    [[nodiscard]] ConstMatrixMap w2() const { return matrix(off_w2(), arch_.hidden1, arch_.hidden2); }
    [[nodiscard]] ConstMatrixMap w3() const { return matrix(off_w3(), arch_.hidden2, arch_.classes); }
    [[nodiscard]] Eigen::Map<const RowVector> b1() const { return vec(off_b1(), arch_.hidden1); }
    [[nodiscard]] Eigen::Map<const RowVector> b2() const { return vec(off_b2(), arch_.hidden2); }
    [[nodiscard]] Eigen::Map<const RowVector> b3() const { return vec(off_b3(), arch_.classes); }

private:
    [[nodiscard]] std::size_t off_b1() const noexcept { return arch_.input_dim * arch_.hidden1; }
    [[nodiscard]] std::size_t off_w2() const noexcept { return off_b1() + arch_.hidden1; }
    [[nodiscard]] std::size_t off_b2() const noexcept { return off_w2() + arch_.hidden1 * arch_.hidden2; }
    [[nodiscard]] std::size_t off_w3() const noexcept { return off_b2() + arch_.hidden2; }
    [[nodiscard]] std::size_t off_b3() const noexcept { return off_w3() + arch_.hidden2 * arch_.classes; }

    MatrixMap matrix(std::size_t off, std::size_t r, std::size_t c) {
        return {values_.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
    }
    [[nodiscard]] ConstMatrixMap matrix(std::size_t off, std::size_t r, std::size_t c) const {
        return {values_.data() + off, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
    }
    Eigen::Map<RowVector> vec(std::size_t off, std::size_t len) {
        return {values_.data() + off, static_cast<Eigen::Index>(len)};
    }
    [[nodiscard]] Eigen::Map<const RowVector> vec(std::size_t off, std::size_t len) const {
        return {values_.data() + off, static_cast<Eigen::Index>(len)};
    }

    HeadArch arch_{};
    Vector values_;
};

/// Intermediate activations of a batched forward pass, kept for the reverse pass.
struct ForwardCache {
    Matrix z1, a1, z2, a2;
    Matrix cdf1, cdf2; // Phi(z) for GELU layers, empty for identity
    Matrix logits;    // pre-temperature
    Matrix log_probs; // log softmax(logits / tau)
    Matrix probs;
};

/// Batched forward pass over the rows of `x`.
[[nodiscard]] ForwardCache forward_batch(const HeadParams& params, const Matrix& x, double tau);

/// Class probabilities softmax(h(x) / tau) for a single input.
[[nodiscard]] Vector forward(const HeadParams& params, const Vector& x, double tau);

/// Temperature softmax of raw logits with max subtraction.
[[nodiscard]] Vector softmax(const Vector& logits, double tau);

/// Reverse pass. `grad_logits` is dLoss/d(pre-temperature logits), one row per input row.
/// Gradients are summed over the batch.
[[nodiscard]] HeadParams backward(const HeadParams& params, const ForwardCache& cache, const Matrix& x,
                                  const Matrix& grad_logits);

/// Converts dLoss/d(probs) into dLoss/d(logits) through the temperature softmax Jacobian.
[[nodiscard]] Matrix prob_grad_to_logit_grad(const Matrix& probs, const Matrix& grad_probs, double tau);

struct HeadPair {
    HeadParams student;
    HeadParams teacher;
};

struct HeadEnsemble {
    HeadArch arch;
    double tau = 0.1;
    std::vector<HeadPair> heads;

    [[nodiscard]] std::size_t size() const noexcept { return heads.size(); }
};

/// Truncated-normal weights (std 1/sqrt(fan_in), cut at 2 std), zero biases, teacher = student.
/// Head h draws from its own stream derived from `seed`.
[[nodiscard]] HeadEnsemble init_ensemble(const HeadArch& arch, std::size_t heads, std::uint64_t seed, double tau = 0.1);

/// teacher <- momentum * teacher + (1 - momentum) * student, for every head.
void teacher_ema_update(HeadEnsemble& ensemble, double momentum);

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamWConfig hyper;
    Vector m;
    Vector v;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(const AdamWConfig& cfg, std::size_t params) : hyper(cfg), m(Vector::Zero(static_cast<Eigen::Index>(params))), v(m) {}
};

/// One decoupled-weight-decay Adam step with bias correction. `lr` overrides hyper.lr (schedules).
void adamw_step(OptimizerState& opt, Vector& params, const Vector& grads, std::optional<double> lr = std::nullopt);
void adamw_step(OptimizerState& opt, HeadParams& params, const HeadParams& grads, std::optional<double> lr = std::nullopt);

void save_checkpoint(const HeadEnsemble& ensemble, const std::vector<OptimizerState>* optimizers,
                     const std::filesystem::path& path);

struct Checkpoint {
    HeadEnsemble ensemble;
    std::vector<OptimizerState> optimizers; // empty when the file has no optimizer section
};

[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace temi
