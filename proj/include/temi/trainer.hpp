#pragma once

#include "temi/feature_io.hpp"
#include "temi/heads.hpp"
#include "temi/knn.hpp"
#include "temi/objective.hpp"
#include "temi/rng.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace temi {

/// Training hyperparameters. Defaults follow the head-training table of the method
/// (AdamW 1e-4/1e-4, batch 512, tau 0.1, beta 0.6, 50 heads, teacher momentum 0.996,
/// 200 epochs with 20 warmup epochs, 50-NN pairs).
struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t warmup_epochs = 20;
    std::size_t batch_size = 512;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double teacher_momentum = 0.996;
    double marginal_momentum = 0.9;
    double beta = 0.6;
    double tau = 0.1;
    double scan_lambda = 4.0;
    std::size_t heads = 50;
    std::size_t knn_k = 50;
    std::size_t clusters = 0;
    std::size_t hidden1 = 512;
    std::size_t hidden2 = 512;
    std::uint64_t seed = 0;
    LossMode mode = LossMode::temi;
    double loss_smoothing = 0.99;
    unsigned threads = 1;
    /// JSON-lines log, one record per step. Empty disables logging.
    std::filesystem::path log_path;
};

void validate(const TrainConfig& cfg);

/// Desk-scale preset: 16 heads, 50 epochs, batch 128, warmup over the first tenth of the epochs.
void apply_desk_preset(TrainConfig& cfg);

struct TrainResult {
    HeadEnsemble ensemble;
    std::vector<OptimizerState> optimizers;
    ObjectiveState objective;
    std::size_t best_head = 0;
    std::vector<double> smoothed_loss;  // per head at the end of training
    Labels assignments;                 // argmax of the best teacher head
    Matrix probabilities;               // best teacher head, n x C
    std::vector<double> best_loss_curve; // smoothed loss of the final best head, one value per step
    std::size_t steps = 0;
    std::size_t warmup_steps = 0;
    double wall_seconds = 0.0;
};

/// For each anchor, draws x' uniformly from its k mined neighbors.
[[nodiscard]] std::vector<IndexPair> sample_pairs(const NeighborTable& nt, std::span<const std::size_t> batch, Rng& rng);

/// Linear warmup from 0 over `warmup_steps`, constant afterwards.
[[nodiscard]] double scheduled_lr(double base_lr, std::size_t step, std::size_t warmup_steps) noexcept;

/// Full self-distillation training run. `fs` should already be standardized.
[[nodiscard]] TrainResult train(const FeatureSet& fs, const NeighborTable& nt, const TrainConfig& cfg);

struct Prediction {
    Labels assignments;
    Matrix probabilities;
};

/// Teacher probabilities of head `head` on every example; argmax with ties to the lowest class.
[[nodiscard]] Prediction predict(const HeadEnsemble& ensemble, std::size_t head, const FeatureSet& fs);

/// Row-wise argmax, lowest index on ties.
[[nodiscard]] Labels argmax_rows(const Matrix& probs);

} // namespace temi
