#pragma once

#include "temi/feature_io.hpp"
#include "temi/knn.hpp"
#include "temi/metrics.hpp"
#include "temi/trainer.hpp"

#include <optional>
#include <span>
#include <vector>

namespace temi {

struct BetaScanRow {
    double beta = 0.0;
    double marginal_entropy = 0.0;    // H(q(c)) of the best teacher head
    double conditional_entropy = 0.0; // mean H(q(c|x))
    double kl_to_uniform = 0.0;
    double max_cluster_fraction = 0.0;
    std::optional<double> acc;        // when ground truth is available
    std::size_t best_head = 0;
};

/// One training run per beta (same seed and config otherwise), reporting the entropy trade-off.
[[nodiscard]] std::vector<BetaScanRow> beta_scan(const FeatureSet& fs, const NeighborTable& nt, const TrainConfig& cfg,
                                                 std::span<const double> betas);

} // namespace temi
