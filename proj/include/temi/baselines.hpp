#pragma once

#include "temi/feature_io.hpp"
#include "temi/types.hpp"

#include <cstdint>
#include <vector>

namespace temi {

struct KMeansConfig {
    std::size_t k = 2;
    std::size_t restarts = 10;
    std::size_t max_iters = 300;
    double tol = 1e-6; // relative inertia change that ends a restart
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct KMeansResult {
    Labels assignments;
    Matrix centroids;
    double inertia = 0.0;
    std::size_t best_restart = 0;
    std::size_t iterations = 0;
    std::vector<double> inertia_history; // winning restart, one entry per assignment step
};

/// Lloyd iterations from k-means++ seeding, Euclidean distance, best restart by inertia.
/// Empty clusters are reseeded with the points farthest from their centroids.
[[nodiscard]] KMeansResult kmeans(const FeatureSet& fs, const KMeansConfig& cfg);

struct ProbeConfig {
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    double eval_accuracy = 0.0;
    double train_accuracy = 0.0;
    double initial_loss = 0.0;     // full training-set cross-entropy before the first step
    std::vector<double> epoch_loss; // full training-set cross-entropy after each epoch
    std::size_t classes = 0;
};

/// Supervised softmax regression on frozen features (AdamW, cosine learning-rate decay).
[[nodiscard]] ProbeResult linear_probe(const FeatureSet& train_set, const FeatureSet& eval_set, const ProbeConfig& cfg = {});

} // namespace temi
