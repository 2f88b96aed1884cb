#pragma once

#include "temi/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace temi {

/// Dense N x D embedding matrix with optional ground-truth labels.
///
/// Values are held in double precision in memory. The on-disk TEMIFEAT format stores
/// float32, so anything loaded from a file round-trips byte-for-byte through save/load.
struct FeatureSet {
    Matrix data;
    std::optional<Labels> labels;
    std::string meta;

    [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(data.rows()); }
    [[nodiscard]] std::size_t d() const noexcept { return static_cast<std::size_t>(data.cols()); }
    [[nodiscard]] bool has_labels() const noexcept { return labels.has_value(); }
    /// Number of ground-truth classes (max label + 1), or 0 without labels.
    [[nodiscard]] int num_classes() const;
};

/// Throws ValidationError if any FeatureSet invariant is broken.
void validate(const FeatureSet& fs);

struct SynthConfig {
    std::size_t n_per_class = 250;
    int classes = 8;
    std::size_t dim = 64;
    double separation = 6.0;
    double noise = 1.0;
    std::uint64_t seed = 1;
    double stretch = 0.0;         // extra std (in units of noise) along per-class random directions
    std::size_t stretch_dims = 2; // number of such directions per class
};

/// Gaussian blobs: centroids uniform on a sphere of radius `separation`, isotropic noise.
/// With stretch > 0 each class is also elongated along `stretch_dims` random unit directions.
/// Values are rounded to float32 so the result is exactly representable on disk.
[[nodiscard]] FeatureSet generate_synthetic(const SynthConfig& cfg);

/// Per-dimension statistics used by standardization.
struct Standardization {
    Vector mean;
    Vector scale; // population std; 1 where the std is below 1e-12
};

[[nodiscard]] Standardization compute_standardization(const FeatureSet& fs);
[[nodiscard]] FeatureSet apply_standardization(const FeatureSet& fs, const Standardization& st);
/// Zero mean, unit population std per column, statistics from `fs` itself.
[[nodiscard]] FeatureSet standardize(const FeatureSet& fs);

[[nodiscard]] FeatureSet load_features(const std::filesystem::path& path);
void save_features(const FeatureSet& fs, const std::filesystem::path& path);

/// CSV with header `f0,...,f{d-1}[,label]`. Meant for tiny fixtures.
[[nodiscard]] FeatureSet load_features_csv(const std::filesystem::path& path);

/// Dispatches on content: TEMIFEAT magic, otherwise CSV.
[[nodiscard]] FeatureSet load_features_any(const std::filesystem::path& path);

} // namespace temi
