#pragma once

#include "temi/feature_io.hpp"
#include "temi/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace temi {

/// Mined k-nearest-neighbor candidates per example, row-major n x k.
struct NeighborTable {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<std::int64_t> idx;
    std::vector<double> sim;

    [[nodiscard]] std::int64_t neighbor(std::size_t row, std::size_t j) const { return idx[row * k + j]; }
    [[nodiscard]] double similarity(std::size_t row, std::size_t j) const { return sim[row * k + j]; }
};

struct KnnOptions {
    bool include_self = false;
    unsigned threads = 1;
};

/// Exact top-k by cosine similarity. Ties go to the lower index.
[[nodiscard]] NeighborTable mine_knn(const FeatureSet& fs, std::size_t k, const KnnOptions& opts = {});

/// Fraction of (x, neighbor) entries whose ground-truth labels agree.
[[nodiscard]] double true_positive_rate(const NeighborTable& nt, const Labels& labels);

/// Checks index range, similarity range and per-row ordering. Throws ValidationError.
void validate(const NeighborTable& nt);

void save_neighbors(const NeighborTable& nt, const std::filesystem::path& path);
[[nodiscard]] NeighborTable load_neighbors(const std::filesystem::path& path);

} // namespace temi
