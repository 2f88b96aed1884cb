#pragma once

#include "temi/rng.hpp"
#include "temi/types.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace temi {

/// Finite generative model: c ~ prior, x ~ p(x|c). Pairs (x, x') share a class draw.
struct DiscreteModel {
    Vector prior;          // C
    Matrix x_given_c;      // C x n_x, rows are distributions
    Vector p_x;            // n_x
    Matrix class_given_x;  // n_x x C
    Matrix joint;          // n_x x n_x, p(x, x') = sum_c p(x|c) p(x'|c) p(c)
    bool one_hot = false;  // every x has exactly one class with p(c|x) = 1

    [[nodiscard]] std::size_t n_x() const noexcept { return static_cast<std::size_t>(x_given_c.cols()); }
    [[nodiscard]] std::size_t classes() const noexcept { return static_cast<std::size_t>(prior.size()); }
};

/// Derives p(x), p(c|x) and the pair joint from a prior and class-conditional table.
[[nodiscard]] DiscreteModel make_model(const Vector& prior, const Matrix& x_given_c);

/// Examples split into contiguous blocks, one per class, p(x|c) uniform on the block.
[[nodiscard]] DiscreteModel make_one_hot_model(std::size_t n_x, const Vector& prior);

/// Dense random prior and class-conditionals (soft model).
[[nodiscard]] DiscreteModel make_random_model(std::size_t n_x, std::size_t classes, Rng& rng);

/// Random classifier table with strictly positive rows.
[[nodiscard]] Matrix random_classifier(std::size_t n_x, std::size_t classes, Rng& rng);

struct ExpectedPmi {
    double value = 0.0;
    bool clamped = false; // some pair with p(x, x') > 0 had a zero log argument
};

/// Exact sum over (x, x') of p(x, x') log sum_c q(c|x) q(c|x') / q(c).
[[nodiscard]] ExpectedPmi exact_expected_pmi(const DiscreteModel& model, const Matrix& classifier);

/// I(x; x') under the model.
[[nodiscard]] double pair_mutual_information(const DiscreteModel& model);

/// KL(p(x, x') || q(x, x')) with q(x, x') = sum_c q(x|c) q(x'|c) q(c), q(x|c) by Bayes.
[[nodiscard]] double pair_kl(const DiscreteModel& model, const Matrix& classifier);

struct LemmaCheck {
    double lhs = 0.0;
    double mi = 0.0;
    double kl = 0.0;
    double residual = 0.0; // |lhs - (mi - kl)|
};

[[nodiscard]] LemmaCheck lemma_check(const DiscreteModel& model, const Matrix& classifier);

/// Gradient of the exact expected pmi w.r.t. the classifier table entries.
[[nodiscard]] Matrix expected_pmi_gradient(const DiscreteModel& model, const Matrix& classifier);

enum class TheoremSearch { exhaustive, gradient };

[[nodiscard]] std::string_view to_string(TheoremSearch s) noexcept;

struct TheoremOptions {
    std::size_t restarts = 8;
    std::size_t iterations = 5000;
    double step = 0.5;
    std::size_t patience = 10000; // steps without improvement before declaring failure
    std::uint64_t seed = 0;
};

struct TheoremVerdict {
    bool recovered = false;
    double matched_accuracy = 0.0;
    double objective = 0.0;           // expected pmi at the maximizer
    double mutual_information = 0.0;
    double kl_gap = 0.0;              // KL(p || q) at the maximizer
    bool rows_one_hot = false;        // all rows within 1e-3 of one-hot
    bool optimizer_failed = false;
    std::size_t candidates = 0;       // classifiers enumerated, or restarts run
    Matrix classifier;
};

/// Maximizes the exact expected pmi and checks recovery of p(c|x) up to a permutation.
[[nodiscard]] TheoremVerdict theorem_check(const DiscreteModel& model, TheoremSearch search, const TheoremOptions& opts = {});

} // namespace temi
