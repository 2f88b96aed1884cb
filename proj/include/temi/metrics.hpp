#pragma once

#include "temi/knn.hpp"
#include "temi/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace temi {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Predicted-cluster x true-class count table.
struct Contingency {
    CountMatrix table;
    std::int64_t n = 0;
};

[[nodiscard]] Contingency contingency(const Labels& pred, const Labels& truth);

struct MatchedAccuracy {
    double acc = 0.0;
    std::vector<int> mapping; // predicted cluster -> true class, -1 if unmatched
};

/// Accuracy under the best one-to-one cluster-to-class matching (Kuhn-Munkres).
[[nodiscard]] MatchedAccuracy hungarian_acc(const Labels& pred, const Labels& truth);

/// Mutual information normalized by the arithmetic mean of the two entropies.
[[nodiscard]] double nmi(const Labels& pred, const Labels& truth);
/// Adjusted Rand index (pair counting).
[[nodiscard]] double ari(const Labels& pred, const Labels& truth);
/// Adjusted mutual information, exact hypergeometric expectation, arithmetic-mean normalization.
[[nodiscard]] double ami(const Labels& pred, const Labels& truth);

/// Mutual information (nats) of a contingency table.
[[nodiscard]] double mutual_information(const Contingency& c);
/// Expected mutual information under the permutation model with fixed marginals.
[[nodiscard]] double expected_mutual_information(const Contingency& c);

struct Diagnostics {
    double marginal_entropy = 0.0;    // H(mean prediction)
    double conditional_entropy = 0.0; // mean over rows of H(row)
    double msp_mean = 0.0;
    double msp_median = 0.0;
    double kl_to_uniform = 0.0;       // KL(argmax histogram || uniform)
    std::vector<double> cluster_fractions; // argmax histogram, normalized
};

[[nodiscard]] Diagnostics diagnostics(const Matrix& probs);

struct WeightSeparation {
    std::optional<double> mean_true;
    std::optional<double> mean_false;
    std::size_t true_pairs = 0;
    std::size_t false_pairs = 0;
};

/// Mean teacher agreement over mined neighbor pairs, split by ground-truth agreement.
[[nodiscard]] WeightSeparation weight_separation(const NeighborTable& nt, const Matrix& teacher_probs, const Labels& truth);

struct EvalReport {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    double ami = 0.0;
    std::size_t n = 0;
    std::size_t clusters = 0; // distinct predicted clusters
    std::size_t classes = 0;  // distinct true classes
    std::vector<double> per_class_accuracy;
    std::vector<int> mapping;
    Contingency table;
    std::optional<Diagnostics> diag;
    std::optional<WeightSeparation> weights;
};

[[nodiscard]] EvalReport evaluate(const Labels& pred, const Labels& truth, const Matrix* probs = nullptr);

/// Pretty JSON document for a report.
[[nodiscard]] std::string report_json(const EvalReport& report);
[[nodiscard]] std::string report_csv_header();
/// One flat row: method, backbone tag, ACC, NMI, ARI, AMI.
[[nodiscard]] std::string report_csv_row(const EvalReport& report, const std::string& method, const std::string& backbone);

} // namespace temi
