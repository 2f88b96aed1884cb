#include "temi/beta_scan.hpp"

#include "temi/error.hpp"

#include <algorithm>

namespace temi {

std::vector<BetaScanRow> beta_scan(const FeatureSet& fs, const NeighborTable& nt, const TrainConfig& cfg,
                                   std::span<const double> betas) {
    require_arg(!betas.empty(), "beta_scan: empty beta grid");
    for (double b : betas) require_arg(b > 0.5 && b <= 1.0, "beta_scan: beta " + std::to_string(b) + " outside (0.5, 1]");

    std::vector<BetaScanRow> rows;
    rows.reserve(betas.size());
    for (double b : betas) {
        TrainConfig run = cfg;
        run.beta = b;
        run.log_path.clear();
        const TrainResult res = train(fs, nt, run);
        const Diagnostics d = diagnostics(res.probabilities);
        BetaScanRow row;
        row.beta = b;
        row.marginal_entropy = d.marginal_entropy;
        row.conditional_entropy = d.conditional_entropy;
        row.kl_to_uniform = d.kl_to_uniform;
        row.max_cluster_fraction = *std::max_element(d.cluster_fractions.begin(), d.cluster_fractions.end());
        row.best_head = res.best_head;
        if (fs.labels) row.acc = hungarian_acc(res.assignments, *fs.labels).acc;
        rows.push_back(row);
    }
    return rows;
}

} // namespace temi
