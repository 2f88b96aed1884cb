#include "temi/metrics.hpp"

#include "temi/error.hpp"
#include "temi/hungarian.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace temi {

namespace {

void check_pair(const Labels& pred, const Labels& truth, const char* what) {
    require_arg(pred.size() == truth.size(), std::string(what) + ": prediction length " + std::to_string(pred.size()) +
                                                 " differs from truth length " + std::to_string(truth.size()));
    require_arg(!pred.empty(), std::string(what) + ": empty label vectors");
    for (auto l : pred) require_arg(l >= 0, std::string(what) + ": negative predicted label");
    for (auto l : truth) require_arg(l >= 0, std::string(what) + ": negative true label");
}

std::vector<std::int64_t> row_sums(const Contingency& c) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(c.table.rows()), 0);
    for (Eigen::Index i = 0; i < c.table.rows(); ++i) out[static_cast<std::size_t>(i)] = c.table.row(i).sum();
    return out;
}

std::vector<std::int64_t> col_sums(const Contingency& c) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(c.table.cols()), 0);
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) out[static_cast<std::size_t>(j)] = c.table.col(j).sum();
    return out;
}

std::size_t nonzero(const std::vector<std::int64_t>& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](std::int64_t x) { return x > 0; }));
}

double count_entropy(const std::vector<std::int64_t>& counts, double n) {
    double h = 0.0;
    for (auto c : counts)
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
    return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

// Single-cluster convention: 1 when both sides are one cluster, 0 when only one side is.
std::optional<double> degenerate_value(const Contingency& c) {
    const std::size_t kp = nonzero(row_sums(c));
    const std::size_t kt = nonzero(col_sums(c));
    if (kp == 1 && kt == 1) return 1.0;
    if (kp == 1 || kt == 1) return 0.0;
    return std::nullopt;
}

bool identical_partitions(const Contingency& c) {
    // Each nonempty row and column holds exactly one nonzero cell.
    for (Eigen::Index i = 0; i < c.table.rows(); ++i)
        if ((c.table.row(i).array() > 0).count() > 1) return false;
    for (Eigen::Index j = 0; j < c.table.cols(); ++j)
        if ((c.table.col(j).array() > 0).count() > 1) return false;
    return true;
}

} // namespace

Contingency contingency(const Labels& pred, const Labels& truth) {
    check_pair(pred, truth, "contingency");
    const auto kp = *std::max_element(pred.begin(), pred.end()) + 1;
    const auto kt = *std::max_element(truth.begin(), truth.end()) + 1;
    require_arg(kp <= 100000 && kt <= 100000, "contingency: label ids too large");
    Contingency c;
    c.table = CountMatrix::Zero(kp, kt);
    for (std::size_t i = 0; i < pred.size(); ++i) ++c.table(pred[i], truth[i]);
    c.n = static_cast<std::int64_t>(pred.size());
    return c;
}

MatchedAccuracy hungarian_acc(const Labels& pred, const Labels& truth) {
    const Contingency c = contingency(pred, truth);
    const Eigen::Index k = std::max(c.table.rows(), c.table.cols());
    Matrix weight = Matrix::Zero(k, k);
    weight.topLeftCorner(c.table.rows(), c.table.cols()) = c.table.cast<double>();
    const Assignment a = solve_max_weight_assignment(weight);

    MatchedAccuracy out;
    out.mapping.assign(static_cast<std::size_t>(c.table.rows()), -1);
    std::int64_t matched = 0;
    for (Eigen::Index r = 0; r < c.table.rows(); ++r) {
        const int col = a.row_to_col[static_cast<std::size_t>(r)];
        if (col >= 0 && col < c.table.cols()) {
            out.mapping[static_cast<std::size_t>(r)] = col;
            matched += c.table(r, col);
        }
    }
    out.acc = static_cast<double>(matched) / static_cast<double>(c.n);
    return out;
}

double mutual_information(const Contingency& c) {
    const auto rs = row_sums(c);
    const auto cs = col_sums(c);
    const double n = static_cast<double>(c.n);
    double mi = 0.0;
    for (Eigen::Index i = 0; i < c.table.rows(); ++i)
        for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
            const auto nij = c.table(i, j);
            if (nij == 0) continue;
            const double v = static_cast<double>(nij);
            mi += v / n * std::log(n * v / (static_cast<double>(rs[static_cast<std::size_t>(i)]) * static_cast<double>(cs[static_cast<std::size_t>(j)])));
        }
    return std::max(mi, 0.0);
}

double expected_mutual_information(const Contingency& c) {
    const auto rs = row_sums(c);
    const auto cs = col_sums(c);
    const auto n = c.n;
    const double nd = static_cast<double>(n);
    const double lg_n = std::lgamma(nd + 1.0);
    double emi = 0.0;
    for (auto a : rs) {
        if (a == 0) continue;
        for (auto b : cs) {
            if (b == 0) continue;
            const double ad = static_cast<double>(a);
            const double bd = static_cast<double>(b);
            const double fixed = std::lgamma(ad + 1.0) + std::lgamma(bd + 1.0) + std::lgamma(nd - ad + 1.0) +
                                 std::lgamma(nd - bd + 1.0) - lg_n;
            const std::int64_t lo = std::max<std::int64_t>(1, a + b - n);
            const std::int64_t hi = std::min(a, b);
            for (std::int64_t nij = lo; nij <= hi; ++nij) {
                const double v = static_cast<double>(nij);
                const double log_p = fixed - std::lgamma(v + 1.0) - std::lgamma(ad - v + 1.0) - std::lgamma(bd - v + 1.0) -
                                     std::lgamma(nd - ad - bd + v + 1.0);
                emi += v / nd * std::log(nd * v / (ad * bd)) * std::exp(log_p);
            }
        }
    }
    return emi;
}

double nmi(const Labels& pred, const Labels& truth) {
    const Contingency c = contingency(pred, truth);
    if (auto d = degenerate_value(c)) return *d;
    if (identical_partitions(c)) return 1.0;
    const double n = static_cast<double>(c.n);
    const double denom = 0.5 * (count_entropy(row_sums(c), n) + count_entropy(col_sums(c), n));
    if (denom <= 0.0) return identical_partitions(c) ? 1.0 : 0.0;
    return std::min(1.0, mutual_information(c) / denom);
}

double ari(const Labels& pred, const Labels& truth) {
    const Contingency c = contingency(pred, truth);
    if (auto d = degenerate_value(c)) return *d;
    if (identical_partitions(c)) return 1.0;
    double index = 0.0;
    for (Eigen::Index i = 0; i < c.table.rows(); ++i)
        for (Eigen::Index j = 0; j < c.table.cols(); ++j) index += comb2(static_cast<double>(c.table(i, j)));
    double sum_a = 0.0;
    double sum_b = 0.0;
    for (auto a : row_sums(c)) sum_a += comb2(static_cast<double>(a));
    for (auto b : col_sums(c)) sum_b += comb2(static_cast<double>(b));
    const double expected = sum_a * sum_b / comb2(static_cast<double>(c.n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return identical_partitions(c) ? 1.0 : 0.0;
    return (index - expected) / (max_index - expected);
}

double ami(const Labels& pred, const Labels& truth) {
    const Contingency c = contingency(pred, truth);
    if (auto d = degenerate_value(c)) return *d;
    if (identical_partitions(c)) return 1.0;
    const double n = static_cast<double>(c.n);
    const double mi = mutual_information(c);
    const double emi = expected_mutual_information(c);
    const double mean_h = 0.5 * (count_entropy(row_sums(c), n) + count_entropy(col_sums(c), n));
    const double denom = mean_h - emi;
    if (std::abs(denom) < 1e-15) return identical_partitions(c) ? 1.0 : 0.0;
    return std::min(1.0, (mi - emi) / denom);
}

Diagnostics diagnostics(const Matrix& probs) {
    require_arg(probs.rows() >= 1 && probs.cols() >= 1, "diagnostics: empty probability matrix");
    const auto n = static_cast<std::size_t>(probs.rows());
    const auto classes = static_cast<std::size_t>(probs.cols());
    Diagnostics d;
    const Vector mean = probs.colwise().mean().transpose();
    d.marginal_entropy = 0.0;
    for (double p : mean)
        if (p > 0.0) d.marginal_entropy -= p * std::log(p);

    std::vector<double> msp(n);
    d.cluster_fractions.assign(classes, 0.0);
    double cond = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probs.row(static_cast<Eigen::Index>(i));
        double h = 0.0;
        Eigen::Index best = 0;
        for (Eigen::Index c = 0; c < row.size(); ++c) {
            const double p = row(c);
            if (p > 0.0) h -= p * std::log(p);
            if (p > row(best)) best = c;
        }
        cond += h;
        msp[i] = row(best);
        d.cluster_fractions[static_cast<std::size_t>(best)] += 1.0;
    }
    d.conditional_entropy = cond / static_cast<double>(n);
    double msp_sum = 0.0;
    for (double v : msp) msp_sum += v;
    d.msp_mean = msp_sum / static_cast<double>(n);
    std::sort(msp.begin(), msp.end());
    d.msp_median = n % 2 == 1 ? msp[n / 2] : 0.5 * (msp[n / 2 - 1] + msp[n / 2]);

    d.kl_to_uniform = 0.0;
    for (double& f : d.cluster_fractions) {
        f /= static_cast<double>(n);
        if (f > 0.0) d.kl_to_uniform += f * std::log(f * static_cast<double>(classes));
    }
    d.kl_to_uniform = std::max(d.kl_to_uniform, 0.0);
    return d;
}

WeightSeparation weight_separation(const NeighborTable& nt, const Matrix& teacher_probs, const Labels& truth) {
    require_arg(truth.size() == nt.n && static_cast<std::size_t>(teacher_probs.rows()) == nt.n,
                "weight_separation: table, probabilities and labels must cover the same examples");
    WeightSeparation ws;
    double sum_true = 0.0;
    double sum_false = 0.0;
    for (std::size_t i = 0; i < nt.n; ++i) {
        for (std::size_t j = 0; j < nt.k; ++j) {
            const auto nb = static_cast<std::size_t>(nt.neighbor(i, j));
            const double w = std::clamp(teacher_probs.row(static_cast<Eigen::Index>(i)).dot(teacher_probs.row(static_cast<Eigen::Index>(nb))), 0.0, 1.0);
            if (truth[i] == truth[nb]) {
                sum_true += w;
                ++ws.true_pairs;
            } else {
                sum_false += w;
                ++ws.false_pairs;
            }
        }
    }
    if (ws.true_pairs > 0) ws.mean_true = sum_true / static_cast<double>(ws.true_pairs);
    if (ws.false_pairs > 0) ws.mean_false = sum_false / static_cast<double>(ws.false_pairs);
    return ws;
}

EvalReport evaluate(const Labels& pred, const Labels& truth, const Matrix* probs) {
    EvalReport r;
    r.table = contingency(pred, truth);
    const MatchedAccuracy m = hungarian_acc(pred, truth);
    r.acc = m.acc;
    r.mapping = m.mapping;
    r.nmi = nmi(pred, truth);
    r.ari = ari(pred, truth);
    r.ami = ami(pred, truth);
    r.n = pred.size();
    r.clusters = nonzero(row_sums(r.table));
    r.classes = nonzero(col_sums(r.table));

    const auto cs = col_sums(r.table);
    r.per_class_accuracy.assign(cs.size(), 0.0);
    for (std::size_t row = 0; row < r.mapping.size(); ++row) {
        const int cls = r.mapping[row];
        if (cls >= 0 && cs[static_cast<std::size_t>(cls)] > 0)
            r.per_class_accuracy[static_cast<std::size_t>(cls)] =
                static_cast<double>(r.table.table(static_cast<Eigen::Index>(row), cls)) / static_cast<double>(cs[static_cast<std::size_t>(cls)]);
    }
    if (probs != nullptr) {
        require_arg(static_cast<std::size_t>(probs->rows()) == pred.size(), "evaluate: probability rows differ from n");
        r.diag = diagnostics(*probs);
    }
    return r;
}

std::string report_json(const EvalReport& r) {
    nlohmann::json j;
    j["acc"] = r.acc;
    j["nmi"] = r.nmi;
    j["ari"] = r.ari;
    j["ami"] = r.ami;
    j["n"] = r.n;
    j["clusters"] = r.clusters;
    j["classes"] = r.classes;
    j["per_class_accuracy"] = r.per_class_accuracy;
    j["mapping"] = r.mapping;
    std::vector<std::vector<std::int64_t>> table(static_cast<std::size_t>(r.table.table.rows()));
    for (Eigen::Index i = 0; i < r.table.table.rows(); ++i)
        for (Eigen::Index k = 0; k < r.table.table.cols(); ++k) table[static_cast<std::size_t>(i)].push_back(r.table.table(i, k));
    j["contingency"] = table;
    if (r.diag) {
        j["diagnostics"] = {{"marginal_entropy", r.diag->marginal_entropy},
                            {"conditional_entropy", r.diag->conditional_entropy},
                            {"msp_mean", r.diag->msp_mean},
                            {"msp_median", r.diag->msp_median},
                            {"kl_to_uniform", r.diag->kl_to_uniform},
                            {"cluster_fractions", r.diag->cluster_fractions}};
    }
    if (r.weights) {
        nlohmann::json w;
        w["mean_w_true"] = r.weights->mean_true ? nlohmann::json(*r.weights->mean_true) : nlohmann::json(nullptr);
        w["mean_w_false"] = r.weights->mean_false ? nlohmann::json(*r.weights->mean_false) : nlohmann::json(nullptr);
        w["true_pairs"] = r.weights->true_pairs;
        w["false_pairs"] = r.weights->false_pairs;
        j["weight_separation"] = w;
    }
    return j.dump(2);
}

std::string report_csv_header() { return "method,backbone,acc,nmi,ari,ami"; }

std::string report_csv_row(const EvalReport& r, const std::string& method, const std::string& backbone) {
    auto clean = [](std::string s) {
        std::replace(s.begin(), s.end(), ',', ';');
        return s;
    };
    std::ostringstream out;
    out << clean(method) << ',' << clean(backbone) << std::fixed << std::setprecision(2) << ',' << 100.0 * r.acc << ','
        << 100.0 * r.nmi << ',' << 100.0 * r.ari << ',' << 100.0 * r.ami;
    return out.str();
}

} // namespace temi
