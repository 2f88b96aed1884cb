#include "temi/baselines.hpp"

#include "temi/error.hpp"
#include "temi/heads.hpp"
#include "temi/parallel.hpp"
#include "temi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace temi {

namespace {

struct Restart {
    Labels assignments;
    Matrix centroids;
    double inertia = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    std::vector<double> history;
};

Matrix seed_plus_plus(const Matrix& x, std::size_t k, Rng& rng) {
    const Eigen::Index n = x.rows();
    Matrix centroids(static_cast<Eigen::Index>(k), x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = x.row(first(rng));
    Vector d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centroids.row(0)).squaredNorm();
    for (std::size_t c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2(i);
                if (target < 0.0 && d2(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2(pick) == 0.0 && pick > 0) --pick;
        } else {
            pick = first(rng);
        }
        centroids.row(static_cast<Eigen::Index>(c)) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2(i) = std::min(d2(i), (x.row(i) - centroids.row(static_cast<Eigen::Index>(c))).squaredNorm());
    }
    return centroids;
}

// Nearest centroid per row (lowest index on ties); returns inertia, fills per-point distances.
double assign(const Matrix& x, const Matrix& centroids, Labels& labels, Vector& dist) {
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
            const double d = (x.row(i) - centroids.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(arg);
        dist(i) = best;
        inertia += best;
    }
    return inertia;
}

void update_centroids(const Matrix& x, Labels& labels, Vector& dist, Matrix& centroids) {
    const Eigen::Index k = centroids.rows();
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    std::vector<Eigen::Index> far;
    for (Eigen::Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
            centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            continue;
        }
        if (far.empty()) {
            far.resize(static_cast<std::size_t>(x.rows()));
            std::iota(far.begin(), far.end(), Eigen::Index{0});
            std::stable_sort(far.begin(), far.end(), [&](Eigen::Index a, Eigen::Index b) { return dist(a) > dist(b); });
            std::reverse(far.begin(), far.end()); // pop from the back
        }
        // Farthest remaining point becomes the new centroid and leaves its old cluster.
        const Eigen::Index p = far.back();
        far.pop_back();
        centroids.row(c) = x.row(p);
        labels[static_cast<std::size_t>(p)] = static_cast<std::int32_t>(c);
        dist(p) = 0.0;
    }
}

Restart run_restart(const Matrix& x, const KMeansConfig& cfg, std::size_t r) {
    Rng rng(derive_seed(cfg.seed, streams::kmeans + r));
    Restart out;
    out.centroids = seed_plus_plus(x, cfg.k, rng);
    out.assignments.assign(static_cast<std::size_t>(x.rows()), 0);
    Vector dist(x.rows());
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        const double inertia = assign(x, out.centroids, out.assignments, dist);
        out.history.push_back(inertia);
        out.iterations = it + 1;
        const double prev = out.inertia;
        out.inertia = inertia;
        if (std::isfinite(prev) && (prev - inertia) <= cfg.tol * std::max(prev, std::numeric_limits<double>::min())) break;
        if (inertia == 0.0) break;
        update_centroids(x, out.assignments, dist, out.centroids);
    }
    return out;
}

double cross_entropy(const Matrix& x, const Labels& y, const Matrix& w, const RowVector& b, std::size_t* correct) {
    Matrix logits = x * w;
    logits.rowwise() += b;
    double loss = 0.0;
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        const double mx = logits.row(i).maxCoeff(&arg);
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        loss += lse - logits(i, y[static_cast<std::size_t>(i)]);
        if (arg == y[static_cast<std::size_t>(i)]) ++hits;
    }
    if (correct != nullptr) *correct = hits;
    return loss / static_cast<double>(logits.rows());
}

} // namespace

KMeansResult kmeans(const FeatureSet& fs, const KMeansConfig& cfg) {
    require_arg(cfg.k >= 2, "kmeans: k must be >= 2");
    require_arg(fs.n() >= cfg.k, "kmeans: need n >= k (n=" + std::to_string(fs.n()) + ", k=" + std::to_string(cfg.k) + ")");
    require_arg(cfg.restarts >= 1, "kmeans: restarts must be >= 1");
    require_arg(cfg.max_iters >= 1, "kmeans: max_iters must be >= 1");
    require_arg(cfg.tol > 0.0, "kmeans: tol must be > 0");

    std::vector<Restart> runs(cfg.restarts);
    parallel_for(cfg.restarts, cfg.threads, [&](std::size_t r) { runs[r] = run_restart(fs.data, cfg, r); });

    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r)
        if (runs[r].inertia < runs[best].inertia) best = r;

    KMeansResult res;
    res.assignments = std::move(runs[best].assignments);
    res.centroids = std::move(runs[best].centroids);
    res.inertia = runs[best].inertia;
    res.best_restart = best;
    res.iterations = runs[best].iterations;
    res.inertia_history = std::move(runs[best].history);
    return res;
}

ProbeResult linear_probe(const FeatureSet& train_set, const FeatureSet& eval_set, const ProbeConfig& cfg) {
    require_arg(train_set.has_labels() && eval_set.has_labels(), "linear_probe: labels required on both sets");
    require_arg(train_set.d() == eval_set.d(), "linear_probe: feature dimensions differ");
    require_arg(cfg.epochs >= 1 && cfg.batch_size >= 1, "linear_probe: epochs and batch size must be >= 1");
    const auto classes = static_cast<std::size_t>(std::max({train_set.num_classes(), eval_set.num_classes(), 2}));
    const auto d = static_cast<Eigen::Index>(train_set.d());
    const auto c = static_cast<Eigen::Index>(classes);
    const Labels& y = *train_set.labels;

    // Flat parameter vector: W (d x c, row-major) followed by b.
    Vector params = Vector::Zero(d * c + c);
    auto weights = [&] { return MatrixMap(params.data(), d, c); };
    auto bias = [&] { return Eigen::Map<RowVector>(params.data() + d * c, c); };

    AdamWConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    OptimizerState opt(adam, static_cast<std::size_t>(params.size()));

    ProbeResult res;
    res.classes = classes;
    res.initial_loss = cross_entropy(train_set.data, y, weights(), bias(), nullptr);

    const std::size_t n = train_set.n();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(steps_per_epoch * cfg.epochs);
    Rng rng(derive_seed(cfg.seed, streams::probe));
    std::vector<std::size_t> order(n);
    std::size_t step = 0;
    Vector grad(params.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++step) {
            const std::size_t count = std::min(cfg.batch_size, n - begin);
            Matrix xb(static_cast<Eigen::Index>(count), d);
            for (std::size_t i = 0; i < count; ++i) xb.row(static_cast<Eigen::Index>(i)) = train_set.data.row(static_cast<Eigen::Index>(order[begin + i]));
            Matrix logits = xb * weights();
            logits.rowwise() += bias();
            // Softmax minus one-hot, averaged over the batch.
            for (Eigen::Index i = 0; i < logits.rows(); ++i) {
                const double mx = logits.row(i).maxCoeff();
                logits.row(i) = (logits.row(i).array() - mx).exp();
                logits.row(i) /= logits.row(i).sum();
                logits(i, y[order[begin + static_cast<std::size_t>(i)]]) -= 1.0;
            }
            logits /= static_cast<double>(count);
            MatrixMap(grad.data(), d, c).noalias() = xb.transpose() * logits;
            grad.tail(c) = logits.colwise().sum().transpose();
            const double lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
            adamw_step(opt, params, grad, lr);
        }
        res.epoch_loss.push_back(cross_entropy(train_set.data, y, weights(), bias(), nullptr));
    }

    std::size_t hits = 0;
    cross_entropy(train_set.data, y, weights(), bias(), &hits);
    res.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
    cross_entropy(eval_set.data, *eval_set.labels, weights(), bias(), &hits);
    res.eval_accuracy = static_cast<double>(hits) / static_cast<double>(eval_set.n());
    return res;
}

} // namespace temi
