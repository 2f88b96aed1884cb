#include "temi/trainer.hpp"

#include "temi/error.hpp"
#include "temi/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace temi {

namespace {

// Per-step activation buffers are a few hundred KiB each. glibc would serve
// them with fresh mmaps and fault every page in on each step.
void keep_batch_buffers_resident() {
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 64 << 20);
        mallopt(M_TRIM_THRESHOLD, 128 << 20);
        mallopt(M_TOP_PAD, 64 << 20);
    });
#endif
}

constexpr Eigen::Index kPredictChunk = 4096;

ObjectiveConfig objective_config(const TrainConfig& cfg) {
    ObjectiveConfig oc;
    oc.mode = cfg.mode;
    oc.beta = cfg.beta;
    oc.marginal_momentum = cfg.marginal_momentum;
    oc.scan_lambda = cfg.scan_lambda;
    return oc;
}

} // namespace

void validate(const TrainConfig& cfg) {
    require_arg(cfg.epochs >= 1, "train: epochs must be >= 1");
    require_arg(cfg.warmup_epochs < cfg.epochs, "train: warmup_epochs must be < epochs");
    require_arg(cfg.batch_size >= 2, "train: batch size must be >= 2");
    require_arg(cfg.clusters >= 2, "train: clusters must be >= 2");
    require_arg(cfg.heads >= 1, "train: heads must be >= 1");
    require_arg(cfg.lr >= 0.0 && cfg.weight_decay >= 0.0, "train: lr and weight decay must be >= 0");
    require_arg(cfg.tau > 0.0, "train: tau must be > 0");
    require_arg(cfg.teacher_momentum > 0.0 && cfg.teacher_momentum < 1.0, "train: teacher momentum must be in (0, 1)");
    require_arg(cfg.loss_smoothing >= 0.0 && cfg.loss_smoothing < 1.0, "train: loss smoothing must be in [0, 1)");
    require_arg(cfg.hidden1 >= 1 && cfg.hidden2 >= 1, "train: hidden sizes must be >= 1");
    validate(objective_config(cfg));
}

void apply_desk_preset(TrainConfig& cfg) {
    cfg.heads = 16;
    cfg.epochs = 50;
    cfg.batch_size = 128;
    cfg.warmup_epochs = cfg.epochs / 10;
}

std::vector<IndexPair> sample_pairs(const NeighborTable& nt, std::span<const std::size_t> batch, Rng& rng) {
    require_arg(nt.k >= 1, "sample_pairs: empty neighbor table");
    std::uniform_int_distribution<std::size_t> pick(0, nt.k - 1);
    std::vector<IndexPair> pairs;
    pairs.reserve(batch.size());
    for (std::size_t x : batch) {
        require_arg(x < nt.n, "sample_pairs: anchor index out of range");
        pairs.push_back({x, static_cast<std::size_t>(nt.neighbor(x, pick(rng)))});
    }
    return pairs;
}

double scheduled_lr(double base_lr, std::size_t step, std::size_t warmup_steps) noexcept {
    if (step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

Labels argmax_rows(const Matrix& probs) {
    Labels out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
    }
    return out;
}

Prediction predict(const HeadEnsemble& ensemble, std::size_t head, const FeatureSet& fs) {
    require_arg(head < ensemble.size(), "predict: head index out of range");
    require_arg(fs.d() == ensemble.arch.input_dim, "predict: feature dimension does not match the heads");
    Prediction p;
    p.probabilities.resize(fs.data.rows(), static_cast<Eigen::Index>(ensemble.arch.classes));
    for (Eigen::Index begin = 0; begin < fs.data.rows(); begin += kPredictChunk) {
        const Eigen::Index count = std::min(kPredictChunk, fs.data.rows() - begin);
        const Matrix chunk = fs.data.middleRows(begin, count);
        p.probabilities.middleRows(begin, count) = forward_batch(ensemble.heads[head].teacher, chunk, ensemble.tau).probs;
    }
    p.assignments = argmax_rows(p.probabilities);
    return p;
}

TrainResult train(const FeatureSet& fs, const NeighborTable& nt, const TrainConfig& cfg) {
    validate(cfg);
    keep_batch_buffers_resident();
    require_arg(nt.n == fs.n(), "train: neighbor table has n=" + std::to_string(nt.n) + " but features have n=" +
                                    std::to_string(fs.n()));
    const auto start = std::chrono::steady_clock::now();

    HeadArch arch;
    arch.input_dim = fs.d();
    arch.hidden1 = cfg.hidden1;
    arch.hidden2 = cfg.hidden2;
    arch.classes = cfg.clusters;

    TrainResult res;
    res.ensemble = init_ensemble(arch, cfg.heads, cfg.seed, cfg.tau);
    AdamWConfig adam;
    adam.lr = cfg.lr;
    adam.weight_decay = cfg.weight_decay;
    res.optimizers.assign(cfg.heads, OptimizerState(adam, arch.param_count()));
    res.objective = ObjectiveState(objective_config(cfg), cfg.heads, cfg.clusters);
    res.smoothed_loss.assign(cfg.heads, 0.0);

    const std::size_t n = fs.n();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    res.warmup_steps = cfg.warmup_epochs * steps_per_epoch;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;
    std::vector<double> history;
    history.reserve(total_steps * cfg.heads);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot open training log: " + cfg.log_path.string());
    }

    Rng shuffle_rng(derive_seed(cfg.seed, streams::shuffle));
    Rng pair_rng(derive_seed(cfg.seed, streams::pairs));
    std::vector<std::size_t> order(n);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++step) {
            const std::size_t count = std::min(cfg.batch_size, n - begin);
            const std::span<const std::size_t> anchors(order.data() + begin, count);
            const auto pairs = sample_pairs(nt, anchors, pair_rng);

            const BatchForward fwd = forward_pairs(res.ensemble, fs.data, pairs, cfg.threads);
            const BatchLoss loss = loss_and_grad(fwd, res.objective, cfg.tau, cfg.threads);
            if (!std::isfinite(loss.total))
                throw TrainingError("training diverged: non-finite loss at step " + std::to_string(step), static_cast<long long>(step));

            const double lr = scheduled_lr(cfg.lr, step, res.warmup_steps);
            parallel_for(cfg.heads, cfg.threads, [&](std::size_t h) {
                HeadParams& student = res.ensemble.heads[h].student;
                const HeadParams grads = backward(student, fwd.student[h], fwd.inputs, loss.grad_logits[h]);
                adamw_step(res.optimizers[h], student, grads, lr);
            });
            teacher_ema_update(res.ensemble, cfg.teacher_momentum);
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                update_marginal(res.objective, fwd.teacher[h].probs, h);
                const double l = loss.head_loss[h];
                res.smoothed_loss[h] = step == 0 ? l : cfg.loss_smoothing * res.smoothed_loss[h] + (1.0 - cfg.loss_smoothing) * l;
                history.push_back(res.smoothed_loss[h]);
            }

            if (log) {
                double weight = 0.0;
                double q_entropy = 0.0;
                for (std::size_t h = 0; h < cfg.heads; ++h) {
                    weight += loss.mean_weight[h];
                    q_entropy += entropy(res.objective.q_marginal.row(static_cast<Eigen::Index>(h)).transpose());
                }
                nlohmann::json rec{{"step", step},
                                   {"epoch", epoch},
                                   {"lr", lr},
                                   {"loss", loss.total},
                                   {"head_loss", loss.head_loss},
                                   {"mean_weight", weight / static_cast<double>(cfg.heads)},
                                   {"q_entropy", q_entropy / static_cast<double>(cfg.heads)}};
                log << rec.dump() << '\n';
            }
        }
    }

    res.steps = step;
    res.best_head = static_cast<std::size_t>(
        std::min_element(res.smoothed_loss.begin(), res.smoothed_loss.end()) - res.smoothed_loss.begin());
    res.best_loss_curve.reserve(step);
    for (std::size_t s = 0; s < step; ++s) res.best_loss_curve.push_back(history[s * cfg.heads + res.best_head]);

    Prediction pred = predict(res.ensemble, res.best_head, fs);
    res.assignments = std::move(pred.assignments);
    res.probabilities = std::move(pred.probabilities);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

} // namespace temi
