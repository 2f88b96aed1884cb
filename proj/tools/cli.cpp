#include "cli.hpp"

#include "temi/baselines.hpp"
#include "temi/beta_scan.hpp"
#include "temi/error.hpp"
#include "temi/feature_io.hpp"
#include "temi/knn.hpp"
#include "temi/metrics.hpp"
#include "temi/parallel.hpp"
#include "temi/theorem.hpp"
#include "temi/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace temi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kInternalExit = 5;

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for hashing: " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return hex.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Provenance record written next to every output.
class Manifest {
public:
    Manifest(std::string subcommand, std::uint64_t seed)
        : start_(std::chrono::steady_clock::now()), doc_{{"subcommand", std::move(subcommand)}, {"seed", seed}} {
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
    }
    void config(json cfg) { doc_["config"] = std::move(cfg); }
    void input(const fs::path& p) { doc_["inputs"][p.string()] = sha256_file(p); }
    void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
    void write(const fs::path& path) {
        doc_["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text(path, doc_.dump(2) + "\n");
    }

private:
    std::chrono::steady_clock::time_point start_;
    json doc_;
};

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

std::string assignments_json(const Labels& labels, std::size_t clusters) {
    json j{{"n", labels.size()}, {"clusters", clusters}, {"assignments", labels}};
    return j.dump() + "\n";
}

Labels read_label_array(const json& arr, const fs::path& path) {
    if (!arr.is_array()) throw ValidationError(path.string() + ": label field is not an array");
    Labels out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number_integer()) throw ValidationError(path.string() + ": non-integer label");
        out.push_back(v.get<std::int32_t>());
    }
    return out;
}

/// Labels from an assignments JSON ({"assignments": [...]} or {"labels": [...]}) or a labeled feature file.
Labels load_labels(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    const int first = in.peek();
    if (first == '{' || first == '[') {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ": invalid JSON: " + e.what());
        }
        if (j.is_array()) return read_label_array(j, path);
        if (j.contains("assignments")) return read_label_array(j["assignments"], path);
        if (j.contains("labels")) return read_label_array(j["labels"], path);
        throw ValidationError(path.string() + ": JSON has no 'assignments' or 'labels' array");
    }
    in.close();
    FeatureSet f = load_features_any(path);
    if (!f.labels) throw ValidationError(path.string() + ": feature file carries no labels");
    return *f.labels;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ArgumentError(std::string(what) + ": cannot parse '" + cell + "' as a number");
        }
    }
    if (out.empty()) throw ArgumentError(std::string(what) + ": empty list");
    return out;
}

unsigned resolve_threads(unsigned requested) { return requested == 0 ? default_threads() : requested; }

// ---------------------------------------------------------------- train flags

struct TrainFlags {
    TrainConfig cfg;
    std::string loss = "temi";
    std::string preset;
    std::size_t hidden = 0;
    bool raw = false;
};

void add_train_flags(CLI::App& app, TrainFlags& f) {
    TrainConfig& c = f.cfg;
    app.add_option("--loss", f.loss, "Objective: pmi, wpmi, temi or scan")->capture_default_str();
    app.add_option("--heads", c.heads, "Number of clustering heads")->capture_default_str();
    app.add_option("--beta", c.beta, "Pair-numerator exponent in (0.5, 1]")->capture_default_str();
    app.add_option("--tau", c.tau, "Softmax temperature for student and teacher")->capture_default_str();
    app.add_option("--lr", c.lr, "AdamW base learning rate")->capture_default_str();
    app.add_option("--wd", c.weight_decay, "AdamW weight decay")->capture_default_str();
    app.add_option("--batch", c.batch_size, "Anchors per batch")->capture_default_str();
    app.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
    app.add_option("--warmup", c.warmup_epochs, "Linear learning-rate warmup epochs")->capture_default_str();
    app.add_option("--teacher-momentum", c.teacher_momentum, "Teacher EMA momentum")->capture_default_str();
    app.add_option("--marginal-momentum", c.marginal_momentum, "Class-marginal EMA momentum")->capture_default_str();
    app.add_option("--scan-lambda", c.scan_lambda, "Entropy weight of the SCAN loss")->capture_default_str();
    app.add_option("--clusters", c.clusters, "Number of clusters (default: classes in the labels)")->capture_default_str();
    app.add_option("--hidden", f.hidden, "Width of both hidden layers (overrides --hidden1/--hidden2)");
    app.add_option("--hidden1", c.hidden1, "First hidden layer width")->capture_default_str();
    app.add_option("--hidden2", c.hidden2, "Second hidden layer width")->capture_default_str();
    app.add_option("-k,--knn-k", c.knn_k, "Neighbors per example (checked against the neighbor file)")->capture_default_str();
    app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
    app.add_option("--preset", f.preset, "Preset: 'desk' = 16 heads, 50 epochs, batch 128, warmup epochs/10 (explicit flags win)")
        ->check(CLI::IsMember({"desk"}));
    app.add_flag("--raw", f.raw, "Train on raw features instead of standardized ones");
}

void finalize_train_flags(CLI::App& app, TrainFlags& f, const FeatureSet& features, const NeighborTable& nt) {
    TrainConfig& c = f.cfg;
    if (f.preset == "desk") {
        TrainConfig preset = c;
        apply_desk_preset(preset);
        if (app.count("--heads") == 0) c.heads = preset.heads;
        if (app.count("--epochs") == 0) c.epochs = preset.epochs;
        if (app.count("--batch") == 0) c.batch_size = preset.batch_size;
        if (app.count("--warmup") == 0) c.warmup_epochs = c.epochs / 10;
    }
    if (f.hidden > 0) c.hidden1 = c.hidden2 = f.hidden;
    c.mode = parse_loss_mode(f.loss);
    if (c.clusters == 0) {
        if (!features.labels) throw ArgumentError("--clusters is required when the features carry no labels");
        c.clusters = static_cast<std::size_t>(features.num_classes());
    }
    if (app.count("--knn-k") > 0 && c.knn_k != nt.k)
        throw ArgumentError("--knn-k " + std::to_string(c.knn_k) + " does not match the neighbor file (k=" + std::to_string(nt.k) + ")");
    c.knn_k = nt.k;
    if (nt.n != features.n())
        throw ValidationError("neighbor file covers " + std::to_string(nt.n) + " examples, features have " + std::to_string(features.n()));
    validate(c);
}

json train_config_json(const TrainConfig& c, bool raw) {
    return json{{"loss", std::string(to_string(c.mode))},
                {"heads", c.heads},
                {"beta", c.beta},
                {"tau", c.tau},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"warmup_epochs", c.warmup_epochs},
                {"teacher_momentum", c.teacher_momentum},
                {"marginal_momentum", c.marginal_momentum},
                {"scan_lambda", c.scan_lambda},
                {"clusters", c.clusters},
                {"hidden1", c.hidden1},
                {"hidden2", c.hidden2},
                {"knn_k", c.knn_k},
                {"seed", c.seed},
                {"standardized", !raw}};
}

// ---------------------------------------------------------------- subcommands

struct Common {
    unsigned threads = 0;
};

void cmd_synth(const SynthConfig& cfg, const fs::path& out_path, std::ostream& out) {
    Manifest manifest("synth", cfg.seed);
    const FeatureSet f = generate_synthetic(cfg);
    if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
    save_features(f, out_path);
    manifest.config({{"classes", cfg.classes},
                     {"n_per_class", cfg.n_per_class},
                     {"dim", cfg.dim},
                     {"separation", cfg.separation},
                     {"noise", cfg.noise},
                     {"stretch", cfg.stretch},
                     {"stretch_dims", cfg.stretch_dims}});
    manifest.output(out_path);
    manifest.write(manifest_for_file(out_path));
    out << "wrote " << f.n() << "x" << f.d() << " features to " << out_path.string() << "\n";
}

void cmd_knn(const fs::path& in_path, std::size_t k, bool include_self, bool raw, unsigned threads, const fs::path& out_path,
             std::ostream& out) {
    Manifest manifest("knn", 0);
    manifest.input(in_path);
    FeatureSet f = load_features_any(in_path);
    if (!raw) f = standardize(f);
    KnnOptions opts;
    opts.include_self = include_self;
    opts.threads = resolve_threads(threads);
    const NeighborTable nt = mine_knn(f, k, opts);
    if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
    save_neighbors(nt, out_path);
    json cfg{{"k", k}, {"include_self", include_self}, {"standardized", !raw}};
    if (f.labels) {
        const double tpr = true_positive_rate(nt, *f.labels);
        cfg["true_positive_rate"] = tpr;
        out << "true positive rate: " << tpr << "\n";
    }
    manifest.config(cfg);
    manifest.output(out_path);
    manifest.write(manifest_for_file(out_path));
    out << "wrote " << nt.n << "x" << nt.k << " neighbors to " << out_path.string() << "\n";
}

void cmd_train(CLI::App& app, TrainFlags& flags, const fs::path& in_path, const fs::path& knn_path, const fs::path& out_dir,
               unsigned threads, bool write_log, std::ostream& out) {
    FeatureSet f = load_features_any(in_path);
    const NeighborTable nt = load_neighbors(knn_path);
    finalize_train_flags(app, flags, f, nt);
    TrainConfig& cfg = flags.cfg;
    cfg.threads = resolve_threads(threads);
    if (!flags.raw) f = standardize(f);

    Manifest manifest("train", cfg.seed);
    manifest.input(in_path);
    manifest.input(knn_path);
    ensure_dir(out_dir);
    const fs::path log_path = out_dir / "train_log.jsonl";
    cfg.log_path = write_log ? log_path : fs::path{};

    const TrainResult res = train(f, nt, cfg);

    const fs::path assign_path = out_dir / "assignments.json";
    const fs::path ckpt_path = out_dir / "checkpoint.ckpt";
    const fs::path summary_path = out_dir / "summary.json";
    write_text(assign_path, assignments_json(res.assignments, cfg.clusters));
    save_checkpoint(res.ensemble, &res.optimizers, ckpt_path);

    json summary{{"config", train_config_json(cfg, flags.raw)},
                 {"best_head", res.best_head},
                 {"smoothed_loss", res.smoothed_loss},
                 {"final_loss", res.smoothed_loss[res.best_head]},
                 {"steps", res.steps},
                 {"warmup_steps", res.warmup_steps},
                 {"wall_seconds", res.wall_seconds}};
    if (f.labels) {
        const EvalReport r = evaluate(res.assignments, *f.labels, &res.probabilities);
        summary["train_acc"] = r.acc;
        summary["train_nmi"] = r.nmi;
        summary["train_ari"] = r.ari;
        out << "train ACC " << r.acc << " NMI " << r.nmi << " ARI " << r.ari << "\n";
    }
    write_text(summary_path, summary.dump(2) + "\n");

    manifest.config(train_config_json(cfg, flags.raw));
    manifest.output(assign_path);
    manifest.output(ckpt_path);
    manifest.output(summary_path);
    if (write_log) manifest.output(log_path);
    manifest.write(out_dir / "manifest.json");
    out << "best head " << res.best_head << ", smoothed loss " << res.smoothed_loss[res.best_head] << ", " << res.steps
        << " steps in " << res.wall_seconds << " s\n";
}

struct EvalFlags {
    fs::path pred;
    fs::path truth;
    fs::path out;
    fs::path features;
    fs::path checkpoint;
    fs::path knn;
    std::optional<std::size_t> head;
    bool csv = false;
    bool raw = false;
    std::string method = "temi";
    std::string backbone = "features";
};

void cmd_eval(const EvalFlags& e, std::ostream& out) {
    Manifest manifest("eval", 0);
    const Labels pred = load_labels(e.pred);
    const Labels truth = load_labels(e.truth);
    manifest.input(e.pred);
    manifest.input(e.truth);

    std::optional<Matrix> probs;
    if (!e.checkpoint.empty()) {
        if (e.features.empty()) throw ArgumentError("--checkpoint needs --features");
        const Checkpoint ck = load_checkpoint(e.checkpoint);
        FeatureSet f = load_features_any(e.features);
        if (!e.raw) f = standardize(f);
        std::size_t head = 0;
        if (e.head) {
            head = *e.head;
        } else {
            // Default to the head recorded by `train` next to the checkpoint.
            const fs::path summary = e.checkpoint.parent_path() / "summary.json";
            if (fs::exists(summary)) {
                std::ifstream in(summary);
                head = json::parse(in).value("best_head", std::size_t{0});
            }
        }
        probs = predict(ck.ensemble, head, f).probabilities;
        manifest.input(e.checkpoint);
        manifest.input(e.features);
    }

    EvalReport report = evaluate(pred, truth, probs ? &*probs : nullptr);
    if (!e.knn.empty()) {
        if (!probs) throw ArgumentError("--knn needs --checkpoint and --features for teacher probabilities");
        const NeighborTable nt = load_neighbors(e.knn);
        report.weights = weight_separation(nt, *probs, truth);
        manifest.input(e.knn);
    }

    const std::string text = e.csv ? report_csv_header() + "\n" + report_csv_row(report, e.method, e.backbone) + "\n"
                                   : report_json(report) + "\n";
    if (e.out.empty()) {
        out << text;
    } else {
        write_text(e.out, text);
        manifest.config({{"csv", e.csv}, {"method", e.method}, {"backbone", e.backbone}});
        manifest.output(e.out);
        manifest.write(manifest_for_file(e.out));
        out << "ACC " << report.acc << " NMI " << report.nmi << " ARI " << report.ari << " AMI " << report.ami << "\n";
    }
}

void cmd_kmeans(const fs::path& in_path, KMeansConfig cfg, bool raw, unsigned threads, const fs::path& out_dir, std::ostream& out) {
    Manifest manifest("kmeans", cfg.seed);
    manifest.input(in_path);
    FeatureSet f = load_features_any(in_path);
    if (cfg.k == 0) {
        if (!f.labels) throw ArgumentError("-k is required when the features carry no labels");
        cfg.k = static_cast<std::size_t>(f.num_classes());
    }
    if (!raw) f = standardize(f);
    cfg.threads = resolve_threads(threads);
    const KMeansResult res = kmeans(f, cfg);

    ensure_dir(out_dir);
    const fs::path assign_path = out_dir / "assignments.json";
    write_text(assign_path, assignments_json(res.assignments, cfg.k));
    manifest.output(assign_path);
    json summary{{"inertia", res.inertia}, {"best_restart", res.best_restart}, {"iterations", res.iterations}};
    if (f.labels) {
        const EvalReport r = evaluate(res.assignments, *f.labels);
        const fs::path report_path = out_dir / "report.json";
        write_text(report_path, report_json(r) + "\n");
        manifest.output(report_path);
        out << "k-means ACC " << r.acc << " NMI " << r.nmi << " ARI " << r.ari << " AMI " << r.ami << "\n";
    }
    manifest.config({{"k", cfg.k},
                     {"restarts", cfg.restarts},
                     {"max_iters", cfg.max_iters},
                     {"tol", cfg.tol},
                     {"standardized", !raw},
                     {"result", summary}});
    manifest.write(out_dir / "manifest.json");
    out << "inertia " << res.inertia << " (restart " << res.best_restart << ")\n";
}

void cmd_probe(const fs::path& train_path, const fs::path& eval_path, const ProbeConfig& cfg, bool raw, const fs::path& out_path,
               std::ostream& out) {
    Manifest manifest("probe", cfg.seed);
    manifest.input(train_path);
    manifest.input(eval_path);
    FeatureSet tr = load_features_any(train_path);
    FeatureSet ev = load_features_any(eval_path);
    if (!tr.labels || !ev.labels) throw ArgumentError("probe: both feature files need labels");
    if (!raw) {
        const Standardization st = compute_standardization(tr);
        tr = apply_standardization(tr, st);
        ev = apply_standardization(ev, st);
    }
    const ProbeResult res = linear_probe(tr, ev, cfg);
    json report{{"eval_accuracy", res.eval_accuracy},
                {"train_accuracy", res.train_accuracy},
                {"initial_loss", res.initial_loss},
                {"final_loss", res.epoch_loss.back()},
                {"classes", res.classes},
                {"config", {{"lr", cfg.lr}, {"weight_decay", cfg.weight_decay}, {"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}}}};
    if (out_path.empty()) {
        out << report.dump(2) << "\n";
    } else {
        write_text(out_path, report.dump(2) + "\n");
        manifest.config(report["config"]);
        manifest.output(out_path);
        manifest.write(manifest_for_file(out_path));
        out << "probe accuracy " << res.eval_accuracy << "\n";
    }
}

struct TheoremFlags {
    std::size_t n_x = 6;
    std::size_t classes = 2;
    std::string prior;
    std::string search = "exhaustive";
    bool soft = false;
    TheoremOptions opts;
    fs::path out;
};

void cmd_theorem_check(const TheoremFlags& t, std::ostream& out) {
    Manifest manifest("theorem-check", t.opts.seed);
    Vector prior = Vector::Constant(static_cast<Eigen::Index>(t.classes), 1.0 / static_cast<double>(t.classes));
    if (!t.prior.empty()) {
        const auto values = parse_doubles(t.prior, "--prior");
        if (values.size() != t.classes) throw ArgumentError("--prior needs exactly --classes values");
        prior = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    }
    const TheoremSearch search = t.search == "gradient" ? TheoremSearch::gradient : TheoremSearch::exhaustive;
    DiscreteModel model;
    if (t.soft) {
        Rng rng(derive_seed(t.opts.seed, streams::theorem));
        model = make_random_model(t.n_x, t.classes, rng);
    } else {
        model = make_one_hot_model(t.n_x, prior);
    }
    const TheoremVerdict v = theorem_check(model, search, t.opts);
    const LemmaCheck lemma = lemma_check(model, v.classifier);
    json verdict{{"recovered", v.recovered},
                 {"matched_accuracy", v.matched_accuracy},
                 {"rows_one_hot", v.rows_one_hot},
                 {"objective", v.objective},
                 {"mutual_information", v.mutual_information},
                 {"kl_gap", v.kl_gap},
                 {"lemma_residual", lemma.residual},
                 {"optimizer_failed", v.optimizer_failed},
                 {"candidates", v.candidates},
                 {"model", {{"n_x", t.n_x}, {"classes", t.classes}, {"prior", std::vector<double>(model.prior.begin(), model.prior.end())}, {"one_hot", model.one_hot}}},
                 {"search", std::string(to_string(search))}};
    if (t.out.empty()) {
        out << verdict.dump(2) << "\n";
    } else {
        write_text(t.out, verdict.dump(2) + "\n");
        manifest.config(verdict["model"]);
        manifest.output(t.out);
        manifest.write(manifest_for_file(t.out));
        out << (v.recovered ? "recovered" : "not recovered") << " (matched accuracy " << v.matched_accuracy << ")\n";
    }
}

void cmd_beta_scan(CLI::App& app, TrainFlags& flags, const fs::path& in_path, const fs::path& knn_path, const std::string& betas_text,
                   unsigned threads, const fs::path& out_path, std::ostream& out) {
    FeatureSet f = load_features_any(in_path);
    const NeighborTable nt = load_neighbors(knn_path);
    finalize_train_flags(app, flags, f, nt);
    flags.cfg.threads = resolve_threads(threads);
    if (!flags.raw) f = standardize(f);
    const auto betas = parse_doubles(betas_text, "--betas");

    Manifest manifest("beta-scan", flags.cfg.seed);
    manifest.input(in_path);
    manifest.input(knn_path);
    const auto rows = beta_scan(f, nt, flags.cfg, betas);

    std::ostringstream csv;
    csv << "beta,marginal_entropy,conditional_entropy,kl_to_uniform,max_cluster_fraction,log_c,acc\n";
    csv << std::setprecision(10);
    const double log_c = std::log(static_cast<double>(flags.cfg.clusters));
    for (const auto& r : rows) {
        csv << r.beta << ',' << r.marginal_entropy << ',' << r.conditional_entropy << ',' << r.kl_to_uniform << ','
            << r.max_cluster_fraction << ',' << log_c << ',';
        if (r.acc) csv << *r.acc;
        csv << '\n';
    }
    if (out_path.empty()) {
        out << csv.str();
        return;
    }
    write_text(out_path, csv.str());
    json cfg = train_config_json(flags.cfg, flags.raw);
    cfg["betas"] = betas;
    manifest.config(cfg);
    manifest.output(out_path);
    manifest.write(manifest_for_file(out_path));
    out << "wrote " << rows.size() << " rows to " << out_path.string() << "\n";
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Clustering of frozen feature vectors with self-distilled PMI heads"};
    app.name("temi");
    app.require_subcommand(1);
    Common common;
    app.add_option("--threads", common.threads, "Worker threads (0: TEMI_THREADS or hardware)")->capture_default_str();

    // synth
    SynthConfig synth;
    fs::path synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a Gaussian-blob feature file");
    synth_cmd->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--n-per-class", synth.n_per_class, "Examples per class")->capture_default_str();
    synth_cmd->add_option("--dim", synth.dim, "Feature dimension")->capture_default_str();
    synth_cmd->add_option("--sep", synth.separation, "Centroid radius")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "Within-class standard deviation")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Seed")->capture_default_str();
    synth_cmd->add_option("--stretch", synth.stretch, "Extra std along per-class random axes, in units of --noise")->capture_default_str();
    synth_cmd->add_option("--stretch-dims", synth.stretch_dims, "Random axes per class for --stretch")->capture_default_str();
    synth_cmd->add_option("-o,--out", synth_out, "Output TEMIFEAT file")->required();

    // knn
    fs::path knn_in;
    fs::path knn_out;
    std::size_t knn_k = 50;
    bool knn_self = false;
    bool knn_raw = false;
    auto* knn_cmd = app.add_subcommand("knn", "Mine exact cosine k-nearest neighbors");
    knn_cmd->add_option("-i,--input", knn_in, "Feature file (TEMIFEAT or CSV)")->required();
    knn_cmd->add_option("-k", knn_k, "Neighbors per example")->capture_default_str();
    knn_cmd->add_option("-o,--out", knn_out, "Output neighbor file")->required();
    knn_cmd->add_flag("--include-self", knn_self, "Allow an example to be its own neighbor");
    knn_cmd->add_flag("--raw", knn_raw, "Mine on raw instead of standardized features");

    // train
    TrainFlags train_flags;
    fs::path train_in;
    fs::path train_knn;
    fs::path train_out;
    bool no_log = false;
    auto* train_cmd = app.add_subcommand("train", "Train the student/teacher clustering heads");
    train_cmd->add_option("-i,--input", train_in, "Feature file")->required();
    train_cmd->add_option("--knn", train_knn, "Neighbor file from `knn`")->required();
    train_cmd->add_option("-o,--out", train_out, "Output directory")->required();
    train_cmd->add_flag("--no-log", no_log, "Skip the per-step JSON-lines log");
    add_train_flags(*train_cmd, train_flags);

    // eval
    EvalFlags eval;
    std::size_t eval_head = 0;
    auto* eval_cmd = app.add_subcommand("eval", "Score predicted clusters against ground truth");
    eval_cmd->add_option("--pred", eval.pred, "Assignments JSON")->required();
    eval_cmd->add_option("--truth", eval.truth, "Ground truth: assignments/labels JSON or labeled feature file")->required();
    eval_cmd->add_option("-o,--out", eval.out, "Report path (default: stdout)");
    eval_cmd->add_flag("--csv", eval.csv, "Emit one CSV row (method, backbone, ACC, NMI, ARI, AMI) instead of JSON");
    eval_cmd->add_option("--method", eval.method, "Method name for the CSV row")->capture_default_str();
    eval_cmd->add_option("--backbone", eval.backbone, "Backbone tag for the CSV row")->capture_default_str();
    eval_cmd->add_option("--features", eval.features, "Features for teacher diagnostics");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint for teacher diagnostics");
    auto* head_opt = eval_cmd->add_option("--head", eval_head, "Teacher head (default: best head from summary.json)");
    eval_cmd->add_option("--knn", eval.knn, "Neighbor file for true/false pair weight separation");
    eval_cmd->add_flag("--raw", eval.raw, "Use raw instead of standardized features");

    // kmeans
    KMeansConfig km;
    km.k = 0;
    fs::path km_in;
    fs::path km_out;
    bool km_raw = false;
    auto* km_cmd = app.add_subcommand("kmeans", "k-means++ baseline");
    km_cmd->add_option("-i,--input", km_in, "Feature file")->required();
    km_cmd->add_option("-k", km.k, "Clusters (default: classes in the labels)");
    km_cmd->add_option("--restarts", km.restarts, "Restarts")->capture_default_str();
    km_cmd->add_option("--max-iters", km.max_iters, "Lloyd iterations per restart")->capture_default_str();
    km_cmd->add_option("--tol", km.tol, "Relative inertia change that stops a restart")->capture_default_str();
    km_cmd->add_option("--seed", km.seed, "Seed")->capture_default_str();
    km_cmd->add_option("-o,--out", km_out, "Output directory")->required();
    km_cmd->add_flag("--raw", km_raw, "Cluster raw instead of standardized features");

    // probe
    ProbeConfig probe;
    fs::path probe_train;
    fs::path probe_eval;
    fs::path probe_out;
    bool probe_raw = false;
    auto* probe_cmd = app.add_subcommand("probe", "Supervised linear-probe reference");
    probe_cmd->add_option("--train", probe_train, "Labeled training features")->required();
    probe_cmd->add_option("--eval", probe_eval, "Labeled evaluation features")->required();
    probe_cmd->add_option("--lr", probe.lr, "Learning rate")->capture_default_str();
    probe_cmd->add_option("--wd", probe.weight_decay, "Weight decay")->capture_default_str();
    probe_cmd->add_option("--epochs", probe.epochs, "Epochs")->capture_default_str();
    probe_cmd->add_option("--batch", probe.batch_size, "Batch size")->capture_default_str();
    probe_cmd->add_option("--seed", probe.seed, "Seed")->capture_default_str();
    probe_cmd->add_option("-o,--out", probe_out, "Report path (default: stdout)");
    probe_cmd->add_flag("--raw", probe_raw, "Use raw instead of standardized features");

    // theorem-check
    TheoremFlags thm;
    auto* thm_cmd = app.add_subcommand("theorem-check", "Brute-force check that maximizing expected pmi recovers p(c|x)");
    thm_cmd->add_option("--nx", thm.n_x, "Number of discrete examples")->capture_default_str();
    thm_cmd->add_option("--classes", thm.classes, "Number of classes")->capture_default_str();
    thm_cmd->add_option("--prior", thm.prior, "Comma-separated class prior (default uniform)");
    thm_cmd->add_option("--search", thm.search, "exhaustive or gradient")
        ->check(CLI::IsMember({"exhaustive", "gradient"}))
        ->capture_default_str();
    thm_cmd->add_flag("--soft", thm.soft, "Use a random soft model (theorem precondition violated)");
    thm_cmd->add_option("--restarts", thm.opts.restarts, "Gradient restarts")->capture_default_str();
    thm_cmd->add_option("--iterations", thm.opts.iterations, "Gradient iterations per restart")->capture_default_str();
    thm_cmd->add_option("--step", thm.opts.step, "Gradient step size")->capture_default_str();
    thm_cmd->add_option("--seed", thm.opts.seed, "Seed")->capture_default_str();
    thm_cmd->add_option("-o,--out", thm.out, "Verdict path (default: stdout)");

    // beta-scan
    TrainFlags scan_flags;
    fs::path scan_in;
    fs::path scan_knn;
    fs::path scan_out;
    std::string betas = "0.55,0.6,0.7,0.8,0.9,1.0";
    auto* scan_cmd = app.add_subcommand("beta-scan", "Train once per beta and report the entropy trade-off");
    scan_cmd->add_option("-i,--input", scan_in, "Feature file")->required();
    scan_cmd->add_option("--knn", scan_knn, "Neighbor file")->required();
    scan_cmd->add_option("--betas", betas, "Comma-separated beta grid in (0.5, 1]")->capture_default_str();
    scan_cmd->add_option("-o,--out", scan_out, "Sweep CSV (default: stdout)");
    add_train_flags(*scan_cmd, scan_flags);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name());
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        for (auto* sub : app.get_subcommands()) {
            if (sub->get_help_ptr() != nullptr && sub->get_help_ptr()->count() > 0) {
                out << sub->help();
                return 0;
            }
        }
        err << "error[argument]: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::argument);
    }

    try {
        if (synth_cmd->parsed()) cmd_synth(synth, synth_out, out);
        else if (knn_cmd->parsed()) cmd_knn(knn_in, knn_k, knn_self, knn_raw, common.threads, knn_out, out);
        else if (train_cmd->parsed()) cmd_train(*train_cmd, train_flags, train_in, train_knn, train_out, common.threads, !no_log, out);
        else if (eval_cmd->parsed()) {
            if (head_opt->count() > 0) eval.head = eval_head;
            cmd_eval(eval, out);
        } else if (km_cmd->parsed()) cmd_kmeans(km_in, km, km_raw, common.threads, km_out, out);
        else if (probe_cmd->parsed()) cmd_probe(probe_train, probe_eval, probe, probe_raw, probe_out, out);
        else if (thm_cmd->parsed()) cmd_theorem_check(thm, out);
        else if (scan_cmd->parsed()) cmd_beta_scan(*scan_cmd, scan_flags, scan_in, scan_knn, betas, common.threads, scan_out, out);
    } catch (const Error& e) {
        err << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error[io]: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::io);
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return kInternalExit;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

} // namespace temi::cli
