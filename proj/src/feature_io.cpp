#include "temi/feature_io.hpp"

#include "binary_io.hpp"
#include "temi/error.hpp"
#include "temi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace temi {

namespace {

constexpr std::string_view kMagic = "TEMIFEAT";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u << 0;
constexpr std::uint32_t kFlagMeta = 1u << 1;

constexpr double kMinStd = 1e-12;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

int FeatureSet::num_classes() const {
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
}

void validate(const FeatureSet& fs) {
    if (fs.n() < 2) throw ValidationError("feature set needs at least 2 examples");
    if (fs.d() < 1) throw ValidationError("feature set needs at least 1 dimension");
    if (!fs.data.allFinite()) throw ValidationError("feature matrix contains non-finite values");
    if (fs.labels) {
        if (fs.labels->size() != fs.n()) throw ValidationError("label vector length differs from n");
        for (auto l : *fs.labels)
            if (l < 0) throw ValidationError("negative label " + std::to_string(l));
    }
}

FeatureSet generate_synthetic(const SynthConfig& cfg) {
    require_arg(cfg.classes >= 2, "synth: classes must be >= 2");
    require_arg(cfg.n_per_class >= 2, "synth: n_per_class must be >= 2");
    require_arg(cfg.dim >= 1, "synth: dim must be >= 1");
    require_arg(cfg.separation >= 0.0, "synth: separation must be >= 0");
    require_arg(cfg.noise > 0.0, "synth: noise must be > 0");
    require_arg(cfg.stretch >= 0.0, "synth: stretch must be >= 0");

    const auto classes = static_cast<std::size_t>(cfg.classes);
    const std::size_t d = cfg.dim;

    Rng centroid_rng(derive_seed(cfg.seed, streams::synth_centroids));
    Rng noise_rng(derive_seed(cfg.seed, streams::synth_noise));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix centroids(classes, d);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t j = 0; j < d; ++j) centroids(c, j) = gauss(centroid_rng);
        const double norm = centroids.row(c).norm();
        if (norm > 0.0) centroids.row(c) *= cfg.separation / norm;
    }

    const bool stretched = cfg.stretch > 0.0 && cfg.stretch_dims > 0;
    std::vector<Matrix> axes;
    Rng stretch_rng(derive_seed(cfg.seed, streams::synth_stretch));
    if (stretched) {
        for (std::size_t c = 0; c < classes; ++c) {
            Matrix a(cfg.stretch_dims, d);
            for (std::size_t r = 0; r < cfg.stretch_dims; ++r) {
                for (std::size_t j = 0; j < d; ++j) a(r, j) = gauss(stretch_rng);
                a.row(r).normalize();
            }
            axes.push_back(std::move(a));
        }
    }

    FeatureSet fs;
    fs.data.resize(classes * cfg.n_per_class, d);
    fs.labels = Labels(fs.n());
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < cfg.n_per_class; ++i, ++row) {
            for (std::size_t j = 0; j < d; ++j) {
                const double v = centroids(c, j) + cfg.noise * gauss(noise_rng);
                fs.data(row, j) = v;
            }
            if (stretched) {
                for (std::size_t r = 0; r < cfg.stretch_dims; ++r)
                    fs.data.row(row) += (cfg.noise * cfg.stretch * gauss(stretch_rng)) * axes[c].row(r);
            }
            for (std::size_t j = 0; j < d; ++j) fs.data(row, j) = static_cast<double>(static_cast<float>(fs.data(row, j)));
            (*fs.labels)[row] = static_cast<std::int32_t>(c);
        }
    }
    std::ostringstream meta;
    meta << "synthetic classes=" << cfg.classes << " n_per_class=" << cfg.n_per_class << " dim=" << cfg.dim
         << " separation=" << cfg.separation << " noise=" << cfg.noise << " seed=" << cfg.seed;
    if (stretched) meta << " stretch=" << cfg.stretch << " stretch_dims=" << cfg.stretch_dims;
    fs.meta = meta.str();
    return fs;
}

Standardization compute_standardization(const FeatureSet& fs) {
    require_arg(fs.n() >= 2, "standardize: need n >= 2");
    Standardization st;
    st.mean = fs.data.colwise().mean().transpose();
    st.scale.resize(static_cast<Eigen::Index>(fs.d()));
    const double n = static_cast<double>(fs.n());
    for (Eigen::Index j = 0; j < fs.data.cols(); ++j) {
        const double var = (fs.data.col(j).array() - st.mean(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        st.scale(j) = sd < kMinStd ? 1.0 : sd;
    }
    return st;
}

FeatureSet apply_standardization(const FeatureSet& fs, const Standardization& st) {
    require_arg(st.mean.size() == static_cast<Eigen::Index>(fs.d()), "standardize: dimension mismatch");
    FeatureSet out = fs;
    out.data = (fs.data.rowwise() - st.mean.transpose()).array().rowwise() / st.scale.transpose().array();
    return out;
}

FeatureSet standardize(const FeatureSet& fs) { return apply_standardization(fs, compute_standardization(fs)); }

void save_features(const FeatureSet& fs, const std::filesystem::path& path) {
    validate(fs);
    detail::BinaryWriter w(path.string());
    w.magic(kMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(fs.n());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(fs.d()));
    std::uint32_t flags = 0;
    if (fs.labels) flags |= kFlagLabels;
    if (!fs.meta.empty()) flags |= kFlagMeta;
    w.put<std::uint32_t>(flags);
    for (Eigen::Index i = 0; i < fs.data.rows(); ++i)
        for (Eigen::Index j = 0; j < fs.data.cols(); ++j) w.put<float>(static_cast<float>(fs.data(i, j)));
    if (fs.labels)
        for (auto l : *fs.labels) w.put<std::int32_t>(l);
    if (!fs.meta.empty()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(fs.meta.size()));
        w.bytes(fs.meta);
    }
    w.finish();
}

FeatureSet load_features(const std::filesystem::path& path) {
    detail::BinaryReader r(path.string());
    r.expect_magic(kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError(path.string() + ": unsupported TEMIFEAT version " + std::to_string(version));
    const auto n = r.get<std::uint64_t>();
    const auto d = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint32_t>();
    if ((flags & ~(kFlagLabels | kFlagMeta)) != 0) throw FormatError(path.string() + ": unknown flag bits");
    if (n < 2 || d < 1) throw ValidationError(path.string() + ": header declares n < 2 or d < 1");
    // Reject absurd headers before allocating.
    if (n > (std::uint64_t{1} << 40) / d) throw FormatError(path.string() + ": implausible header size");

    FeatureSet fs;
    fs.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) fs.data(static_cast<Eigen::Index>(i), j) = r.get<float>();
    if (flags & kFlagLabels) {
        fs.labels = Labels(n);
        for (auto& l : *fs.labels) l = r.get<std::int32_t>();
    }
    if (flags & kFlagMeta) {
        const auto len = r.get<std::uint32_t>();
        fs.meta = r.bytes(len);
    }
    if (!r.at_eof()) throw FormatError(path.string() + ": trailing bytes after payload");
    validate(fs);
    return fs;
}

FeatureSet load_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty CSV");
    const auto header = split_csv_line(line);
    bool has_label = !header.empty() && header.back() == "label";
    const std::size_t d = header.size() - (has_label ? 1 : 0);
    for (std::size_t j = 0; j < d; ++j)
        if (header[j] != "f" + std::to_string(j))
            throw ValidationError(path.string() + ": bad CSV header column '" + header[j] + "'");

    std::vector<std::vector<double>> rows;
    Labels labels;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ValidationError(path.string() + ": row " + std::to_string(rows.size() + 1) + " has wrong column count");
        std::vector<double> row(d);
        try {
            for (std::size_t j = 0; j < d; ++j) row[j] = std::stod(cells[j]);
            if (has_label) labels.push_back(static_cast<std::int32_t>(std::stol(cells[d])));
        } catch (const std::exception&) {
            throw ValidationError(path.string() + ": unparsable number in row " + std::to_string(rows.size() + 1));
        }
        rows.push_back(std::move(row));
    }

    FeatureSet fs;
    fs.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) fs.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    if (has_label) fs.labels = std::move(labels);
    fs.meta = "csv:" + path.filename().string();
    validate(fs);
    return fs;
}

FeatureSet load_features_any(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string head(kMagic.size(), '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    if (in.gcount() == static_cast<std::streamsize>(kMagic.size()) && head == kMagic) return load_features(path);
    return load_features_csv(path);
}

} // namespace temi
