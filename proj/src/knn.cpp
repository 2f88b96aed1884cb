#include "temi/knn.hpp"

#include "binary_io.hpp"
#include "temi/error.hpp"
#include "temi/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace temi {

namespace {

constexpr std::string_view kMagic = "TEMIKNN0";
constexpr std::uint32_t kVersion = 1;
constexpr double kZeroRowEps = 1e-12;
constexpr Eigen::Index kBlockRows = 256;

Matrix unit_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        double norm = out.row(i).norm();
        if (norm == 0.0) {
            out.row(i).setConstant(kZeroRowEps);
            norm = out.row(i).norm();
        }
        out.row(i) /= norm;
    }
    return out;
}

} // namespace

NeighborTable mine_knn(const FeatureSet& fs, std::size_t k, const KnnOptions& opts) {
    const std::size_t n = fs.n();
    const std::size_t max_k = opts.include_self ? n : n - 1;
    require_arg(k >= 1 && k <= max_k, "knn: k must be in [1, " + std::to_string(max_k) + "], got " + std::to_string(k));

    const Matrix unit = unit_rows(fs.data);
    NeighborTable nt;
    nt.n = n;
    nt.k = k;
    nt.idx.resize(n * k);
    nt.sim.resize(n * k);

    const auto rows = static_cast<Eigen::Index>(n);
    const std::size_t blocks = static_cast<std::size_t>((rows + kBlockRows - 1) / kBlockRows);
    parallel_for(blocks, opts.threads, [&](std::size_t b) {
        const Eigen::Index begin = static_cast<Eigen::Index>(b) * kBlockRows;
        const Eigen::Index count = std::min(kBlockRows, rows - begin);
        const Matrix sims = unit.middleRows(begin, count) * unit.transpose();
        std::vector<std::int64_t> order(n);
        for (Eigen::Index r = 0; r < count; ++r) {
            const auto self = static_cast<std::int64_t>(begin + r);
            order.resize(n);
            std::iota(order.begin(), order.end(), std::int64_t{0});
            if (!opts.include_self) order.erase(order.begin() + self);
            auto row_sim = sims.row(r);
            auto better = [&](std::int64_t a, std::int64_t c) {
                const double sa = row_sim(a);
                const double sc = row_sim(c);
                return sa > sc || (sa == sc && a < c);
            };
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
            const std::size_t base = static_cast<std::size_t>(self) * k;
            for (std::size_t j = 0; j < k; ++j) {
                nt.idx[base + j] = order[j];
                nt.sim[base + j] = std::clamp(row_sim(order[j]), -1.0, 1.0);
            }
        }
    });
    return nt;
}

double true_positive_rate(const NeighborTable& nt, const Labels& labels) {
    require_arg(labels.size() == nt.n, "true_positive_rate: label length " + std::to_string(labels.size()) +
                                           " differs from n=" + std::to_string(nt.n));
    if (nt.n == 0 || nt.k == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < nt.n; ++i)
        for (std::size_t j = 0; j < nt.k; ++j)
            if (labels[i] == labels[static_cast<std::size_t>(nt.neighbor(i, j))]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(nt.n * nt.k);
}

void validate(const NeighborTable& nt) {
    if (nt.idx.size() != nt.n * nt.k || nt.sim.size() != nt.n * nt.k)
        throw ValidationError("neighbor table storage does not match n x k");
    for (std::size_t i = 0; i < nt.n; ++i) {
        for (std::size_t j = 0; j < nt.k; ++j) {
            const auto id = nt.neighbor(i, j);
            const double s = nt.similarity(i, j);
            if (id < 0 || static_cast<std::size_t>(id) >= nt.n)
                throw ValidationError("neighbor index out of range in row " + std::to_string(i));
            if (!(s >= -1.0 && s <= 1.0)) throw ValidationError("similarity outside [-1, 1] in row " + std::to_string(i));
            if (j > 0 && s > nt.similarity(i, j - 1))
                throw ValidationError("similarities not non-increasing in row " + std::to_string(i));
        }
    }
}

void save_neighbors(const NeighborTable& nt, const std::filesystem::path& path) {
    validate(nt);
    detail::BinaryWriter w(path.string());
    w.magic(kMagic);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint64_t>(nt.n);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(nt.k));
    for (auto id : nt.idx) w.put<std::int64_t>(id);
    for (auto s : nt.sim) w.put<float>(static_cast<float>(s));
    w.finish();
}

NeighborTable load_neighbors(const std::filesystem::path& path) {
    detail::BinaryReader r(path.string());
    r.expect_magic(kMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw FormatError(path.string() + ": unsupported TEMIKNN0 version " + std::to_string(version));
    NeighborTable nt;
    nt.n = r.get<std::uint64_t>();
    nt.k = r.get<std::uint32_t>();
    if (nt.k == 0 || nt.n == 0 || nt.n > (std::uint64_t{1} << 36) / nt.k) throw FormatError(path.string() + ": implausible header");
    nt.idx.resize(nt.n * nt.k);
    nt.sim.resize(nt.n * nt.k);
    for (auto& id : nt.idx) id = r.get<std::int64_t>();
    for (auto& s : nt.sim) s = r.get<float>();
    if (!r.at_eof()) throw FormatError(path.string() + ": trailing bytes after payload");
    validate(nt);
    return nt;
}

} // namespace temi
