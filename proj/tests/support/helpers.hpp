#pragma once

#include "oracles.hpp"
#include "temi/types.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

namespace testing_support {

inline oracle::Mat to_rows(const temi::Matrix& m) {
    oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return out;
}

inline oracle::Vec to_vec(const temi::Vector& v) { return {v.data(), v.data() + v.size()}; }

inline temi::Vector from_vec(const oracle::Vec& v) {
    return Eigen::Map<const temi::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline temi::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    temi::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

/// Random probability vector with all entries bounded away from zero.
inline temi::Vector random_prob(Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    temi::Vector p(c);
    for (Eigen::Index i = 0; i < c; ++i) p(i) = u(rng);
    return p / p.sum();
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("temi_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

} // namespace testing_support
