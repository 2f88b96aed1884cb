#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace temi {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

using Labels = std::vector<std::int32_t>;

} // namespace temi
