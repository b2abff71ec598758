#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace topicattn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

} // namespace topicattn
