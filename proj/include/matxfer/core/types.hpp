#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace matxfer {

// Batch-major dense matrix: rows are batch items (rays, samples, cells),
// columns are channels.
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec3 = Eigen::Vector3d;
using Mat4 = Eigen::Matrix4d;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace matxfer
