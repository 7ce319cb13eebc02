#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace switchsynth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct GeometryError : Error {
    using Error::Error;
};

struct SingularCovariance : Error {
    using Error::Error;
};

struct UnderflowedFactor : Error {
    using Error::Error;
};

struct NonConvergence : Error {
    using Error::Error;
};

struct BuildError : Error {
    using Error::Error;
};

struct ModelError : Error {
    using Error::Error;
};

// Probabilities below this are treated as zero when rounding kernel outputs.
inline constexpr double kProbFloor = 1e-15;

}  // namespace switchsynth
