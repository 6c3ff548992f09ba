#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <limits>
#include <stdexcept>
#include <string>

namespace simshoot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Malformed dimensions, indices, or argument shapes.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure while evaluating dynamics or derived quantities
/// (non-finite states, implicit step divergence, inner solve divergence).
/// Recoverable inside a line search; fatal at an accepted iterate.
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Failure to parse or validate external inputs (JSON configs, models).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace simshoot
