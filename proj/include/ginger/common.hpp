#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ginger {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Largest dimension for which a d x d matrix is ever materialized.
inline constexpr Eigen::Index kDenseGuard = 4096;

// Invalid hyperparameter, shape or configuration.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite or otherwise malformed input data.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Eigensolver failure or a value escaping its mathematically guaranteed range.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A documented invariant (PSD input, orthogonality) does not hold.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Dense operation requested above kDenseGuard.
class RefusalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void require_dense_size(Eigen::Index d, const char* what) {
    if (d > kDenseGuard) {
        throw RefusalError(std::string(what) + ": dimension " + std::to_string(d) +
                           " exceeds dense limit " + std::to_string(kDenseGuard));
    }
}

// ||Q^T Q - I||_F
inline double orthogonality_residual(const Eigen::Ref<const Matrix>& q) {
    const Eigen::Index r = q.cols();
    return (q.transpose() * q - Matrix::Identity(r, r)).norm();
}

}  // namespace ginger
