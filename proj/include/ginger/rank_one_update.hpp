#pragma once

#include "ginger/common.hpp"

#include <optional>

namespace ginger {

/// Thin eigendecomposition `basis * diag(diag) * basis^T` of a PSD matrix.
/// The basis is semi-orthogonal and the diagonal is nonnegative and sorted
/// in descending order.
struct EigenPair {
    Matrix basis;
    Vector diag;

    Eigen::Index dim() const { return basis.rows(); }
    Eigen::Index rank() const { return basis.cols(); }
    Matrix dense() const { return basis * diag.asDiagonal() * basis.transpose(); }
};

struct Residual {
    std::optional<Vector> direction;  // unit vector orthogonal to span(U); empty when degenerate
    double norm = 0.0;
};

/// Splits h into its component inside span(U) and a unit direction outside
/// it: h = U (U^T h) + norm * direction. The direction is absent when
/// norm <= 1e-12 * max(1, ||h||).
Residual orthonormal_residual(const Eigen::Ref<const Matrix>& u,
                              const Eigen::Ref<const Vector>& h);

struct SymmetricEigen {
    Matrix vectors;  // orthogonal, columns match `values`
    Vector values;   // descending
};

/// Full eigendecomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Columns are sign-canonicalized so that each column's
/// largest-magnitude entry is positive.
SymmetricEigen small_eigh(const Eigen::Ref<const Matrix>& c);

/// Rank-one update of a thin eigendecomposition: returns the top
/// `target_rank` eigenpairs of U K U^T + v v^T in O(d r^2 + r^3) time
/// without forming a d x d matrix.
EigenPair r1u(const EigenPair& pair, const Eigen::Ref<const Vector>& v,
              Eigen::Index target_rank);

/// Reusable buffers for r1u_into, so repeated updates do not allocate
/// d-length vectors.
struct R1uWorkspace {
    Vector coeffs;
    Vector residual;
};

/// Same as r1u, writing into caller-owned buffers. `out_basis` must not alias
/// `basis`.
void r1u_into(const Eigen::Ref<const Matrix>& basis, const Eigen::Ref<const Vector>& diag,
              const Eigen::Ref<const Vector>& v, Eigen::Index target_rank,
              Matrix& out_basis, Vector& out_diag, R1uWorkspace* workspace = nullptr);

/// Makes the largest-magnitude entry of every column positive.
void canonicalize_signs(Matrix& vectors);

}  // namespace ginger
