#include "ginger/rank_one_update.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace ginger {

namespace {

constexpr double kResidualTol = 1e-12;
constexpr double kSymmetryTol = 1e-10;
constexpr double kNegativeDustTol = 1e-10;
constexpr double kTieTol = 1e-12;
constexpr int kMaxJacobiSweeps = 100;

// Two passes of classical Gram-Schmidt against the columns of u. The second
// pass removes what rounding left behind in the first, so the residual stays
// orthogonal to span(u) even when it is tiny relative to h.
double project_out(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Vector>& h,
                   Vector& coeffs, Vector& residual) {
    coeffs.noalias() = u.transpose() * h;
    residual = h;
    residual.noalias() -= u * coeffs;
    Vector again = u.transpose() * residual;
    residual.noalias() -= u * again;
    coeffs += again;
    return residual.norm();
}

double residual_threshold(const Eigen::Ref<const Vector>& h) {
    return kResidualTol * std::max(1.0, h.norm());
}

// Clamps rounding-level negative eigenvalues to zero and rejects real ones.
void clamp_negative(Vector& w, double scale) {
    const double floor = -kNegativeDustTol * std::max(scale, 1e-300);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) < floor) {
            throw InvariantError("r1u: input is not positive semi-definite (eigenvalue " +
                                 std::to_string(w(i)) + ")");
        }
        if (w(i) < 0.0) w(i) = 0.0;
    }
}

}  // namespace

void canonicalize_signs(Matrix& vectors) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
        if (vectors.rows() == 0) return;
        Eigen::Index arg = 0;
        vectors.col(j).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
    }
}

Residual orthonormal_residual(const Eigen::Ref<const Matrix>& u,
                              const Eigen::Ref<const Vector>& h) {
    if (u.rows() != h.size()) {
        throw ParameterError("orthonormal_residual: basis has " + std::to_string(u.rows()) +
                             " rows but h has length " + std::to_string(h.size()));
    }
    if (!h.allFinite()) throw InputError("orthonormal_residual: h has non-finite entries");

    Vector coeffs;
    Vector residual;
    const double r = project_out(u, h, coeffs, residual);
    Residual out;
    if (r <= residual_threshold(h)) {
        out.norm = r;
        return out;
    }
    out.norm = r;
    out.direction = residual / r;
    return out;
}

SymmetricEigen small_eigh(const Eigen::Ref<const Matrix>& c) {
    const Eigen::Index n = c.rows();
    if (c.cols() != n) throw InputError("small_eigh: matrix is not square");
    if (!c.allFinite()) throw InputError("small_eigh: matrix has non-finite entries");
    const double scale = std::max(1.0, c.norm());
    if ((c - c.transpose()).norm() > kSymmetryTol * scale) {
        throw InputError("small_eigh: matrix is not symmetric");
    }

    Matrix a = 0.5 * (c + c.transpose());
    Matrix v = Matrix::Identity(n, n);

    auto off_diagonal = [&] {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    const double target = std::numeric_limits<double>::epsilon() * a.norm();
    int sweep = 0;
    for (; sweep < kMaxJacobiSweeps; ++sweep) {
        if (off_diagonal() <= target) break;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                // A <- J^T A J with J the (p, q) Givens rotation.
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = cs * akp - sn * akq;
                    a(k, q) = sn * akp + cs * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = cs * apk - sn * aqk;
                    a(q, k) = sn * apk + cs * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = cs * vkp - sn * vkq;
                    v(k, q) = sn * vkp + cs * vkq;
                }
            }
        }
    }
    if (sweep == kMaxJacobiSweeps && off_diagonal() > 1e3 * target) {
        throw NumericalError("small_eigh: Jacobi iteration did not converge");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto src = order[static_cast<std::size_t>(k)];
        out.values(k) = a(src, src);
        out.vectors.col(k) = v.col(src);
    }
    canonicalize_signs(out.vectors);
    return out;
}

void r1u_into(const Eigen::Ref<const Matrix>& basis, const Eigen::Ref<const Vector>& diag,
              const Eigen::Ref<const Vector>& v, Eigen::Index target_rank,
              Matrix& out_basis, Vector& out_diag, R1uWorkspace* workspace) {
    const Eigen::Index d = basis.rows();
    const Eigen::Index tau = basis.cols();
    if (diag.size() != tau) throw ParameterError("r1u: basis/diag rank mismatch");
    if (v.size() != d) throw ParameterError("r1u: vector length does not match basis rows");
    if (target_rank < 1 || target_rank > tau + 1) {
        throw ParameterError("r1u: target rank must lie in [1, rank + 1]");
    }
    if (!v.allFinite()) throw InputError("r1u: update vector has non-finite entries");

    R1uWorkspace local;
    R1uWorkspace& ws = workspace != nullptr ? *workspace : local;
    Vector& m = ws.coeffs;
    Vector& residual = ws.residual;
    const double r = project_out(basis, v, m, residual);
    const bool degenerate = r <= residual_threshold(v);

    const Eigen::Index n = degenerate ? tau : tau + 1;
    Matrix core = Matrix::Zero(n, n);
    core.topLeftCorner(tau, tau) = diag.asDiagonal();
    core.topLeftCorner(tau, tau).noalias() += m * m.transpose();
    if (!degenerate) {
        core.block(0, tau, tau, 1) = r * m;
        core.block(tau, 0, 1, tau) = r * m.transpose();
        core(tau, tau) = r * r;
    }

    SymmetricEigen eig = small_eigh(core);
    clamp_negative(eig.values, core.norm());

    const Eigen::Index keep = std::min(target_rank, n);
    if (!degenerate && keep < n && keep >= 1) {
        const double gap = eig.values(keep - 1) - eig.values(keep);
        if (gap <= kTieTol * std::max(1.0, eig.values(0))) {
            // Tied at the cut: keep the eigenvector with less weight on the new direction.
            if (std::abs(eig.vectors(tau, keep - 1)) > std::abs(eig.vectors(tau, keep))) {
                eig.vectors.col(keep - 1).swap(eig.vectors.col(keep));
                std::swap(eig.values(keep - 1), eig.values(keep));
            }
        }
    }

    out_basis.resize(d, keep);
    out_basis.noalias() = basis * eig.vectors.topLeftCorner(tau, keep);
    if (!degenerate) {
        out_basis.noalias() += residual * (eig.vectors.block(tau, 0, 1, keep) / r);
    }
    out_diag = eig.values.head(keep);
    canonicalize_signs(out_basis);
}

EigenPair r1u(const EigenPair& pair, const Eigen::Ref<const Vector>& v,
              Eigen::Index target_rank) {
    EigenPair out;
    r1u_into(pair.basis, pair.diag, v, target_rank, out.basis, out.diag);
    return out;
}

}  // namespace ginger
