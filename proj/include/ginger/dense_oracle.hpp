#pragma once

// Brute-force O(d^2)..O(d^3) references for everything the low-rank path
// approximates. Used only by tests, the verify command and the acceptance
// suite; all entry points refuse dimensions above kDenseGuard.

#include "ginger/common.hpp"
#include "ginger/optimizers.hpp"
#include "ginger/rank_one_update.hpp"
#include "ginger/tasks.hpp"

#include <cstdint>
#include <span>

namespace ginger::oracle {

/// Undamped moving average G_t = alpha G_{t-1} + (1 - alpha) d d^T, starting
/// from zero, with the damping gamma carried separately.
struct DenseGgn {
    double gamma = 1e-4;
    double alpha = 0.99;
    Matrix ema;
    std::uint64_t step = 0;

    static DenseGgn zero(Eigen::Index dim, double gamma, double alpha);
    Matrix damped() const;  // gamma I + ema
};

DenseGgn ema_update_dense(DenseGgn oracle, const Eigen::Ref<const Vector>& d_t);

/// (gamma I + ema)^{-1} g by Cholesky.
Vector dense_inverse_direction(const DenseGgn& oracle, const Eigen::Ref<const Vector>& g);

/// Top-tau eigenpairs of a symmetric matrix via a full dense eigensolver.
EigenPair best_rank_tau(const Eigen::Ref<const Matrix>& m, Eigen::Index tau);

/// All eigenvalues of a symmetric matrix, descending.
Vector eigenvalues_desc(const Eigen::Ref<const Matrix>& m);

/// U (K / alpha) U^T + beta h h^T, with K = K_{t-1, gamma/alpha}.
Matrix sherman_morrison_target(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Vector>& k,
                               const Eigen::Ref<const Vector>& h, double beta, double alpha);

/// Spectral-norm distance between the orthogonal projectors onto span(a), span(b).
double projector_distance(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// The low-rank recursion carried out with dense matrices only: invert the
/// exact moving-average update, truncate gamma^{-1} I - inverse to its best
/// rank-tau part, and map back. Shares no code with the fast path.
class RecursiveTruncation {
public:
    RecursiveTruncation(Eigen::Index dim, Eigen::Index tau, double gamma, double alpha);

    void step(const Eigen::Ref<const Vector>& d_t);

    Matrix damped() const;             // gamma I + low-rank part
    const Matrix& last_target() const { return target_; }  // untruncated complement before the cut
    const Matrix& last_truncated() const { return truncated_; }

private:
    Eigen::Index tau_;
    double gamma_;
    double alpha_;
    Matrix lowrank_;
    Matrix target_;
    Matrix truncated_;
};

/// Dense A A^T for the truncated QNG factor product.
Matrix qng_dense_ggn(const QngState& state, Eigen::Index dim);

/// Analytic per-batch Fisher (1/|B|) sum_x J^T (diag(p) - p p^T) J.
Matrix softmax_fisher(const TaskInstance& task, std::span<const Eigen::Index> batch);

/// Output-space Hessian of -log softmax(z)_y with respect to z.
Matrix softmax_output_hessian(const Eigen::Ref<const Vector>& probs);

/// Central finite differences of the mean batch loss.
Vector finite_difference_grad(const TaskInstance& task, std::span<const Eigen::Index> batch,
                              double step = 1e-5);

}  // namespace ginger::oracle
