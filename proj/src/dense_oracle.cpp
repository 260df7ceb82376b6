#include "ginger/dense_oracle.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace ginger::oracle {

DenseGgn DenseGgn::zero(Eigen::Index dim, double gamma, double alpha) {
    require_dense_size(dim, "DenseGgn");
    if (!(gamma > 0.0)) throw ParameterError("DenseGgn: gamma must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("DenseGgn: alpha must lie in (0, 1)");
    return DenseGgn{gamma, alpha, Matrix::Zero(dim, dim), 0};
}

Matrix DenseGgn::damped() const {
    Matrix g = ema;
    g.diagonal().array() += gamma;
    return g;
}

DenseGgn ema_update_dense(DenseGgn oracle, const Eigen::Ref<const Vector>& d_t) {
    if (d_t.size() != oracle.ema.rows()) throw ParameterError("ema_update_dense: length mismatch");
    if (!d_t.allFinite()) throw InputError("ema_update_dense: d_t has non-finite entries");
    oracle.ema *= oracle.alpha;
    oracle.ema.noalias() += (1.0 - oracle.alpha) * d_t * d_t.transpose();
    ++oracle.step;
    return oracle;
}

Vector dense_inverse_direction(const DenseGgn& oracle, const Eigen::Ref<const Vector>& g) {
    require_dense_size(oracle.ema.rows(), "dense_inverse_direction");
    if (g.size() != oracle.ema.rows()) throw ParameterError("dense_inverse_direction: length mismatch");
    Eigen::LLT<Matrix> llt(oracle.damped());
    if (llt.info() != Eigen::Success) throw NumericalError("dense_inverse_direction: Cholesky failed");
    return llt.solve(g);
}

Vector eigenvalues_desc(const Eigen::Ref<const Matrix>& m) {
    require_dense_size(m.rows(), "eigenvalues_desc");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalues_desc: eigensolver failed");
    return es.eigenvalues().reverse();
}

EigenPair best_rank_tau(const Eigen::Ref<const Matrix>& m, Eigen::Index tau) {
    require_dense_size(m.rows(), "best_rank_tau");
    if (tau < 0 || tau > m.rows()) throw ParameterError("best_rank_tau: tau out of range");
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw NumericalError("best_rank_tau: eigensolver failed");
    const Eigen::Index n = m.rows();
    EigenPair out;
    out.basis.resize(n, tau);
    out.diag.resize(tau);
    for (Eigen::Index k = 0; k < tau; ++k) {
        out.basis.col(k) = es.eigenvectors().col(n - 1 - k);
        out.diag(k) = es.eigenvalues()(n - 1 - k);
    }
    return out;
}

Matrix sherman_morrison_target(const Eigen::Ref<const Matrix>& u, const Eigen::Ref<const Vector>& k,
                               const Eigen::Ref<const Vector>& h, double beta, double alpha) {
    require_dense_size(h.size(), "sherman_morrison_target");
    if (u.cols() != k.size() || (u.cols() > 0 && u.rows() != h.size())) {
        throw ParameterError("sherman_morrison_target: inconsistent shapes");
    }
    Matrix m = beta * h * h.transpose();
    if (u.cols() > 0) m.noalias() += u * (k / alpha).asDiagonal() * u.transpose();
    return m;
}

double projector_distance(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
    const Matrix pa = a * a.transpose();
    const Matrix pb = b * b.transpose();
    const Vector ev = eigenvalues_desc(pa - pb);
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

RecursiveTruncation::RecursiveTruncation(Eigen::Index dim, Eigen::Index tau, double gamma, double alpha)
    : tau_(tau), gamma_(gamma), alpha_(alpha), lowrank_(Matrix::Zero(dim, dim)) {
    require_dense_size(dim, "RecursiveTruncation");
    if (tau < 1 || tau >= dim) throw ParameterError("RecursiveTruncation: tau must lie in [1, dim)");
}

void RecursiveTruncation::step(const Eigen::Ref<const Vector>& d_t) {
    const Eigen::Index d = lowrank_.rows();
    Matrix exact = alpha_ * lowrank_ + (1.0 - alpha_) * d_t * d_t.transpose();
    exact.diagonal().array() += gamma_;
    const Matrix inverse = exact.llt().solve(Matrix::Identity(d, d));
    target_ = -inverse;
    target_.diagonal().array() += 1.0 / gamma_;
    target_ = 0.5 * (target_ + target_.transpose());
    truncated_ = best_rank_tau(target_, tau_).dense();
    Matrix complement = -truncated_;
    complement.diagonal().array() += 1.0 / gamma_;
    lowrank_ = complement.llt().solve(Matrix::Identity(d, d));
    lowrank_.diagonal().array() -= gamma_;
    lowrank_ = 0.5 * (lowrank_ + lowrank_.transpose());
}

Matrix RecursiveTruncation::damped() const {
    Matrix g = lowrank_;
    g.diagonal().array() += gamma_;
    return g;
}

Matrix qng_dense_ggn(const QngState& state, Eigen::Index dim) {
    require_dense_size(dim, "qng_dense_ggn");
    const double sa = std::sqrt(state.alpha);
    Matrix a = Matrix::Identity(dim, dim);
    for (const auto& f : state.factors) {
        Matrix factor = f.beta * f.q * f.q.transpose();
        factor.diagonal().array() += sa;
        a = a * factor;
    }
    return a * a.transpose();
}

Matrix softmax_output_hessian(const Eigen::Ref<const Vector>& probs) {
    Matrix h = -probs * probs.transpose();
    h.diagonal() += probs;
    return h;
}

Matrix softmax_fisher(const TaskInstance& task, std::span<const Eigen::Index> batch) {
    const Eigen::Index d = task.dim();
    require_dense_size(d, "softmax_fisher");
    Matrix f = Matrix::Zero(d, d);
    for (const auto i : batch) {
        const Vector x = task.data->features.row(i).transpose();
        const Matrix jac = logits_jacobian(task.model, task.params, x);
        const Vector p = softmax(logits(task.model, task.params, x));
        f.noalias() += jac.transpose() * softmax_output_hessian(p) * jac;
    }
    return f / static_cast<double>(batch.size());
}

Vector finite_difference_grad(const TaskInstance& task, std::span<const Eigen::Index> batch,
                              double step) {
    Vector theta = task.params;
    Vector g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double orig = theta(i);
        theta(i) = orig + step;
        const double up = loss_only(task.model, theta, *task.data, batch);
        theta(i) = orig - step;
        const double down = loss_only(task.model, theta, *task.data, batch);
        theta(i) = orig;
        g(i) = (up - down) / (2.0 * step);
    }
    return g;
}

}  // namespace ginger::oracle
