#include "ginger/lowrank_ggn.hpp"

#include "ginger/binary_io.hpp"
#include "ginger/rank_one_update.hpp"

#include <cmath>
#include <random>
#include <string>

namespace ginger {

namespace {

constexpr double kOrthoTol = 1e-8;
constexpr double kKDustTol = 1e-12;
constexpr double kKCeilingSlack = 1e-12;

void require_gamma(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw ParameterError("gamma must be positive and finite, got " + std::to_string(gamma));
    }
}

void require_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ParameterError("alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

void require_shape(Eigen::Index dim, Eigen::Index rank) {
    if (dim < 1 || rank < 1) throw ParameterError("dim and rank must be positive");
    if (rank >= dim) {
        throw ParameterError("rank " + std::to_string(rank) + " must be smaller than dim " +
                             std::to_string(dim));
    }
}

}  // namespace

Vector k_from_sigma(const Eigen::Ref<const Vector>& sigma, double gamma) {
    require_gamma(gamma);
    if ((sigma.array() < 0.0).any()) throw ParameterError("k_from_sigma: sigma must be nonnegative");
    return (sigma.array() / (gamma * gamma + gamma * sigma.array())).matrix();
}

Vector sigma_from_k(const Eigen::Ref<const Vector>& k, double gamma) {
    require_gamma(gamma);
    Vector sigma(k.size());
    for (Eigen::Index i = 0; i < k.size(); ++i) {
        double ki = k(i);
        if (ki < -kKDustTol) {
            throw NumericalError("sigma_from_k: K[" + std::to_string(i) + "] = " +
                                 std::to_string(ki) + " is negative");
        }
        if (ki < 0.0) ki = 0.0;
        if (ki * gamma >= 1.0) {
            throw NumericalError("sigma_from_k: K[" + std::to_string(i) +
                                 "] reaches 1/gamma; the update left its admissible range");
        }
        sigma(i) = gamma * gamma * ki / (1.0 - gamma * ki);
    }
    return sigma;
}

GgnFactors GgnFactors::initial(Eigen::Index dim, Eigen::Index rank, double gamma, double alpha,
                               std::uint64_t seed) {
    require_shape(dim, rank);
    require_gamma(gamma);
    require_alpha(alpha);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix gauss(dim, rank);
    for (Eigen::Index j = 0; j < rank; ++j)
        for (Eigen::Index i = 0; i < dim; ++i) gauss(i, j) = normal(rng);

    Eigen::HouseholderQR<Matrix> qr(gauss);
    GgnFactors f;
    f.basis_ = qr.householderQ() * Matrix::Identity(dim, rank);
    canonicalize_signs(f.basis_);
    f.eigvals_ = Vector::Zero(rank);
    f.gamma_ = gamma;
    f.alpha_ = alpha;
    return f;
}

GgnFactors GgnFactors::from_parts(Matrix basis, Vector eigvals, double gamma, double alpha,
                                  std::uint64_t step) {
    require_shape(basis.rows(), basis.cols());
    require_gamma(gamma);
    require_alpha(alpha);
    if (eigvals.size() != basis.cols()) throw ParameterError("eigvals length must equal rank");
    if (!basis.allFinite() || !eigvals.allFinite()) throw InputError("factors must be finite");
    if (orthogonality_residual(basis) > kOrthoTol) {
        throw InvariantError("basis is not semi-orthogonal");
    }
    for (Eigen::Index i = 0; i < eigvals.size(); ++i) {
        if (eigvals(i) < 0.0) throw InvariantError("eigvals must be nonnegative");
        if (i + 1 < eigvals.size() && eigvals(i) < eigvals(i + 1)) {
            throw InvariantError("eigvals must be sorted descending");
        }
    }
    GgnFactors f;
    f.basis_ = std::move(basis);
    f.eigvals_ = std::move(eigvals);
    f.gamma_ = gamma;
    f.alpha_ = alpha;
    f.step_ = step;
    return f;
}

Vector GgnFactors::direction(const Eigen::Ref<const Vector>& g, double eigval_scale) const {
    if (g.size() != dim()) {
        throw ParameterError("direction: vector length " + std::to_string(g.size()) +
                             " does not match dim " + std::to_string(dim()));
    }
    if (!(eigval_scale > 0.0)) throw ParameterError("direction: eigval_scale must be positive");
    const Vector k = k_from_sigma(eigval_scale * eigvals_, gamma_);
    const Vector coeffs = k.cwiseProduct(basis_.transpose() * g);
    Vector out = g / gamma_;
    out.noalias() -= basis_ * coeffs;
    return out;
}

void GgnFactors::update(const Eigen::Ref<const Vector>& d_t, UpdateTrace* trace) {
    if (d_t.size() != dim()) {
        throw ParameterError("update: vector length " + std::to_string(d_t.size()) +
                             " does not match dim " + std::to_string(dim()));
    }
    if (!d_t.allFinite()) throw InputError("update: d_t has non-finite entries");

    // With G' = gamma/alpha * I + U diag(sigma) U^T the moving average is
    // alpha * G' + (1 - alpha) d d^T, and Sherman-Morrison gives
    //   inverse = gamma^{-1} I - (U (K'/alpha) U^T + beta h h^T),
    //   h = G'^{-1} d,  beta = (1/alpha - 1) / (alpha + (1 - alpha) h^T d).
    const double damp = gamma_ / alpha_;
    const Vector k_damp = k_from_sigma(eigvals_, damp);
    const Vector prev_k = k_damp / alpha_;

    Vector& h = work_;
    h = d_t / damp;
    h.noalias() -= basis_ * k_damp.cwiseProduct(basis_.transpose() * d_t);
    const double hd = h.dot(d_t);
    const double beta = (1.0 / alpha_ - 1.0) / (alpha_ + (1.0 - alpha_) * hd);
    if (!std::isfinite(beta) || beta < 0.0) {
        throw NumericalError("update: Sherman-Morrison coefficient is not a finite nonnegative value");
    }
    Vector traced_h;
    if (trace != nullptr) traced_h = h;
    h *= std::sqrt(beta);  // h now holds v = sqrt(beta) h

    Vector k_new;
    r1u_into(basis_, prev_k, h, rank(), scratch_, k_new, &r1u_work_);
    if (scratch_.cols() != rank()) throw NumericalError("update: rank-one update lost rank");

    const double ceiling = (1.0 - kKCeilingSlack) / gamma_;
    for (Eigen::Index i = 0; i < k_new.size(); ++i) k_new(i) = std::min(k_new(i), ceiling);
    Vector sigma = sigma_from_k(k_new, gamma_);

    if (trace != nullptr) {
        trace->prev_basis = basis_;
        trace->prev_k = prev_k;
        trace->h = std::move(traced_h);
        trace->beta = beta;
    }
    basis_.swap(scratch_);
    eigvals_ = std::move(sigma);
    ++step_;
    if (reorth_every_ > 0 && step_ % reorth_every_ == 0) reorthonormalize();
}

Matrix GgnFactors::reconstruct_dense() const {
    require_dense_size(dim(), "reconstruct_dense");
    Matrix g = basis_ * eigvals_.asDiagonal() * basis_.transpose();
    g.diagonal().array() += gamma_;
    return g;
}

void GgnFactors::reorthonormalize() {
    Eigen::HouseholderQR<Matrix> qr(basis_);
    const Eigen::Index r = rank();
    Matrix q = qr.householderQ() * Matrix::Identity(dim(), r);
    Matrix upper = qr.matrixQR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
    Matrix core = upper * eigvals_.asDiagonal() * upper.transpose();
    core = 0.5 * (core + core.transpose());
    SymmetricEigen eig = small_eigh(core);
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) eig.values(i) = std::max(eig.values(i), 0.0);
    basis_ = q * eig.vectors;
    canonicalize_signs(basis_);
    eigvals_ = eig.values;
}

InvariantReport GgnFactors::invariants() const {
    InvariantReport rep;
    rep.orthogonality = orthogonality_residual(basis_);
    rep.max_k_gamma = eigvals_.size() == 0 ? 0.0 : (k_from_sigma(eigvals_.cwiseMax(0.0), gamma_) * gamma_).maxCoeff();
    for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
        if (eigvals_(i) < 0.0) rep.nonnegative = false;
        if (i + 1 < eigvals_.size() && eigvals_(i) < eigvals_(i + 1)) rep.sorted = false;
    }
    return rep;
}

bool operator==(const GgnFactors& a, const GgnFactors& b) {
    return a.gamma_ == b.gamma_ && a.alpha_ == b.alpha_ && a.step_ == b.step_ &&
           a.basis_.rows() == b.basis_.rows() && a.basis_.cols() == b.basis_.cols() &&
           a.basis_ == b.basis_ && a.eigvals_ == b.eigvals_;
}

nlohmann::json to_json(const GgnFactors& f) {
    std::vector<double> basis;
    basis.reserve(static_cast<std::size_t>(f.dim() * f.rank()));
    for (Eigen::Index i = 0; i < f.dim(); ++i)
        for (Eigen::Index j = 0; j < f.rank(); ++j) basis.push_back(f.basis()(i, j));
    std::vector<double> eig(f.eigvals().data(), f.eigvals().data() + f.eigvals().size());
    return {{"dim", f.dim()},     {"rank", f.rank()}, {"gamma", f.gamma()}, {"alpha", f.alpha()},
            {"step", f.step()},   {"basis", basis},   {"eigvals", eig}};
}

GgnFactors ggn_from_json(const nlohmann::json& j) {
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto rank = j.at("rank").get<Eigen::Index>();
    const auto basis = j.at("basis").get<std::vector<double>>();
    const auto eig = j.at("eigvals").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(basis.size()) != dim * rank ||
        static_cast<Eigen::Index>(eig.size()) != rank) {
        throw ParameterError("ggn_from_json: payload sizes do not match dim/rank");
    }
    Matrix u(dim, rank);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j2 = 0; j2 < rank; ++j2)
            u(i, j2) = basis[static_cast<std::size_t>(i * rank + j2)];
    Vector s = Eigen::Map<const Vector>(eig.data(), rank);
    return GgnFactors::from_parts(std::move(u), std::move(s), j.at("gamma").get<double>(),
                                  j.at("alpha").get<double>(), j.at("step").get<std::uint64_t>());
}

void write_binary(std::ostream& os, const GgnFactors& f) {
    io::put_magic(os, "GGNF");
    io::put_u32(os, 1);
    io::put_u64(os, static_cast<std::uint64_t>(f.dim()));
    io::put_u64(os, static_cast<std::uint64_t>(f.rank()));
    io::put_f64(os, f.gamma());
    io::put_f64(os, f.alpha());
    io::put_u64(os, f.step());
    for (Eigen::Index i = 0; i < f.dim(); ++i)
        for (Eigen::Index j = 0; j < f.rank(); ++j) io::put_f64(os, f.basis()(i, j));
    for (Eigen::Index i = 0; i < f.rank(); ++i) io::put_f64(os, f.eigvals()(i));
}

GgnFactors read_ggn_binary(std::istream& is) {
    io::expect_magic(is, "GGNF");
    if (const auto version = io::get_u32(is); version != 1) {
        throw ParameterError("read_ggn_binary: unsupported version " + std::to_string(version));
    }
    const auto dim = static_cast<Eigen::Index>(io::get_u64(is));
    const auto rank = static_cast<Eigen::Index>(io::get_u64(is));
    require_shape(dim, rank);
    const double gamma = io::get_f64(is);
    const double alpha = io::get_f64(is);
    const std::uint64_t step = io::get_u64(is);
    Matrix u(dim, rank);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < rank; ++j) u(i, j) = io::get_f64(is);
    Vector s(rank);
    for (Eigen::Index i = 0; i < rank; ++i) s(i) = io::get_f64(is);
    return GgnFactors::from_parts(std::move(u), std::move(s), gamma, alpha, step);
}

}  // namespace ginger
