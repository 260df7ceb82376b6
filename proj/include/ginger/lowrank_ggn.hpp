#pragma once

#include "ginger/common.hpp"
#include "ginger/rank_one_update.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>

namespace ginger {

/// K_i = sigma_i / (gamma^2 + gamma * sigma_i): the diagonal correction of
/// the Woodbury inverse of gamma*I + U diag(sigma) U^T.
Vector k_from_sigma(const Eigen::Ref<const Vector>& sigma, double gamma);

/// Inverse of k_from_sigma: sigma_i = gamma^2 K_i / (1 - gamma K_i).
/// Entries in [-1e-12, 0) are treated as rounding and mapped to zero.
Vector sigma_from_k(const Eigen::Ref<const Vector>& k, double gamma);

/// Intermediate quantities of one update, exposed for verification.
struct UpdateTrace {
    Matrix prev_basis;
    Vector prev_k;   // alpha^{-1} K_{t-1, gamma/alpha}
    Vector h;        // G_{t-1, gamma/alpha}^{-1} d_t
    double beta = 0.0;
};

struct InvariantReport {
    double orthogonality = 0.0;  // ||U^T U - I||_F
    double max_k_gamma = 0.0;    // max_i K_i * gamma, must stay below 1
    bool sorted = true;
    bool nonnegative = true;
};

/// Damped low-rank GGN approximation G = gamma*I + U diag(sigma) U^T,
/// maintained online as an exponential moving average of d_t d_t^T.
///
/// The state is kept in double precision. U is d x tau and semi-orthogonal,
/// sigma is nonnegative and sorted descending, and tau < d.
class GgnFactors {
public:
    static constexpr std::uint64_t kDefaultReorthEvery = 512;

    /// Algorithm start state: sigma = 0 and U the orthonormalized Q factor of
    /// a Gaussian matrix drawn from `seed`.
    static GgnFactors initial(Eigen::Index dim, Eigen::Index rank, double gamma, double alpha,
                              std::uint64_t seed);

    /// Validates and adopts explicit factors.
    static GgnFactors from_parts(Matrix basis, Vector eigvals, double gamma, double alpha,
                                 std::uint64_t step = 0);

    Eigen::Index dim() const { return basis_.rows(); }
    Eigen::Index rank() const { return basis_.cols(); }
    double gamma() const { return gamma_; }
    double alpha() const { return alpha_; }
    std::uint64_t step() const { return step_; }
    const Matrix& basis() const { return basis_; }
    const Vector& eigvals() const { return eigvals_; }

    std::uint64_t reorth_every() const { return reorth_every_; }
    void set_reorth_every(std::uint64_t n) { reorth_every_ = n; }

    /// (gamma*I + U diag(scale * sigma) U^T)^{-1} g in O(d tau).
    Vector direction(const Eigen::Ref<const Vector>& g, double eigval_scale = 1.0) const;

    /// Folds d_t into the moving average and re-truncates to rank tau.
    /// Strong guarantee: on any exception the state is unchanged.
    void update(const Eigen::Ref<const Vector>& d_t, UpdateTrace* trace = nullptr);

    /// gamma*I + U diag(sigma) U^T. Refuses above kDenseGuard.
    Matrix reconstruct_dense() const;

    /// Restores U^T U = I by QR, re-diagonalizing the small core so the
    /// represented matrix is unchanged.
    void reorthonormalize();

    InvariantReport invariants() const;

    friend bool operator==(const GgnFactors& a, const GgnFactors& b);

private:
    GgnFactors() = default;

    Matrix basis_;
    Vector eigvals_;
    double gamma_ = 1e-4;
    double alpha_ = 0.99;
    std::uint64_t step_ = 0;
    std::uint64_t reorth_every_ = kDefaultReorthEvery;
    Matrix scratch_;
    Vector work_;
    R1uWorkspace r1u_work_;
};

nlohmann::json to_json(const GgnFactors& f);
GgnFactors ggn_from_json(const nlohmann::json& j);

// Little-endian binary record: "GGNF", u32 version, u64 dim, u64 rank,
// f64 gamma, f64 alpha, u64 step, basis (row-major f64), eigvals (f64).
void write_binary(std::ostream& os, const GgnFactors& f);
GgnFactors read_ggn_binary(std::istream& is);

}  // namespace ginger
