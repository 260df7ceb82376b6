#include "ginger/verify.hpp"

#include "ginger/dense_oracle.hpp"
#include "ginger/lowrank_ggn.hpp"
#include "ginger/optimizers.hpp"
#include "ginger/random.hpp"
#include "ginger/rank_one_update.hpp"
#include "ginger/tasks.hpp"

#include <functional>
#include <iomanip>
#include <ostream>

namespace ginger {

namespace {

struct Check {
    const char* name;
    const char* module;
    double tolerance;
    std::function<double(Rng&)> residual;
};

GgnFactors random_state(Eigen::Index d, Eigen::Index tau, double gamma, double alpha, Rng& rng) {
    return GgnFactors::from_parts(random::orthonormal(d, tau, rng), random::descending(tau, rng, 5.0),
                                  gamma, alpha);
}

double check_small_eigh(Rng& rng) {
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix c = random::symmetric(9, rng);
        const SymmetricEigen e = small_eigh(c);
        worst = std::max(worst, (e.vectors * e.values.asDiagonal() * e.vectors.transpose() - c).norm() /
                                    c.norm());
        worst = std::max(worst, orthogonality_residual(e.vectors));
    }
    return worst;
}

double check_woodbury(Rng& rng) {
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index d = random::uniform_int(2, 64, rng);
        const Eigen::Index tau = random::uniform_int(1, std::min<Eigen::Index>(8, d - 1), rng);
        const GgnFactors s = random_state(d, tau, 0.01 + 0.5 * random::descending(1, rng)(0), 0.9, rng);
        const Vector g = random::gaussian(d, rng);
        worst = std::max(worst, (s.reconstruct_dense() * s.direction(g) - g).norm() / g.norm());
    }
    return worst;
}

double check_update_oracle(Rng& rng) {
    const Eigen::Index d = 16, tau = 3;
    const double gamma = 0.5, alpha = 0.9;
    GgnFactors fast = GgnFactors::initial(d, tau, gamma, alpha, 3);
    oracle::RecursiveTruncation slow(d, tau, gamma, alpha);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Vector v = random::gaussian(d, rng, 1.0 / std::sqrt(double(d)));
        fast.update(v);
        slow.step(v);
        worst = std::max(worst, (fast.reconstruct_dense() - slow.damped()).norm());
    }
    return worst;
}

double check_lowrank_exact(Rng& rng) {
    const Eigen::Index d = 10, tau = 3;
    const Matrix span = random::orthonormal(d, 3, rng);
    GgnFactors fast = GgnFactors::initial(d, tau, 0.1, 0.95, 11);
    auto dense = oracle::DenseGgn::zero(d, 0.1, 0.95);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Vector v = span * random::gaussian(3, rng);
        fast.update(v);
        dense = oracle::ema_update_dense(std::move(dense), v);
        worst = std::max(worst, (fast.reconstruct_dense() - dense.damped()).norm());
    }
    return worst;
}

double check_inverse_bounds(Rng& rng) {
    const Eigen::Index d = 12, tau = 4;
    const double gamma = 0.2;
    GgnFactors s = GgnFactors::initial(d, tau, gamma, 0.9, 5);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        s.update(random::gaussian(d, rng));
        const Vector ev = oracle::eigenvalues_desc(s.reconstruct_dense().inverse());
        if (ev(ev.size() - 1) <= 0.0) return 1.0;
        worst = std::max(worst, std::abs(ev(0) - 1.0 / gamma) * gamma);
        if (s.invariants().max_k_gamma >= 1.0) return 1.0;
    }
    return worst;
}

double check_r1u_optimality(Rng& rng) {
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index d = 32, tau = 5;
        EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 3.0)};
        const Vector v = random::gaussian(d, rng);
        const EigenPair out = r1u(pair, v, tau);
        const Matrix dense = pair.dense() + v * v.transpose();
        const Vector ev = oracle::eigenvalues_desc(dense);
        worst = std::max(worst, (out.diag - ev.head(tau)).cwiseAbs().maxCoeff());
    }
    return worst;
}

double check_r1u_degenerate(Rng& rng) {
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index d = 24, tau = 4;
        EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 3.0)};
        const Vector v = pair.basis * random::gaussian(tau, rng);
        const EigenPair out = r1u(pair, v, tau);
        worst = std::max(worst, (out.dense() - (pair.dense() + v * v.transpose())).norm());
    }
    return worst;
}

double check_qng_rank(Rng& rng) {
    const Eigen::Index d = 32, tau = 4;
    double worst = 0.0;
    for (int seed = 0; seed < 5; ++seed) {
        QngState s{0.9, tau, {}, 0, {}};
        for (int t = 0; t < 50; ++t) qng_update(s, random::gaussian(d, rng));
        Matrix g = oracle::qng_dense_ggn(s, d);
        g.diagonal().array() -= std::pow(0.9, double(tau));
        const Vector sv = Eigen::JacobiSVD<Matrix>(g).singularValues();
        worst = std::max(worst, sv.tail(d - 2 * tau).maxCoeff());
    }
    return worst;
}

double check_ema_trace(Rng& rng) {
    const Eigen::Index d = 8;
    const double alpha = 0.9;
    auto o = oracle::DenseGgn::zero(d, 1.0, alpha);
    std::vector<double> norms;
    for (int t = 0; t < 50; ++t) {
        const Vector v = random::gaussian(d, rng);
        norms.push_back(v.squaredNorm());
        o = oracle::ema_update_dense(std::move(o), v);
    }
    double unrolled = 0.0;
    const auto n = norms.size();
    for (std::size_t s = 0; s < n; ++s) unrolled += std::pow(alpha, double(n - 1 - s)) * (1 - alpha) * norms[s];
    return std::abs(o.ema.trace() - unrolled);
}

double check_sigma_k_roundtrip(Rng& rng) {
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Vector sigma = random::descending(6, rng, 100.0);
        const double gamma = 1e-3 + random::descending(1, rng)(0);
        const Vector back = sigma_from_k(k_from_sigma(sigma, gamma), gamma);
        worst = std::max(worst, ((back - sigma).cwiseAbs().array() / sigma.cwiseAbs().array().max(1e-300)).maxCoeff());
    }
    return worst;
}

double check_fisher(Rng& rng) {
    auto data = std::make_shared<const Dataset>(make_synthetic({4, 2, 3, 1.0, 5, 1.0}));
    ModelSpec spec{Architecture::softmax_linear, 2, 0, 3, false};
    TaskInstance task{spec, data, random::gaussian(6, rng, 0.5)};
    const auto batch = full_batch(*data);
    const Matrix exact = oracle::softmax_fisher(task, batch);
    Matrix mc = Matrix::Zero(6, 6);
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) {
        const Vector v = fisher_direction(task, batch, rng);
        mc.noalias() += v * v.transpose();
    }
    mc /= draws;
    return (mc - exact).norm() / exact.norm();
}

double check_gradients(Rng& rng) {
    double worst = 0.0;
    auto data = std::make_shared<const Dataset>(make_synthetic({12, 3, 4, 1.0, 9, 2.0}));
    const ModelSpec specs[] = {{Architecture::softmax_linear, 3, 0, 4, true},
                               {Architecture::softmax_linear, 3, 0, 4, false},
                               {Architecture::mlp, 3, 5, 4, true}};
    for (const auto& spec : specs) {
        TaskInstance task{spec, data, random::gaussian(spec.param_count(), rng, 0.5)};
        const auto batch = full_batch(*data);
        const Vector g = loss_and_grad(task, batch).grad;
        const Vector fd = oracle::finite_difference_grad(task, batch);
        worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    }
    return worst;
}

const std::vector<Check>& checks() {
    static const std::vector<Check> all = {
        {"small_eigh", "rank_one_update", 1e-10, check_small_eigh},
        {"r1u_optimality", "rank_one_update", 1e-9, check_r1u_optimality},
        {"r1u_degenerate", "rank_one_update", 1e-9, check_r1u_degenerate},
        {"sigma_k_roundtrip", "lowrank_ggn", 1e-10, check_sigma_k_roundtrip},
        {"woodbury", "lowrank_ggn", 1e-9, check_woodbury},
        {"update_oracle", "lowrank_ggn", 1e-8, check_update_oracle},
        {"lowrank_exact", "lowrank_ggn", 1e-8, check_lowrank_exact},
        {"inverse_bounds", "lowrank_ggn", 1e-8, check_inverse_bounds},
        {"ema_trace", "dense_oracle", 1e-12, check_ema_trace},
        {"qng_rank", "optimizers", 1e-8, check_qng_rank},
        {"fisher_estimator", "tasks", 0.02, check_fisher},
        {"gradient_check", "tasks", 1e-6, check_gradients},
    };
    return all;
}

}  // namespace

std::vector<std::string> verify_check_names() {
    std::vector<std::string> out;
    for (const auto& c : checks()) out.emplace_back(c.name);
    return out;
}

std::vector<CheckResult> verify_suite(std::string_view filter, std::uint64_t seed) {
    std::vector<CheckResult> out;
    for (const auto& c : checks()) {
        if (!filter.empty() && std::string_view(c.name).find(filter) == std::string_view::npos) continue;
        Rng rng(seed);
        CheckResult r{c.name, c.module, 0.0, c.tolerance, false, {}};
        try {
            r.residual = c.residual(rng);
            r.passed = std::isfinite(r.residual) && r.residual <= c.tolerance;
        } catch (const std::exception& e) {
            r.detail = e.what();
            r.residual = std::numeric_limits<double>::infinity();
        }
        out.push_back(std::move(r));
    }
    return out;
}

void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(20) << r.name << std::setw(17)
           << r.module << " residual=" << std::scientific << std::setprecision(3) << r.residual
           << " tol=" << r.tolerance << std::defaultfloat;
        if (!r.detail.empty()) os << "  (" << r.detail << ")";
        os << '\n';
    }
}

}  // namespace ginger
