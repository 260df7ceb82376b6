// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "ginger/bench.hpp"
#include "ginger/dense_oracle.hpp"
#include "ginger/harness.hpp"
#include "ginger/lowrank_ggn.hpp"
#include "ginger/optimizers.hpp"
#include "ginger/random.hpp"
#include "ginger/rank_one_update.hpp"
#include "ginger/tasks.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace ginger;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome woodbury() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index d = random::uniform_int(2, 64, rng);
        const Eigen::Index tau = random::uniform_int(1, std::min<Eigen::Index>(8, d - 1), rng);
        const double gamma = std::pow(10.0, -3.0 + 3.0 * random::descending(1, rng, 1.0)(0));
        const auto s = GgnFactors::from_parts(random::orthonormal(d, tau, rng),
                                              random::descending(tau, rng, 10.0), gamma, 0.99);
        const Vector g = random::gaussian(d, rng);
        worst = std::max(worst, (s.reconstruct_dense() * s.direction(g) - g).norm() / g.norm());
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0, fmt("max relative residual %.3e (tol 1e-9), %.2f s (limit 5 s)", worst, secs)};
}

Outcome update_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::Index d = 32, tau = 4;
    double worst = 0.0;
    struct Stream { double gamma, alpha; std::uint64_t seed; };
    for (const Stream s : {Stream{1e-2, 0.99, 1}, Stream{0.5, 0.9, 2}, Stream{1e-4, 0.95, 3}}) {
        Rng rng(s.seed);
        GgnFactors fast = GgnFactors::initial(d, tau, s.gamma, s.alpha, s.seed);
        oracle::RecursiveTruncation slow(d, tau, s.gamma, s.alpha);
        for (int t = 0; t < 200; ++t) {
            const Vector v = random::gaussian(d, rng, 1.0 / std::sqrt(double(d)));
            fast.update(v);
            slow.step(v);
            worst = std::max(worst, (fast.reconstruct_dense() - slow.damped()).norm());
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && secs < 30.0,
            fmt("max Frobenius gap over 3 streams x 200 steps %.3e (tol 1e-8), %.2f s", worst, secs)};
}

Outcome lowrank_exact() {
    const Eigen::Index d = 20, tau = 3;
    Rng rng(202);
    const Matrix span = random::orthonormal(d, 3, rng);
    GgnFactors fast = GgnFactors::initial(d, tau, 0.05, 0.98, 7);
    auto dense = oracle::DenseGgn::zero(d, 0.05, 0.98);
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
        const Vector v = span * random::gaussian(3, rng);
        fast.update(v);
        dense = oracle::ema_update_dense(std::move(dense), v);
        worst = std::max(worst, (fast.reconstruct_dense() - dense.damped()).norm());
    }
    return {worst <= 1e-8, fmt("max Frobenius gap over 500 steps %.3e (tol 1e-8)", worst)};
}

Outcome inverse_bounds() {
    const Eigen::Index d = 16, tau = 5;
    const double gamma = 0.05;
    Rng rng(303);
    GgnFactors s = GgnFactors::initial(d, tau, gamma, 0.97, 9);
    double worst = 0.0, min_eig = std::numeric_limits<double>::infinity();
    bool k_ok = true;
    for (int t = 0; t < 1000; ++t) {
        s.update(random::gaussian(d, rng, 1.0 + 2.0 * (t % 7)));
        const Vector ev = oracle::eigenvalues_desc(s.reconstruct_dense().inverse());
        worst = std::max(worst, std::abs(ev(0) * gamma - 1.0));
        min_eig = std::min(min_eig, ev(ev.size() - 1));
        const Vector k = k_from_sigma(s.eigvals(), gamma);
        k_ok = k_ok && k.minCoeff() >= 0.0 && k.maxCoeff() < 1.0 / gamma;
    }
    return {worst <= 1e-8 && min_eig > 0.0 && k_ok,
            fmt("max rel error of top inverse eigenvalue %.3e (tol 1e-8), min eigenvalue %.3e, K in [0,1/gamma): %s",
                worst, min_eig, k_ok ? "yes" : "no")};
}

Outcome r1u_optimality() {
    Rng rng(404);
    double eig = 0.0, proj = 0.0, degen = 0.0;
    int gapped = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const Eigen::Index d = random::uniform_int(6, 48, rng);
        const Eigen::Index tau = random::uniform_int(1, std::min<Eigen::Index>(8, d - 2), rng);
        const EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 5.0)};
        const Vector v = random::gaussian(d, rng);
        const EigenPair out = r1u(pair, v, tau);
        const Matrix dense = pair.dense() + v * v.transpose();
        const Vector ev = oracle::eigenvalues_desc(dense);
        eig = std::max(eig, (out.diag - ev.head(tau)).cwiseAbs().maxCoeff());
        if (ev(tau - 1) - ev(tau) >= 1e-6) {
            ++gapped;
            proj = std::max(proj, oracle::projector_distance(out.basis, oracle::best_rank_tau(dense, tau).basis));
        }
        const Vector inside = pair.basis * random::gaussian(tau, rng);
        const EigenPair deg = r1u(pair, inside, tau);
        degen = std::max(degen, (deg.dense() - (pair.dense() + inside * inside.transpose())).norm());
    }
    return {eig <= 1e-9 && proj <= 1e-6 && degen <= 1e-9 && gapped > 0,
            fmt("eigenvalues %.3e (tol 1e-9), projector %.3e over %d gapped cases (tol 1e-6), degenerate %.3e (tol 1e-9)",
                eig, proj, gapped, degen)};
}

Outcome qng_rank() {
    const Eigen::Index d = 32, tau = 4;
    const double alpha = 0.9;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        QngState s{alpha, tau, {}, 0, {}};
        const int t = 50;
        for (int i = 0; i < t; ++i) qng_update(s, random::gaussian(d, rng));
        Matrix g = oracle::qng_dense_ggn(s, d);
        g.diagonal().array() -= std::pow(alpha, double(std::min<Eigen::Index>(tau, t)));
        const Vector sv = Eigen::JacobiSVD<Matrix>(g).singularValues();
        worst = std::max(worst, sv.tail(d - 2 * tau).maxCoeff());
    }
    return {worst <= 1e-8, fmt("max singular value beyond index 2 tau over 20 seeds %.3e (tol 1e-8)", worst)};
}

Outcome fisher() {
    const auto t0 = std::chrono::steady_clock::now();
    auto data = std::make_shared<const Dataset>(make_synthetic({2, 2, 3, 1.0, 5, 1.0}));
    const ModelSpec spec{Architecture::softmax_linear, 2, 0, 3, false};
    Rng rng(505);
    const TaskInstance task{spec, data, random::gaussian(6, rng, 0.7)};
    const auto batch = full_batch(*data);
    const Matrix exact = oracle::softmax_fisher(task, batch);
    Matrix mc = Matrix::Zero(6, 6);
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) {
        const Vector v = fisher_direction(task, batch, rng);
        mc.noalias() += v * v.transpose();
    }
    mc /= draws;
    const double rel = (mc - exact).norm() / exact.norm();
    const double secs = seconds_since(t0);
    return {rel <= 0.02 && secs < 60.0, fmt("relative Frobenius error %.4f (tol 0.02), %.2f s", rel, secs)};
}

Outcome gradients() {
    Rng rng(606);
    auto data = std::make_shared<const Dataset>(make_synthetic({24, 4, 3, 1.0, 6, 2.0}));
    const ModelSpec specs[] = {{Architecture::softmax_linear, 4, 0, 3, true},
                               {Architecture::softmax_linear, 4, 0, 3, false},
                               {Architecture::mlp, 4, 6, 3, true}};
    double worst = 0.0;
    for (const auto& spec : specs) {
        const TaskInstance task{spec, data, random::gaussian(spec.param_count(), rng, 0.5)};
        const auto batch = full_batch(*data);
        const Vector g = loss_and_grad(task, batch).grad;
        const Vector fd = oracle::finite_difference_grad(task, batch);
        worst = std::max(worst, (g - fd).norm() / g.norm());
    }
    return {worst <= 1e-6, fmt("max relative error over 3 architectures %.3e (tol 1e-6)", worst)};
}

Outcome convergence() {
    // Anisotropic blobs: the class signal lives on the first feature and the
    // remaining features are nuisance directions with scales up to 100.
    // Learning rates were picked per method on tuning seeds 100..102, disjoint
    // from the evaluation seeds below.
    ExperimentConfig c;
    c.task.model = {Architecture::softmax_linear, 10, 0, 2, true};
    c.task.data = {512, 10, 2, 0.5, 0, 1.0, 100.0};
    c.steps = 5000;
    c.batch_size = 64;
    c.log_every = 1;
    c.record_timing = false;

    OptimizerConfig g;
    g.kind = OptimizerKind::ginger;
    g.learning_rate = 0.15;
    g.schedule = ScheduleKind::inverse_sqrt;
    g.alpha = 0.99;
    g.gamma = 0.03;
    g.tau = 8;
    g.momentum_coef = 0.0;
    OptimizerConfig m;
    m.kind = OptimizerKind::momentum;
    m.learning_rate = 0.1;
    m.schedule = ScheduleKind::inverse_sqrt;
    m.momentum_coef = 0.9;

    double worst_min_grad = 0.0;
    int wins = 0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        c.task.data.seed = seed;
        const auto rg = run_training(c, {"ginger", g}, seed);
        const auto rm = run_training(c, {"momentum", m}, seed);
        if (rg.aborted || rm.aborted) return {false, "a run aborted: " + rg.abort_reason + rm.abort_reason};
        worst_min_grad = std::max(worst_min_grad, rg.min_grad_norm().value());
        const auto sg = rg.steps_to_loss(0.1), sm = rm.steps_to_loss(0.1);
        if (sg && (!sm || *sg <= *sm)) ++wins;
        per_seed += fmt(" %lld/%lld", sg ? static_cast<long long>(*sg) : -1LL, sm ? static_cast<long long>(*sm) : -1LL);
    }
    return {worst_min_grad <= 1e-3 && wins >= 4,
            fmt("ginger min grad norm, worst seed %.3e (tol 1e-3); steps to loss 0.1 ginger/momentum:", worst_min_grad) +
                per_seed + fmt("; ginger no slower on %d of 5 (need 4)", wins)};
}

Outcome scaling() {
    const std::vector<Eigen::Index> dims{10000, 20000, 100000, 200000, 1000000, 2000000};
    const auto rows = bench_scaling(dims, 8, 30);
    bool ok = true;
    std::string detail = "d->2d ratios:";
    for (std::size_t i = 1; i < rows.size(); i += 2) {
        const double r = rows[i].median_ns / rows[i - 1].median_ns;
        ok = ok && r >= 1.6 && r <= 2.6;
        detail += fmt(" %.2f@%lld", r, static_cast<long long>(rows[i - 1].dim));
    }
    const std::vector<Eigen::Index> taus{8, 16};
    const auto rank_rows = bench_rank_scaling(100000, taus, 30);
    const double rr = rank_rows[1].median_ns / rank_rows[0].median_ns;
    ok = ok && rr <= 5.5;
    return {ok, detail + fmt(" (range [1.6, 2.6]); tau 8->16 at d=1e5: %.2f (max 5.5)", rr)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"woodbury_exactness", woodbury},
        {"update_rule_oracle_match", update_oracle},
        {"lowrank_exactness", lowrank_exact},
        {"inverse_spectrum_bounds", inverse_bounds},
        {"rank_one_update_optimality", r1u_optimality},
        {"qng_rank_deficiency", qng_rank},
        {"fisher_estimator", fisher},
        {"gradient_correctness", gradients},
        {"convergence_on_blobs", convergence},
        {"linear_scaling", scaling},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, fn] : criteria) {
        ++index;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.passed) ++failed;
        std::printf("%s %2d %-28s %s\n", o.passed ? "PASS" : "FAIL", index, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
