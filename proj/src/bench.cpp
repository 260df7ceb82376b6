#include "ginger/bench.hpp"

#include "ginger/harness.hpp"
#include "ginger/lowrank_ggn.hpp"
#include "ginger/random.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <ostream>
#include <utility>
#include <vector>

namespace ginger {

namespace {

constexpr int kWarmup = 3;

struct Probe {
    GgnFactors state;
    Vector inputs[2];
    Vector grad;
    std::vector<double> times;
};

// Median time of one update plus one direction query for every (dim, tau)
// configuration. Repetitions are interleaved round-robin across
// configurations, so slow drift in machine load hits all of them alike
// instead of biasing the ratios between neighbouring rows.
std::vector<double> median_step_ns(std::span<const std::pair<Eigen::Index, Eigen::Index>> configs,
                                   int reps, std::uint64_t seed) {
    if (reps < 1) throw ParameterError("bench: reps must be positive");
    std::vector<Probe> probes;
    probes.reserve(configs.size());
    for (const auto& [dim, tau] : configs) {
        if (tau < 1 || tau >= dim) throw ParameterError("bench: tau must lie in [1, dim)");
        Rng rng(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
        probes.push_back({GgnFactors::initial(dim, tau, 1e-4, 0.99, seed),
                          {random::gaussian(dim, rng, scale), random::gaussian(dim, rng, scale)},
                          random::gaussian(dim, rng, scale),
                          {}});
        probes.back().times.reserve(static_cast<std::size_t>(reps));
    }

    double sink = 0.0;
    for (int r = -kWarmup; r < reps; ++r) {
        for (auto& p : probes) {
            const auto t0 = std::chrono::steady_clock::now();
            p.state.update(p.inputs[(r + kWarmup) % 2]);
            sink += p.state.direction(p.grad)(0);
            const auto t1 = std::chrono::steady_clock::now();
            if (r >= 0) p.times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
    }
    if (!std::isfinite(sink)) throw NumericalError("bench: non-finite direction");

    std::vector<double> out;
    for (auto& p : probes) {
        auto mid = p.times.begin() + static_cast<std::ptrdiff_t>(p.times.size() / 2);
        std::nth_element(p.times.begin(), mid, p.times.end());
        out.push_back(*mid);
    }
    return out;
}

std::vector<BenchRow> make_rows(std::span<const std::pair<Eigen::Index, Eigen::Index>> configs, int reps,
                                std::uint64_t seed) {
    const auto medians = median_step_ns(configs, reps, seed);
    std::vector<BenchRow> rows;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto [d, t] = configs[i];
        BenchRow row{d, t, medians[i], update_flops(d, t), std::nullopt};
        if (!rows.empty()) row.ratio = row.median_ns / rows.back().median_ns;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::vector<BenchRow> bench_scaling(std::span<const Eigen::Index> dims, Eigen::Index tau, int reps,
                                    std::uint64_t seed) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> configs;
    for (const auto d : dims) configs.emplace_back(d, tau);
    return make_rows(configs, reps, seed);
}

std::vector<BenchRow> bench_rank_scaling(Eigen::Index dim, std::span<const Eigen::Index> taus, int reps,
                                         std::uint64_t seed) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> configs;
    for (const auto t : taus) configs.emplace_back(dim, t);
    return make_rows(configs, reps, seed);
}

void print_bench_table(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "dim,tau,median_ns,flops,ratio\n";
    for (const auto& r : rows) {
        os << r.dim << ',' << r.tau << ',' << std::fixed << std::setprecision(0) << r.median_ns << ','
           << r.flops << ',';
        if (r.ratio) os << std::setprecision(3) << *r.ratio;
        os << std::defaultfloat << '\n';
    }
}

}  // namespace ginger
