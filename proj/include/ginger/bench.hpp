#pragma once

#include "ginger/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace ginger {

struct BenchRow {
    Eigen::Index dim = 0;
    Eigen::Index tau = 0;
    double median_ns = 0.0;
    double flops = 0.0;
    std::optional<double> ratio;  // median_ns / previous row's median_ns
};

/// Median wall time of one preconditioner update plus one direction query
/// for each dimension at fixed rank.
std::vector<BenchRow> bench_scaling(std::span<const Eigen::Index> dims, Eigen::Index tau, int reps,
                                    std::uint64_t seed = 7);

/// Same measurement for several ranks at a fixed dimension.
std::vector<BenchRow> bench_rank_scaling(Eigen::Index dim, std::span<const Eigen::Index> taus,
                                         int reps, std::uint64_t seed = 7);

void print_bench_table(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace ginger
