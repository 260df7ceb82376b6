#pragma once

#include "ginger/common.hpp"
#include "ginger/tasks.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace ginger::random {

inline Vector gaussian(Eigen::Index n, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

inline Matrix orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(rows, cols, rng));
    return qr.householderQ() * Matrix::Identity(rows, cols);
}

/// Nonnegative values sorted descending, drawn uniformly from [0, hi).
inline Vector descending(Eigen::Index n, Rng& rng, double hi = 1.0) {
    std::uniform_real_distribution<double> unif(0.0, hi);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = unif(rng);
    std::sort(v.data(), v.data() + n, std::greater<>());
    return v;
}

inline Matrix symmetric(Eigen::Index n, Rng& rng) {
    const Matrix a = gaussian(n, n, rng);
    return 0.5 * (a + a.transpose());
}

inline Eigen::Index uniform_int(Eigen::Index lo, Eigen::Index hi, Rng& rng) {
    return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
}

}  // namespace ginger::random
