#include "ginger/dense_oracle.hpp"
#include "ginger/random.hpp"
#include "ginger/rank_one_update.hpp"

#include <doctest.h>

using namespace ginger;

namespace {

Vector e(Eigen::Index d, Eigen::Index i) { return Vector::Unit(d, i); }

}  // namespace

TEST_CASE("orthonormal_residual: h already orthogonal") {
    Matrix u = e(2, 0);
    const Residual r = orthonormal_residual(u, e(2, 1));
    REQUIRE(r.direction.has_value());
    CHECK(r.norm == doctest::Approx(1.0));
    CHECK((*r.direction - e(2, 1)).norm() < 1e-15);
}

TEST_CASE("orthonormal_residual: h inside span(U) is degenerate") {
    Matrix u = e(2, 0);
    const Residual r = orthonormal_residual(u, 3.0 * e(2, 0));
    CHECK_FALSE(r.direction.has_value());
    CHECK(r.norm == 0.0);
}

TEST_CASE("orthonormal_residual: reconstruction identity on random input") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix u = random::orthonormal(16, 4, rng);
        const Vector h = random::gaussian(16, rng);
        const Residual r = orthonormal_residual(u, h);
        REQUIRE(r.direction.has_value());
        CHECK((u.transpose() * *r.direction).norm() <= 1e-10);
        CHECK(std::abs(r.direction->norm() - 1.0) <= 1e-12);
        CHECK((u * (u.transpose() * h) + r.norm * *r.direction - h).norm() <= 1e-10);
    }
}

TEST_CASE("orthonormal_residual: tiny residual stays orthogonal") {
    Rng rng(2);
    const Matrix u = random::orthonormal(40, 5, rng);
    Vector outside = random::gaussian(40, rng);
    outside -= u * (u.transpose() * outside);
    outside.normalize();
    const Vector h = u * random::gaussian(5, rng) + 1e-9 * outside;
    const Residual r = orthonormal_residual(u, h);
    REQUIRE(r.direction.has_value());
    CHECK((u.transpose() * *r.direction).norm() <= 1e-10);
}

TEST_CASE("orthonormal_residual: errors") {
    Matrix u = e(3, 0);
    CHECK_THROWS_AS(orthonormal_residual(u, Vector::Zero(2)), ParameterError);
    Vector h = Vector::Zero(3);
    h(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(orthonormal_residual(u, h), InputError);
}

TEST_CASE("small_eigh: identity is canonical") {
    const SymmetricEigen s = small_eigh(Matrix::Identity(2, 2));
    CHECK(s.values(0) == 1.0);
    CHECK(s.values(1) == 1.0);
    CHECK((s.vectors - Matrix::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("small_eigh: swap matrix has spectrum {1, -1}") {
    Matrix c(2, 2);
    c << 0, 1, 1, 0;
    const SymmetricEigen s = small_eigh(c);
    CHECK(s.values(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.values(1) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("small_eigh: random symmetric reconstruction") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix c = random::symmetric(9, rng);
        const SymmetricEigen s = small_eigh(c);
        CHECK((s.vectors * s.values.asDiagonal() * s.vectors.transpose() - c).norm() <= 1e-10 * c.norm());
        CHECK(orthogonality_residual(s.vectors) <= 1e-10);
        for (Eigen::Index i = 0; i + 1 < 9; ++i) CHECK(s.values(i) >= s.values(i + 1));
        // Each column's largest-magnitude entry is positive.
        for (Eigen::Index j = 0; j < 9; ++j) {
            Eigen::Index arg = 0;
            s.vectors.col(j).cwiseAbs().maxCoeff(&arg);
            CHECK(s.vectors(arg, j) > 0.0);
        }
    }
}

TEST_CASE("small_eigh: rejects asymmetric input") {
    Matrix c(2, 2);
    c << 1, 2, 0, 1;
    CHECK_THROWS_AS(small_eigh(c), InputError);
}

TEST_CASE("r1u: orthogonal components keep the larger one") {
    // M = 2 e1 e1^T + 9 e2 e2^T, top-1 is 9 along e2.
    EigenPair pair{e(3, 0), Vector::Constant(1, 2.0)};
    const EigenPair out = r1u(pair, 3.0 * e(3, 1), 1);
    REQUIRE(out.rank() == 1);
    CHECK(out.diag(0) == doctest::Approx(9.0).epsilon(1e-14));
    CHECK((out.basis.col(0) - e(3, 1)).norm() <= 1e-14);
}

TEST_CASE("r1u: zero vector is the identity update") {
    Rng rng(4);
    EigenPair pair{random::orthonormal(10, 3, rng), Vector(3)};
    pair.diag << 3.0, 2.0, 0.5;
    const EigenPair out = r1u(pair, Vector::Zero(10), 3);
    CHECK((out.diag - pair.diag).norm() <= 1e-14);
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::abs(std::abs(out.basis.col(j).dot(pair.basis.col(j))) - 1.0) <= 1e-12);
    }
}

TEST_CASE("r1u: random instance matches the dense eigensolver") {
    Rng rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        const Eigen::Index d = 32, tau = 5;
        EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 4.0)};
        const Vector v = random::gaussian(d, rng);
        const EigenPair out = r1u(pair, v, tau);
        const Matrix dense = pair.dense() + v * v.transpose();
        const EigenPair ref = oracle::best_rank_tau(dense, tau + 1);
        CHECK((out.diag - ref.diag.head(tau)).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(orthogonality_residual(out.basis) <= 1e-10);
        if (ref.diag(tau - 1) - ref.diag(tau) >= 1e-6) {
            CHECK(oracle::projector_distance(out.basis, ref.basis.leftCols(tau)) <= 1e-6);
        }
    }
}

TEST_CASE("r1u: exact without truncation pressure") {
    Rng rng(6);
    const Eigen::Index d = 20, tau = 4;
    EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 2.0)};
    const Vector v = random::gaussian(d, rng);
    const EigenPair out = r1u(pair, v, tau + 1);
    CHECK((out.dense() - (pair.dense() + v * v.transpose())).norm() <= 1e-9);
}

TEST_CASE("r1u: eigenvalues never decrease (Weyl)") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        EigenPair pair{random::orthonormal(16, 4, rng), random::descending(4, rng, 3.0)};
        const EigenPair out = r1u(pair, random::gaussian(16, rng, 0.3), 4);
        for (Eigen::Index i = 0; i < 4; ++i) CHECK(out.diag(i) >= pair.diag(i) - 1e-10);
    }
}

TEST_CASE("r1u: degenerate branch matches dense result") {
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index d = 64, tau = 6;
        EigenPair pair{random::orthonormal(d, tau, rng), random::descending(tau, rng, 3.0)};
        const Vector v = pair.basis * random::gaussian(tau, rng);
        const EigenPair out = r1u(pair, v, tau);
        REQUIRE(out.rank() == tau);
        const Matrix expected = oracle::best_rank_tau(pair.dense() + v * v.transpose(), tau).dense();
        CHECK((out.dense() - expected).norm() <= 1e-9);
    }
}

TEST_CASE("r1u: tie at the cut keeps the column with less weight on p") {
    // U = e1 with K = 1 and v = e2: M = e1 e1^T + e2 e2^T, an exact tie.
    EigenPair pair{e(4, 0), Vector::Constant(1, 1.0)};
    const EigenPair out = r1u(pair, e(4, 1), 1);
    CHECK(out.diag(0) == doctest::Approx(1.0));
    CHECK(std::abs(out.basis.col(0).dot(e(4, 0))) == doctest::Approx(1.0));
}

TEST_CASE("r1u: preconditions") {
    EigenPair pair{e(3, 0), Vector::Constant(1, 1.0)};
    CHECK_THROWS_AS(r1u(pair, Vector::Zero(2), 1), ParameterError);
    CHECK_THROWS_AS(r1u(pair, Vector::Zero(3), 3), ParameterError);
    CHECK_THROWS_AS(r1u(pair, Vector::Constant(3, std::numeric_limits<double>::infinity()), 1),
                    InputError);
    EigenPair negative{e(3, 0), Vector::Constant(1, -1.0)};
    CHECK_THROWS_AS(r1u(negative, Vector::Zero(3), 1), InvariantError);
}
