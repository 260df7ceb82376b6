#include "ginger/dense_oracle.hpp"
#include "ginger/random.hpp"
#include "ginger/tasks.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace ginger;

namespace {

std::shared_ptr<const Dataset> blobs(Eigen::Index n, Eigen::Index dim, Eigen::Index classes,
                                     double spread, std::uint64_t seed) {
    SyntheticConfig c;
    c.n = n;
    c.dim = dim;
    c.classes = classes;
    c.blob_spread = spread;
    c.seed = seed;
    return std::make_shared<const Dataset>(make_synthetic(c));
}

ModelSpec linear(Eigen::Index in, Eigen::Index classes, bool bias) {
    ModelSpec m;
    m.input_dim = in;
    m.classes = classes;
    m.bias = bias;
    return m;
}

ModelSpec mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index classes) {
    ModelSpec m;
    m.arch = Architecture::mlp;
    m.input_dim = in;
    m.hidden = hidden;
    m.classes = classes;
    return m;
}

}  // namespace

TEST_CASE("parameter counts") {
    CHECK(linear(4, 3, true).param_count() == 15);
    CHECK(linear(4, 3, false).param_count() == 12);
    CHECK(mlp(4, 5, 3).param_count() == 5 * 4 + 5 + 3 * 5 + 3);
    CHECK_THROWS_AS(mlp(4, 0, 3).validate(), ParameterError);
    CHECK_THROWS_AS(linear(0, 3, true).validate(), ParameterError);
}

TEST_CASE("uniform logits give loss log(classes)") {
    auto data = blobs(20, 3, 5, 1.0, 1);
    auto task = make_task(linear(3, 5, true), data, 0);
    CHECK(task.params.isZero(0.0));
    const auto batch = full_batch(*data);
    CHECK(loss_and_grad(task, batch).loss == doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("softmax is stable for large logits") {
    Vector z(3);
    z << 1000.0, 999.0, -1000.0;
    const Vector p = softmax(z);
    CHECK(p.allFinite());
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p(0) / p(1) == doctest::Approx(std::numbers::e));
}

TEST_CASE("gradients agree with finite differences") {
    Rng rng(2);
    for (const auto& spec : {linear(3, 4, true), linear(3, 4, false), mlp(3, 6, 4)}) {
        auto data = blobs(16, 3, 4, 1.0, 3);
        auto task = make_task(spec, data, 4);
        task.params = random::gaussian(task.dim(), rng, 0.5);
        const auto batch = full_batch(*data);
        const Vector exact = loss_and_grad(task, batch).grad;
        const Vector fd = oracle::finite_difference_grad(task, batch);
        CHECK((exact - fd).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("jacobian and vjp agree") {
    Rng rng(5);
    const auto spec = mlp(3, 4, 3);
    const Vector params = random::gaussian(spec.param_count(), rng);
    const Vector x = random::gaussian(3, rng);
    const Vector w = random::gaussian(3, rng);
    const Matrix j = logits_jacobian(spec, params, x);
    CHECK((j.transpose() * w - logits_vjp(spec, params, x, w)).norm() <= 1e-12);
}

TEST_CASE("separable blobs are fit by plain gradient descent") {
    auto data = blobs(100, 2, 2, 0.3, 6);
    auto task = make_task(linear(2, 2, true), data, 0);
    const auto batch = full_batch(*data);
    for (int t = 0; t < 500; ++t) task.params -= 0.5 * loss_and_grad(task, batch).grad;
    CHECK(accuracy(task, batch) == 1.0);
    CHECK(loss_and_grad(task, batch).loss < 0.05);
}

TEST_CASE("fisher_direction with one class is zero") {
    auto data = blobs(10, 2, 1, 1.0, 7);
    auto task = make_task(linear(2, 1, true), data, 0);
    Rng rng(8);
    const auto batch = full_batch(*data);
    CHECK(fisher_direction(task, batch, rng).isZero(0.0));
}

TEST_CASE("Monte-Carlo Fisher matches the analytic Fisher") {
    // d = 6: three classes, two inputs, no bias.
    auto data = blobs(3, 2, 3, 1.0, 9);
    auto task = make_task(linear(2, 3, false), data, 0);
    Rng rng(10);
    task.params = random::gaussian(6, rng, 0.7);
    const auto batch = full_batch(*data);
    const Matrix exact = oracle::softmax_fisher(task, batch);
    for (int samples : {1, 3}) {
        Matrix est = Matrix::Zero(6, 6);
        const int draws = 50000;
        for (int i = 0; i < draws; ++i) {
            const Vector d = fisher_direction(task, batch, rng, samples);
            est += d * d.transpose();
        }
        est /= draws;
        CHECK((est - exact).norm() <= 0.02 * exact.norm());
    }
}

TEST_CASE("batch scaling keeps the expected outer product per input") {
    // The same input repeated four times has the Fisher of that single input.
    auto data = blobs(1, 2, 3, 1.0, 11);
    auto task = make_task(linear(2, 3, true), data, 0);
    Rng rng(12);
    task.params = random::gaussian(task.dim(), rng, 0.5);
    const std::vector<Eigen::Index> one{0}, four{0, 0, 0, 0};
    CHECK((oracle::softmax_fisher(task, one) - oracle::softmax_fisher(task, four)).norm() <= 1e-15);
    Matrix est1 = Matrix::Zero(task.dim(), task.dim()), est4 = est1;
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) {
        const Vector a = fisher_direction(task, one, rng);
        const Vector b = fisher_direction(task, four, rng);
        est1 += a * a.transpose();
        est4 += b * b.transpose();
    }
    const Matrix exact = oracle::softmax_fisher(task, one);
    CHECK((est1 / draws - exact).norm() <= 0.03 * exact.norm());
    CHECK((est4 / draws - exact).norm() <= 0.03 * exact.norm());
}

TEST_CASE("sampled scores have zero mean") {
    auto data = blobs(4, 2, 3, 1.0, 13);
    auto task = make_task(mlp(2, 3, 3), data, 14);
    Rng rng(15);
    const auto batch = full_batch(*data);
    const int draws = 20000;
    Vector sum = Vector::Zero(task.dim()), sq = sum;
    for (int i = 0; i < draws; ++i) {
        const Vector d = fisher_direction(task, batch, rng);
        sum += d;
        sq += d.cwiseProduct(d);
    }
    const Vector mean = sum / draws;
    const Vector sd = (sq / draws - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index i = 0; i < task.dim(); ++i) {
        CHECK(std::abs(mean(i)) <= 3.0 * sd(i) / std::sqrt(double(draws)) + 1e-15);
    }
}

TEST_CASE("make_synthetic") {
    SyntheticConfig c;
    c.n = 0;
    CHECK_THROWS_AS(make_synthetic(c), ParameterError);
    c.n = 50;
    c.blob_spread = -1.0;
    CHECK_THROWS_AS(make_synthetic(c), ParameterError);

    c.blob_spread = 0.5;
    c.classes = 7;
    c.dim = 3;
    const Dataset a = make_synthetic(c);
    const Dataset b = make_synthetic(c);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    c.seed = 1;
    CHECK(make_synthetic(c).features != a.features);
    for (auto y : a.labels) CHECK((y >= 0 && y < 7));

    // Tiny spread: linear model fits almost perfectly.
    auto tiny = blobs(200, 3, 4, 1e-3, 16);
    auto task = make_task(linear(3, 4, true), tiny, 0);
    const auto batch = full_batch(*tiny);
    for (int t = 0; t < 300; ++t) task.params -= 0.5 * loss_and_grad(task, batch).grad;
    CHECK(accuracy(task, batch) >= 0.99);
}

TEST_CASE("dataset binary round trip") {
    auto data = blobs(17, 3, 4, 0.8, 17);
    std::stringstream ss;
    write_dataset(ss, *data);
    const Dataset back = read_dataset(ss);
    CHECK(back.features == data->features);
    CHECK(back.labels == data->labels);
    CHECK(back.seed == data->seed);
    CHECK(back.classes == 4);

    std::stringstream truncated(ss.str().substr(0, 20));
    CHECK_THROWS(read_dataset(truncated));
    std::stringstream wrong("XXXX0000000000000000");
    CHECK_THROWS(read_dataset(wrong));
}

TEST_CASE("BatchSampler hands out fixed-size batches without repeats within an epoch") {
    // The partial tail of an epoch is dropped so every batch has the same size.
    BatchSampler s(10, 3, 18);
    std::vector<int> seen(10, 0);
    for (int k = 0; k < 3; ++k) {
        const auto b = s.next();
        CHECK(b.size() == 3);
        for (auto i : b) ++seen[std::size_t(i)];
    }
    for (int v : seen) CHECK(v <= 1);
    CHECK(s.next().size() == 3);

    BatchSampler whole(4, 9, 0);
    CHECK(whole.next().size() == 4);
    CHECK_THROWS_AS(BatchSampler(0, 3, 0), ParameterError);
}

TEST_CASE("task validation") {
    auto data = blobs(5, 2, 3, 1.0, 19);
    CHECK_THROWS_AS(make_task(linear(3, 3, true), data, 0), ParameterError);
    auto task = make_task(linear(2, 3, true), data, 0);
    task.params(0) = std::nan("");
    CHECK_THROWS_AS(task.validate(), InputError);
    std::vector<Eigen::Index> empty;
    task.params.setZero();
    CHECK_THROWS_AS(loss_and_grad(task, empty), ParameterError);
}

TEST_CASE("anisotropy scales the nuisance features") {
    SyntheticConfig c;
    c.n = 4000;
    c.dim = 3;
    c.classes = 2;
    c.blob_spread = 1.0;
    c.anisotropy = 100.0;
    const Dataset d = make_synthetic(c);
    const Vector sd = ((d.features.rowwise() - d.features.colwise().mean()).colwise().squaredNorm() /
                       double(c.n)).cwiseSqrt();
    // Column 0 carries the class signal: variance 1 + radius^2.
    CHECK(sd(0) == doctest::Approx(std::sqrt(10.0)).epsilon(0.05));
    CHECK(sd(1) == doctest::Approx(10.0).epsilon(0.05));
    CHECK(sd(2) == doctest::Approx(100.0).epsilon(0.05));
    c.anisotropy = 0.5;
    CHECK_THROWS_AS(make_synthetic(c), ParameterError);
}
