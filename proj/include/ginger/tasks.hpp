#pragma once

#include "ginger/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace ginger {

using Rng = std::mt19937_64;

enum class Architecture { softmax_linear, mlp };

/// Small differentiable classifiers f(theta; x) -> logits, with softmax
/// likelihood p(y|x) = softmax(f)_y.
///
/// Parameter layout (row-major blocks, concatenated):
///   softmax_linear: W (classes x input_dim), b (classes) if bias
///   mlp:            W1 (hidden x input_dim), b1, W2 (classes x hidden), b2
///                   with tanh hidden activation; biases always present
struct ModelSpec {
    Architecture arch = Architecture::softmax_linear;
    Eigen::Index input_dim = 2;
    Eigen::Index hidden = 0;
    Eigen::Index classes = 2;
    bool bias = true;

    Eigen::Index param_count() const;
    void validate() const;
};

struct Dataset {
    Eigen::Index dim = 0;
    Eigen::Index classes = 0;
    std::uint64_t seed = 0;
    Matrix features;                 // n x dim
    std::vector<std::int32_t> labels;  // n, each in [0, classes)

    Eigen::Index size() const { return features.rows(); }
};

struct SyntheticConfig {
    Eigen::Index n = 256;
    Eigen::Index dim = 2;
    Eigen::Index classes = 2;
    double blob_spread = 1.0;
    std::uint64_t seed = 0;
    double radius = 3.0;  // class centers lie on a sphere of this radius
    // Feature j is multiplied by anisotropy^(j / (dim - 1)). The class
    // centers sit on the leading coordinates, so values above 1 add
    // high-variance nuisance directions and make the problem ill-conditioned.
    double anisotropy = 1.0;
};

/// Gaussian blobs around class centers placed on a sphere, so every center
/// is an extreme point and the zero-spread limit is linearly separable.
Dataset make_synthetic(const SyntheticConfig& config);

// Little-endian: "GDS1", u64 n, u64 dim, u64 classes, u64 seed,
// features f64 row-major (n * dim), labels i32 (n).
void write_dataset(std::ostream& os, const Dataset& data);
Dataset read_dataset(std::istream& is);

struct TaskInstance {
    ModelSpec model;
    std::shared_ptr<const Dataset> data;
    Vector params;

    Eigen::Index dim() const { return params.size(); }
    void validate() const;
};

/// Random initial parameters: zeros for softmax_linear, scaled Gaussian
/// (1/sqrt(fan_in)) weights and zero biases for the MLP.
Vector init_params(const ModelSpec& spec, std::uint64_t seed);

TaskInstance make_task(const ModelSpec& spec, std::shared_ptr<const Dataset> data,
                       std::uint64_t seed);

/// Shuffles indices once per epoch and hands out contiguous batches.
class BatchSampler {
public:
    BatchSampler(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed);
    std::vector<Eigen::Index> next();

private:
    void reshuffle();

    Eigen::Index batch_size_;
    std::vector<Eigen::Index> order_;
    std::size_t cursor_ = 0;
    Rng rng_;
};

std::vector<Eigen::Index> full_batch(const Dataset& data);

Vector logits(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
              const Eigen::Ref<const Vector>& x);
Vector softmax(const Eigen::Ref<const Vector>& z);

/// J^T w for the Jacobian J = d logits / d theta at input x.
Vector logits_vjp(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                  const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& w);

/// Dense Jacobian d logits / d theta (classes x d).
Matrix logits_jacobian(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                       const Eigen::Ref<const Vector>& x);

/// grad_theta log p_theta(label | x)
Vector log_prob_grad(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                     const Eigen::Ref<const Vector>& x, std::int32_t label);

struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

/// Mean negative log-likelihood over the batch and its exact gradient.
LossGrad loss_and_grad(const TaskInstance& task, std::span<const Eigen::Index> batch);

double loss_only(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                 const Dataset& data, std::span<const Eigen::Index> batch);

/// Score vector with model-sampled labels:
///   d = (|B| s)^{-1/2} sum_{x in B} sum_{j < s} grad log p(y_hat_j | x),
///   y_hat_j ~ p_theta(.|x).
/// With s = 1 this is the single-sample estimator; larger s pools extra
/// draws while keeping E[d d^T] equal to the batch Fisher.
Vector fisher_direction(const TaskInstance& task, std::span<const Eigen::Index> batch, Rng& rng,
                        int samples_per_input = 1);

double accuracy(const TaskInstance& task, std::span<const Eigen::Index> batch);

}  // namespace ginger
