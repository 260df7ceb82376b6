#include "ginger/tasks.hpp"

#include "ginger/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ginger {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

struct MlpView {
    ConstRowMap w1;
    Eigen::Map<const Vector> b1;
    ConstRowMap w2;
    Eigen::Map<const Vector> b2;
};

MlpView mlp_view(const ModelSpec& s, const Eigen::Ref<const Vector>& p) {
    const double* ptr = p.data();
    const Eigen::Index n = s.input_dim, h = s.hidden, c = s.classes;
    return MlpView{ConstRowMap(ptr, h, n), Eigen::Map<const Vector>(ptr + h * n, h),
                   ConstRowMap(ptr + h * n + h, c, h),
                   Eigen::Map<const Vector>(ptr + h * n + h + c * h, c)};
}

void require_params(const ModelSpec& s, const Eigen::Ref<const Vector>& p) {
    if (p.size() != s.param_count()) {
        throw ParameterError("parameter vector has length " + std::to_string(p.size()) +
                             ", model expects " + std::to_string(s.param_count()));
    }
}

std::int32_t sample_label(const Vector& probs, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        acc += probs(k);
        if (u < acc) return static_cast<std::int32_t>(k);
    }
    return static_cast<std::int32_t>(probs.size() - 1);
}

}  // namespace

Eigen::Index ModelSpec::param_count() const {
    switch (arch) {
        case Architecture::softmax_linear:
            return classes * input_dim + (bias ? classes : 0);
        case Architecture::mlp:
            return hidden * input_dim + hidden + classes * hidden + classes;
    }
    return 0;
}

void ModelSpec::validate() const {
    if (input_dim < 1 || classes < 1) throw ParameterError("model: input_dim and classes must be positive");
    if (arch == Architecture::mlp && hidden < 1) throw ParameterError("model: mlp needs hidden >= 1");
}

Dataset make_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n < 1 || cfg.dim < 1 || cfg.classes < 1) {
        throw ParameterError("make_synthetic: n, dim and classes must be positive");
    }
    if (!(cfg.blob_spread >= 0.0) || !(cfg.radius > 0.0)) {
        throw ParameterError("make_synthetic: blob_spread must be >= 0 and radius > 0");
    }
    if (!(cfg.anisotropy >= 1.0) || !std::isfinite(cfg.anisotropy)) {
        throw ParameterError("make_synthetic: anisotropy must be finite and >= 1");
    }
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix centers(cfg.classes, cfg.dim);
    for (Eigen::Index k = 0; k < cfg.classes; ++k) {
        Vector c = Vector::Zero(cfg.dim);
        if (cfg.classes <= 2 * cfg.dim) {
            c(k / 2) = (k % 2 == 0) ? 1.0 : -1.0;
        } else {
            for (Eigen::Index i = 0; i < cfg.dim; ++i) c(i) = normal(rng);
            c.normalize();
        }
        centers.row(k) = cfg.radius * c.transpose();
    }

    Dataset data;
    data.dim = cfg.dim;
    data.classes = cfg.classes;
    data.seed = cfg.seed;
    data.features.resize(cfg.n, cfg.dim);
    data.labels.resize(static_cast<std::size_t>(cfg.n));
    Vector scale = Vector::Ones(cfg.dim);
    for (Eigen::Index j = 1; j < cfg.dim; ++j) {
        scale(j) = std::pow(cfg.anisotropy, double(j) / double(cfg.dim - 1));
    }
    for (Eigen::Index i = 0; i < cfg.n; ++i) {
        const auto k = static_cast<std::int32_t>(i % cfg.classes);
        data.labels[static_cast<std::size_t>(i)] = k;
        for (Eigen::Index j = 0; j < cfg.dim; ++j) {
            data.features(i, j) = scale(j) * (centers(k, j) + cfg.blob_spread * normal(rng));
        }
    }
    return data;
}

void write_dataset(std::ostream& os, const Dataset& data) {
    io::put_magic(os, "GDS1");
    io::put_u64(os, static_cast<std::uint64_t>(data.size()));
    io::put_u64(os, static_cast<std::uint64_t>(data.dim));
    io::put_u64(os, static_cast<std::uint64_t>(data.classes));
    io::put_u64(os, data.seed);
    for (Eigen::Index i = 0; i < data.size(); ++i)
        for (Eigen::Index j = 0; j < data.dim; ++j) io::put_f64(os, data.features(i, j));
    for (auto y : data.labels) io::put_u32(os, static_cast<std::uint32_t>(y));
}

Dataset read_dataset(std::istream& is) {
    io::expect_magic(is, "GDS1");
    Dataset data;
    const auto n = static_cast<Eigen::Index>(io::get_u64(is));
    data.dim = static_cast<Eigen::Index>(io::get_u64(is));
    data.classes = static_cast<Eigen::Index>(io::get_u64(is));
    data.seed = io::get_u64(is);
    if (n < 1 || data.dim < 1 || data.classes < 1) throw ParameterError("read_dataset: bad header");
    data.features.resize(n, data.dim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < data.dim; ++j) data.features(i, j) = io::get_f64(is);
    data.labels.resize(static_cast<std::size_t>(n));
    for (auto& y : data.labels) {
        y = static_cast<std::int32_t>(io::get_u32(is));
        if (y < 0 || y >= data.classes) throw InputError("read_dataset: label out of range");
    }
    return data;
}

void TaskInstance::validate() const {
    model.validate();
    if (!data || data->size() == 0) throw ParameterError("task: dataset is empty");
    if (data->dim != model.input_dim || data->classes != model.classes) {
        throw ParameterError("task: dataset shape does not match the model");
    }
    require_params(model, params);
    if (!params.allFinite()) throw InputError("task: parameters are not finite");
}

Vector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Vector p = Vector::Zero(spec.param_count());
    if (spec.arch == Architecture::softmax_linear) return p;

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index n = spec.input_dim, h = spec.hidden, c = spec.classes;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(n));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (Eigen::Index i = 0; i < h * n; ++i) p(i) = s1 * normal(rng);
    for (Eigen::Index i = 0; i < c * h; ++i) p(h * n + h + i) = s2 * normal(rng);
    return p;
}

TaskInstance make_task(const ModelSpec& spec, std::shared_ptr<const Dataset> data,
                       std::uint64_t seed) {
    TaskInstance task{spec, std::move(data), init_params(spec, seed)};
    task.validate();
    return task;
}

BatchSampler::BatchSampler(Eigen::Index n, Eigen::Index batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(static_cast<std::size_t>(std::max<Eigen::Index>(n, 0))),
      rng_(seed) {
    if (n < 1 || batch_size < 1) throw ParameterError("BatchSampler: n and batch_size must be positive");
    batch_size_ = std::min(batch_size, n);
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    reshuffle();
}

void BatchSampler::reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

std::vector<Eigen::Index> BatchSampler::next() {
    const auto b = static_cast<std::size_t>(batch_size_);
    if (b == order_.size()) return order_;
    if (cursor_ + b > order_.size()) reshuffle();
    std::vector<Eigen::Index> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + b));
    cursor_ += b;
    return out;
}

std::vector<Eigen::Index> full_batch(const Dataset& data) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    return idx;
}

Vector logits(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
              const Eigen::Ref<const Vector>& x) {
    require_params(spec, params);
    if (spec.arch == Architecture::softmax_linear) {
        ConstRowMap w(params.data(), spec.classes, spec.input_dim);
        Vector z = w * x;
        if (spec.bias) z += params.tail(spec.classes);
        return z;
    }
    const MlpView m = mlp_view(spec, params);
    const Vector hid = (m.w1 * x + m.b1).array().tanh().matrix();
    return m.w2 * hid + m.b2;
}

Vector softmax(const Eigen::Ref<const Vector>& z) {
    const double zmax = z.maxCoeff();
    Vector e = (z.array() - zmax).exp().matrix();
    return e / e.sum();
}

Vector logits_vjp(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                  const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& w) {
    require_params(spec, params);
    Vector g = Vector::Zero(spec.param_count());
    const Eigen::Index n = spec.input_dim, c = spec.classes;
    if (spec.arch == Architecture::softmax_linear) {
        RowMap(g.data(), c, n).noalias() = w * x.transpose();
        if (spec.bias) g.tail(c) = w;
        return g;
    }
    const Eigen::Index h = spec.hidden;
    const MlpView m = mlp_view(spec, params);
    const Vector hid = (m.w1 * x + m.b1).array().tanh().matrix();
    const Vector dhid = m.w2.transpose() * w;
    const Vector dpre = dhid.cwiseProduct((1.0 - hid.array().square()).matrix());
    double* ptr = g.data();
    RowMap(ptr, h, n).noalias() = dpre * x.transpose();
    Eigen::Map<Vector>(ptr + h * n, h) = dpre;
    RowMap(ptr + h * n + h, c, h).noalias() = w * hid.transpose();
    Eigen::Map<Vector>(ptr + h * n + h + c * h, c) = w;
    return g;
}

Matrix logits_jacobian(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                       const Eigen::Ref<const Vector>& x) {
    Matrix jac(spec.classes, spec.param_count());
    for (Eigen::Index k = 0; k < spec.classes; ++k) {
        jac.row(k) = logits_vjp(spec, params, x, Vector::Unit(spec.classes, k)).transpose();
    }
    return jac;
}

Vector log_prob_grad(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                     const Eigen::Ref<const Vector>& x, std::int32_t label) {
    Vector w = -softmax(logits(spec, params, x));
    w(label) += 1.0;
    return logits_vjp(spec, params, x, w);
}

LossGrad loss_and_grad(const TaskInstance& task, std::span<const Eigen::Index> batch) {
    if (batch.empty()) throw ParameterError("loss_and_grad: empty batch");
    const ModelSpec& spec = task.model;
    const Dataset& data = *task.data;
    LossGrad out;
    out.grad = Vector::Zero(spec.param_count());
    for (const auto i : batch) {
        const Vector x = data.features.row(i).transpose();
        const std::int32_t y = data.labels[static_cast<std::size_t>(i)];
        const Vector z = logits(spec, task.params, x);
        const double zmax = z.maxCoeff();
        const double lse = zmax + std::log((z.array() - zmax).exp().sum());
        out.loss += lse - z(y);
        Vector w = (z.array() - lse).exp().matrix();
        w(y) -= 1.0;
        out.grad += logits_vjp(spec, task.params, x, w);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    out.grad *= inv;
    return out;
}

double loss_only(const ModelSpec& spec, const Eigen::Ref<const Vector>& params,
                 const Dataset& data, std::span<const Eigen::Index> batch) {
    double loss = 0.0;
    for (const auto i : batch) {
        const Vector z = logits(spec, params, data.features.row(i).transpose());
        const double zmax = z.maxCoeff();
        loss += zmax + std::log((z.array() - zmax).exp().sum()) -
                z(data.labels[static_cast<std::size_t>(i)]);
    }
    return loss / static_cast<double>(batch.size());
}

Vector fisher_direction(const TaskInstance& task, std::span<const Eigen::Index> batch, Rng& rng,
                        int samples_per_input) {
    if (batch.empty()) throw ParameterError("fisher_direction: empty batch");
    if (samples_per_input < 1) throw ParameterError("fisher_direction: samples_per_input must be >= 1");
    const ModelSpec& spec = task.model;
    Vector d = Vector::Zero(spec.param_count());
    for (const auto i : batch) {
        const Vector x = task.data->features.row(i).transpose();
        const Vector probs = softmax(logits(spec, task.params, x));
        // sum_j (e_yj - p) pulled back through one vector-Jacobian product
        Vector w = -static_cast<double>(samples_per_input) * probs;
        for (int j = 0; j < samples_per_input; ++j) w(sample_label(probs, rng)) += 1.0;
        d += logits_vjp(spec, task.params, x, w);
    }
    return d / std::sqrt(static_cast<double>(batch.size()) * samples_per_input);
}

double accuracy(const TaskInstance& task, std::span<const Eigen::Index> batch) {
    if (batch.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto i : batch) {
        Eigen::Index arg = 0;
        logits(task.model, task.params, task.data->features.row(i).transpose()).maxCoeff(&arg);
        if (arg == task.data->labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(batch.size());
}

}  // namespace ginger
