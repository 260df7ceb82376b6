#pragma once

#include "ginger/common.hpp"
#include "ginger/lowrank_ggn.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace ginger {

enum class OptimizerKind { ginger, momentum, adam, qng };
enum class ScheduleKind { constant, inverse_sqrt, cosine };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(ScheduleKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Learning-rate schedule eta_t.
///   constant:     eta
///   inverse_sqrt: eta / sqrt(1 + t)
///   cosine:       eta * (floor + (1 - floor) * (1 + cos(pi * min(t, horizon) / horizon)) / 2)
struct Schedule {
    ScheduleKind kind = ScheduleKind::constant;
    double base = 1e-2;
    std::uint64_t horizon = 1000;
    double floor = 0.0;

    double at(std::uint64_t t) const;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::ginger;
    double learning_rate = 1e-2;
    ScheduleKind schedule = ScheduleKind::constant;
    std::uint64_t schedule_horizon = 1000;
    double alpha = 0.99;          // EMA decay (ginger, qng) or second-moment decay (adam)
    double gamma = 1e-4;          // damping (ginger) or epsilon (adam)
    Eigen::Index tau = 8;         // rank (ginger) or factor window (qng)
    double momentum_coef = 0.9;   // heavy-ball / first-moment coefficient
    std::uint64_t seed = 0;
    std::uint64_t reorth_every = GgnFactors::kDefaultReorthEvery;

    Schedule make_schedule() const { return {schedule, learning_rate, schedule_horizon, 0.0}; }
    void validate(Eigen::Index dim) const;
};

nlohmann::json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

struct GingerState {
    GgnFactors factors;
    Vector momentum;  // empty when momentum_coef == 0
};

struct MomentumState {
    Vector velocity;
};

struct AdamState {
    Vector first;
    Vector second;
    std::uint64_t step = 0;
};

/// One factor sqrt(alpha) I + beta q q^T of the truncated QNG product.
struct QngFactor {
    Vector q;
    double beta = 0.0;
};

struct QngState {
    double alpha = 0.99;
    Eigen::Index window = 8;
    std::deque<QngFactor> factors;  // oldest first, at most `window`
    std::uint64_t step = 0;
    Vector momentum;
};

using OptimizerState = std::variant<GingerState, MomentumState, AdamState, QngState>;

/// Algorithm order: fold d_t into the preconditioner, precondition grad with
/// the updated state, optionally blend into a heavy-ball buffer, then step.
void ginger_step(GingerState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
                 const Eigen::Ref<const Vector>& d_t, double eta, double momentum_coef);

/// v <- mu v + grad; params -= eta v
void momentum_step(MomentumState& state, Eigen::Ref<Vector> params,
                   const Eigen::Ref<const Vector>& grad, double eta, double momentum_coef);

/// Bias-corrected Adam.
void adam_step(AdamState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
               double eta, double beta1, double beta2, double eps);

/// beta = (sqrt(alpha + (1 - alpha) s) - sqrt(alpha)) / s with s = ||q||^2,
/// evaluated as (1 - alpha) / (sqrt(alpha + (1 - alpha) s) + sqrt(alpha)) so
/// s -> 0 gives the limit (1 - alpha) / (2 sqrt(alpha)).
double qng_beta(double alpha, double q_norm_sq);

/// A^{-1} x where A is the product of the stored factors, oldest on the left.
Vector qng_apply_inverse(const QngState& state, const Eigen::Ref<const Vector>& x);

/// q = A^{-1} d_t, push (q, beta), drop the oldest factor beyond the window.
/// A zero q is skipped.
void qng_update(QngState& state, const Eigen::Ref<const Vector>& d_t);

/// (A A^T)^{-1} g in O(d * window).
Vector qng_direction(const QngState& state, const Eigen::Ref<const Vector>& g);

void qng_step(QngState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
              const Eigen::Ref<const Vector>& d_t, double eta, double momentum_coef);

/// Uniform front end over the four optimizers. Every kind takes the same
/// (params, grad, d_t) triple; kinds without curvature state ignore d_t.
class Optimizer {
public:
    static constexpr int kCheckpointVersion = 1;

    Optimizer(const OptimizerConfig& config, Eigen::Index dim);

    void step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
              const Eigen::Ref<const Vector>& d_t);

    OptimizerKind kind() const { return config_.kind; }
    const OptimizerConfig& config() const { return config_; }
    const OptimizerState& state() const { return state_; }
    OptimizerState& state() { return state_; }
    std::uint64_t steps_taken() const { return t_; }
    Eigen::Index dim() const { return dim_; }
    double current_learning_rate() const { return schedule_.at(t_); }

    /// Preconditioner health for ginger; empty for the other kinds.
    std::optional<InvariantReport> invariants() const;

    nlohmann::json checkpoint() const;
    static Optimizer restore(const nlohmann::json& j);

private:
    OptimizerConfig config_;
    Schedule schedule_;
    Eigen::Index dim_;
    std::uint64_t t_ = 0;
    OptimizerState state_;
};

}  // namespace ginger
