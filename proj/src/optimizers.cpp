#include "ginger/optimizers.hpp"

#include <cmath>
#include <numbers>

namespace ginger {

namespace {

nlohmann::json vec_to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vec_from_json(const nlohmann::json& j) {
    const auto raw = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

void require_same_length(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) {
        throw ParameterError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

// Heavy-ball blend of an already preconditioned direction.
void apply_with_momentum(Vector& buffer, Eigen::Ref<Vector> params, const Vector& direction,
                         double eta, double momentum_coef) {
    if (momentum_coef > 0.0) {
        if (buffer.size() != direction.size()) buffer = Vector::Zero(direction.size());
        buffer = momentum_coef * buffer + direction;
        params -= eta * buffer;
    } else {
        params -= eta * direction;
    }
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::ginger: return "ginger";
        case OptimizerKind::momentum: return "momentum";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::qng: return "qng";
    }
    return "?";
}

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::constant: return "constant";
        case ScheduleKind::inverse_sqrt: return "inverse_sqrt";
        case ScheduleKind::cosine: return "cosine";
    }
    return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "ginger") return OptimizerKind::ginger;
    if (name == "momentum") return OptimizerKind::momentum;
    if (name == "adam") return OptimizerKind::adam;
    if (name == "qng") return OptimizerKind::qng;
    throw ParameterError("unknown optimizer kind '" + std::string(name) + "'");
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "inverse_sqrt") return ScheduleKind::inverse_sqrt;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ParameterError("unknown schedule '" + std::string(name) + "'");
}

double Schedule::at(std::uint64_t t) const {
    switch (kind) {
        case ScheduleKind::constant:
            return base;
        case ScheduleKind::inverse_sqrt:
            return base / std::sqrt(1.0 + static_cast<double>(t));
        case ScheduleKind::cosine: {
            const double h = static_cast<double>(std::max<std::uint64_t>(horizon, 1));
            const double frac = std::min(static_cast<double>(t), h) / h;
            return base * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
        }
    }
    return base;
}

void OptimizerConfig::validate(Eigen::Index dim) const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
    if (!(momentum_coef >= 0.0 && momentum_coef < 1.0)) {
        throw ParameterError("momentum_coef must lie in [0, 1)");
    }
    if (schedule == ScheduleKind::cosine && schedule_horizon == 0) {
        throw ParameterError("cosine schedule needs a positive horizon");
    }
    if (kind == OptimizerKind::ginger || kind == OptimizerKind::qng) {
        if (tau < 1) throw ParameterError("tau must be positive");
        if (tau >= dim) {
            throw ParameterError("tau (" + std::to_string(tau) + ") must be smaller than the model dimension (" +
                                 std::to_string(dim) + ")");
        }
    }
}

nlohmann::json to_json(const OptimizerConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"learning_rate", c.learning_rate},
            {"schedule", to_string(c.schedule)},
            {"schedule_horizon", c.schedule_horizon},
            {"alpha", c.alpha},
            {"gamma", c.gamma},
            {"tau", c.tau},
            {"momentum_coef", c.momentum_coef},
            {"seed", c.seed},
            {"reorth_every", c.reorth_every}};
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
    OptimizerConfig c;
    c.kind = parse_optimizer_kind(j.at("kind").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    c.schedule_horizon = j.at("schedule_horizon").get<std::uint64_t>();
    c.alpha = j.at("alpha").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.tau = j.at("tau").get<Eigen::Index>();
    c.momentum_coef = j.at("momentum_coef").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.reorth_every = j.at("reorth_every").get<std::uint64_t>();
    return c;
}

void ginger_step(GingerState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
                 const Eigen::Ref<const Vector>& d_t, double eta, double momentum_coef) {
    require_same_length(params.size(), state.factors.dim(), "ginger_step params");
    require_same_length(grad.size(), state.factors.dim(), "ginger_step grad");
    state.factors.update(d_t);
    const Vector direction = state.factors.direction(grad, 1.0);
    apply_with_momentum(state.momentum, params, direction, eta, momentum_coef);
}

void momentum_step(MomentumState& state, Eigen::Ref<Vector> params,
                   const Eigen::Ref<const Vector>& grad, double eta, double momentum_coef) {
    require_same_length(params.size(), grad.size(), "momentum_step");
    if (state.velocity.size() != grad.size()) state.velocity = Vector::Zero(grad.size());
    state.velocity = momentum_coef * state.velocity + grad;
    params -= eta * state.velocity;
}

void adam_step(AdamState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
               double eta, double beta1, double beta2, double eps) {
    require_same_length(params.size(), grad.size(), "adam_step");
    if (state.first.size() != grad.size()) {
        state.first = Vector::Zero(grad.size());
        state.second = Vector::Zero(grad.size());
    }
    ++state.step;
    state.first = beta1 * state.first + (1.0 - beta1) * grad;
    state.second = beta2 * state.second + (1.0 - beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    params.array() -= eta * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + eps);
}

double qng_beta(double alpha, double q_norm_sq) {
    return (1.0 - alpha) / (std::sqrt(alpha + (1.0 - alpha) * q_norm_sq) + std::sqrt(alpha));
}

namespace {

// (sqrt(alpha) I + beta q q^T)^{-1} x
void apply_factor_inverse(double sqrt_alpha, const QngFactor& f, Vector& x) {
    const double s = f.q.squaredNorm();
    const double c = f.beta / (sqrt_alpha + f.beta * s);
    x -= (c * f.q.dot(x)) * f.q;
    x /= sqrt_alpha;
}

}  // namespace

Vector qng_apply_inverse(const QngState& state, const Eigen::Ref<const Vector>& x) {
    const double sa = std::sqrt(state.alpha);
    Vector y = x;
    for (const auto& f : state.factors) apply_factor_inverse(sa, f, y);
    return y;
}

void qng_update(QngState& state, const Eigen::Ref<const Vector>& d_t) {
    if (!d_t.allFinite()) throw InputError("qng_update: d_t has non-finite entries");
    ++state.step;
    Vector q = qng_apply_inverse(state, d_t);
    const double s = q.squaredNorm();
    if (s == 0.0) return;
    state.factors.push_back({std::move(q), qng_beta(state.alpha, s)});
    while (static_cast<Eigen::Index>(state.factors.size()) > state.window) state.factors.pop_front();
}

Vector qng_direction(const QngState& state, const Eigen::Ref<const Vector>& g) {
    Vector y = qng_apply_inverse(state, g);
    const double sa = std::sqrt(state.alpha);
    for (auto it = state.factors.rbegin(); it != state.factors.rend(); ++it) {
        apply_factor_inverse(sa, *it, y);
    }
    return y;
}

void qng_step(QngState& state, Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
              const Eigen::Ref<const Vector>& d_t, double eta, double momentum_coef) {
    require_same_length(params.size(), grad.size(), "qng_step");
    qng_update(state, d_t);
    apply_with_momentum(state.momentum, params, qng_direction(state, grad), eta, momentum_coef);
}

namespace {

OptimizerState make_state(const OptimizerConfig& c, Eigen::Index dim) {
    if (dim < 1) throw ParameterError("optimizer dimension must be positive");
    c.validate(dim);
    switch (c.kind) {
        case OptimizerKind::ginger: {
            GingerState s{GgnFactors::initial(dim, c.tau, c.gamma, c.alpha, c.seed), {}};
            s.factors.set_reorth_every(c.reorth_every);
            return s;
        }
        case OptimizerKind::momentum:
            return MomentumState{Vector::Zero(dim)};
        case OptimizerKind::adam:
            return AdamState{Vector::Zero(dim), Vector::Zero(dim), 0};
        case OptimizerKind::qng:
            return QngState{c.alpha, c.tau, {}, 0, {}};
    }
    throw ParameterError("unknown optimizer kind");
}

}  // namespace

Optimizer::Optimizer(const OptimizerConfig& config, Eigen::Index dim)
    : config_(config), schedule_(config.make_schedule()), dim_(dim), state_(make_state(config, dim)) {}

void Optimizer::step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad,
                     const Eigen::Ref<const Vector>& d_t) {
    require_same_length(params.size(), dim_, "Optimizer::step params");
    require_same_length(grad.size(), dim_, "Optimizer::step grad");
    require_same_length(d_t.size(), dim_, "Optimizer::step d_t");
    if (!grad.allFinite()) throw InputError("Optimizer::step: gradient has non-finite entries");
    const double eta = schedule_.at(t_);
    const double mu = config_.momentum_coef;
    std::visit(
        [&](auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, GingerState>) {
                ginger_step(s, params, grad, d_t, eta, mu);
            } else if constexpr (std::is_same_v<S, MomentumState>) {
                momentum_step(s, params, grad, eta, mu);
            } else if constexpr (std::is_same_v<S, AdamState>) {
                adam_step(s, params, grad, eta, mu, config_.alpha, config_.gamma);
            } else {
                qng_step(s, params, grad, d_t, eta, mu);
            }
        },
        state_);
    ++t_;
}

std::optional<InvariantReport> Optimizer::invariants() const {
    if (const auto* g = std::get_if<GingerState>(&state_)) return g->factors.invariants();
    return std::nullopt;
}

nlohmann::json Optimizer::checkpoint() const {
    nlohmann::json state;
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, GingerState>) {
                state = {{"factors", to_json(s.factors)}, {"momentum", vec_to_json(s.momentum)}};
            } else if constexpr (std::is_same_v<S, MomentumState>) {
                state = {{"velocity", vec_to_json(s.velocity)}};
            } else if constexpr (std::is_same_v<S, AdamState>) {
                state = {{"first", vec_to_json(s.first)},
                         {"second", vec_to_json(s.second)},
                         {"step", s.step}};
            } else {
                nlohmann::json factors = nlohmann::json::array();
                for (const auto& f : s.factors) factors.push_back({{"q", vec_to_json(f.q)}, {"beta", f.beta}});
                state = {{"factors", factors}, {"step", s.step}, {"momentum", vec_to_json(s.momentum)}};
            }
        },
        state_);
    return {{"format", "ginger-optimizer"},
            {"version", kCheckpointVersion},
            {"kind", to_string(config_.kind)},
            {"dim", dim_},
            {"t", t_},
            {"config", to_json(config_)},
            {"state", state}};
}

Optimizer Optimizer::restore(const nlohmann::json& j) {
    if (j.at("format").get<std::string>() != "ginger-optimizer") {
        throw ParameterError("checkpoint: unexpected format tag");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
        throw ParameterError("checkpoint: unsupported version");
    }
    const OptimizerConfig config = optimizer_config_from_json(j.at("config"));
    if (j.at("kind").get<std::string>() != to_string(config.kind)) {
        throw ParameterError("checkpoint: kind tag disagrees with config");
    }
    Optimizer opt(config, j.at("dim").get<Eigen::Index>());
    opt.t_ = j.at("t").get<std::uint64_t>();
    const auto& st = j.at("state");
    switch (config.kind) {
        case OptimizerKind::ginger: {
            GingerState s{ggn_from_json(st.at("factors")), vec_from_json(st.at("momentum"))};
            s.factors.set_reorth_every(config.reorth_every);
            opt.state_ = std::move(s);
            break;
        }
        case OptimizerKind::momentum:
            opt.state_ = MomentumState{vec_from_json(st.at("velocity"))};
            break;
        case OptimizerKind::adam:
            opt.state_ = AdamState{vec_from_json(st.at("first")), vec_from_json(st.at("second")),
                                   st.at("step").get<std::uint64_t>()};
            break;
        case OptimizerKind::qng: {
            QngState s{config.alpha, config.tau, {}, st.at("step").get<std::uint64_t>(),
                       vec_from_json(st.at("momentum"))};
            for (const auto& f : st.at("factors")) {
                s.factors.push_back({vec_from_json(f.at("q")), f.at("beta").get<double>()});
            }
            opt.state_ = std::move(s);
            break;
        }
    }
    return opt;
}

}  // namespace ginger
