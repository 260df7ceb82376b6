#include "ginger/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ginger {

namespace {

using Entries = std::map<std::string, std::pair<std::vector<std::string>, int>>;  // key -> (values, line)

struct Section {
    std::string name;
    std::string label;
    int line = 0;
    Entries entries;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ParameterError("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return x;
    } catch (const std::logic_error&) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& v, int line) {
    const double x = to_double(v, line);
    if (x < 0.0 || x != std::floor(x) || x > 9.0e15) fail(line, "expected a non-negative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    fail(line, "expected a boolean, got '" + v + "'");
}

const std::string& single(const Entries::value_type& kv) {
    if (kv.second.first.size() != 1) fail(kv.second.second, "key '" + kv.first + "' takes a single value");
    return kv.second.first.front();
}

void apply_optimizer_key(OptimizerConfig& c, const std::string& key, const std::string& v, int line) {
    try {
        if (key == "kind") c.kind = parse_optimizer_kind(v);
        else if (key == "learning_rate") c.learning_rate = to_double(v, line);
        else if (key == "schedule") c.schedule = parse_schedule_kind(v);
        else if (key == "schedule_horizon") c.schedule_horizon = to_uint(v, line);
        else if (key == "alpha") c.alpha = to_double(v, line);
        else if (key == "gamma") c.gamma = to_double(v, line);
        else if (key == "tau") c.tau = static_cast<Eigen::Index>(to_uint(v, line));
        else if (key == "momentum_coef") c.momentum_coef = to_double(v, line);
        else if (key == "reorth_every") c.reorth_every = to_uint(v, line);
        else fail(line, "unknown optimizer key '" + key + "'");
    } catch (const ParameterError& e) {
        const std::string msg = e.what();
        if (msg.rfind("config line", 0) == 0) throw;
        fail(line, msg);
    }
}

std::vector<GridPoint> expand_optimizer(const Section& s, std::size_t ordinal) {
    std::vector<std::pair<const std::string*, const Entries::mapped_type*>> keys;
    for (const auto& kv : s.entries) keys.emplace_back(&kv.first, &kv.second);
    const bool gamma_given = s.entries.count("gamma") > 0;

    std::vector<GridPoint> out;
    std::vector<std::size_t> idx(keys.size(), 0);
    const std::string label = s.label.empty() ? "opt" + std::to_string(ordinal) : s.label;
    while (true) {
        OptimizerConfig c;
        for (std::size_t k = 0; k < keys.size(); ++k) {
            apply_optimizer_key(c, *keys[k].first, keys[k].second->first[idx[k]], keys[k].second->second);
        }
        if (!gamma_given && c.kind == OptimizerKind::adam) c.gamma = 1e-8;
        out.push_back({label, c});
        std::size_t k = 0;
        for (; k < keys.size(); ++k) {
            if (++idx[k] < keys[k].second->first.size()) break;
            idx[k] = 0;
        }
        if (k == keys.size()) break;
    }
    return out;
}

std::string format_double(std::optional<double> v) {
    if (!v || !std::isfinite(*v)) return "null";
    std::ostringstream os;
    os << std::setprecision(17) << *v;
    return os.str();
}

nlohmann::ordered_json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

void ExperimentConfig::validate() const {
    task.model.validate();
    if (task.data.n < 1) throw ParameterError("task: n must be positive");
    if (task.fisher_samples < 1) throw ParameterError("task: fisher_samples must be >= 1");
    if (grid.empty()) throw ParameterError("config needs at least one [optimizer] section");
    if (seeds.empty()) throw ParameterError("seeds must not be empty");
    if (batch_size < 1) throw ParameterError("batch_size must be positive");
    if (log_every < 1) throw ParameterError("log_every must be positive");
    const Eigen::Index dim = task.model.param_count();
    for (const auto& p : grid) {
        try {
            p.optimizer.validate(dim);
        } catch (const ParameterError& e) {
            throw ParameterError("optimizer '" + p.label + "': " + e.what());
        }
    }
}

ExperimentConfig parse_config(std::string_view text) {
    std::vector<Section> sections;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(std::string_view(raw).substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            const std::string inner = trim(std::string_view(line).substr(1, line.size() - 2));
            const auto space = inner.find_first_of(" \t");
            Section s;
            s.name = inner.substr(0, space);
            s.label = space == std::string::npos ? "" : trim(std::string_view(inner).substr(space));
            s.line = line_no;
            if (s.name != "experiment" && s.name != "task" && s.name != "optimizer") {
                fail(line_no, "unknown section '" + s.name + "'");
            }
            sections.push_back(std::move(s));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        if (sections.empty()) fail(line_no, "entry outside of any section");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        auto values = split_list(std::string_view(line).substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        for (const auto& v : values)
            if (v.empty()) fail(line_no, "empty value for '" + key + "'");
        if (!sections.back().entries.emplace(key, std::make_pair(std::move(values), line_no)).second) {
            fail(line_no, "duplicate key '" + key + "'");
        }
    }

    ExperimentConfig cfg;
    std::size_t optimizer_ordinal = 0;
    for (const auto& s : sections) {
        if (s.name == "optimizer") {
            auto pts = expand_optimizer(s, optimizer_ordinal++);
            cfg.grid.insert(cfg.grid.end(), pts.begin(), pts.end());
            continue;
        }
        for (const auto& kv : s.entries) {
            const std::string& key = kv.first;
            const int ln = kv.second.second;
            if (s.name == "experiment") {
                if (key == "seeds") {
                    cfg.seeds.clear();
                    for (const auto& v : kv.second.first) cfg.seeds.push_back(to_uint(v, ln));
                    continue;
                }
                const std::string& v = single(kv);
                if (key == "name") cfg.name = v;
                else if (key == "steps") cfg.steps = to_uint(v, ln);
                else if (key == "batch_size") cfg.batch_size = static_cast<Eigen::Index>(to_uint(v, ln));
                else if (key == "log_every") cfg.log_every = to_uint(v, ln);
                else if (key == "output_dir") cfg.output_dir = v;
                else if (key == "timing") cfg.record_timing = to_bool(v, ln);
                else fail(ln, "unknown experiment key '" + key + "'");
            } else {
                const std::string& v = single(kv);
                auto& m = cfg.task.model;
                if (key == "arch") {
                    if (v == "softmax_linear") m.arch = Architecture::softmax_linear;
                    else if (v == "mlp") m.arch = Architecture::mlp;
                    else fail(ln, "unknown arch '" + v + "'");
                } else if (key == "input_dim") {
                    m.input_dim = static_cast<Eigen::Index>(to_uint(v, ln));
                } else if (key == "hidden") {
                    m.hidden = static_cast<Eigen::Index>(to_uint(v, ln));
                } else if (key == "classes") {
                    m.classes = static_cast<Eigen::Index>(to_uint(v, ln));
                } else if (key == "bias") {
                    m.bias = to_bool(v, ln);
                } else if (key == "n") {
                    cfg.task.data.n = static_cast<Eigen::Index>(to_uint(v, ln));
                } else if (key == "blob_spread") {
                    cfg.task.data.blob_spread = to_double(v, ln);
                } else if (key == "radius") {
                    cfg.task.data.radius = to_double(v, ln);
                } else if (key == "anisotropy") {
                    cfg.task.data.anisotropy = to_double(v, ln);
                } else if (key == "data_seed") {
                    cfg.task.data.seed = to_uint(v, ln);
                } else if (key == "fisher_samples") {
                    cfg.task.fisher_samples = static_cast<int>(to_uint(v, ln));
                } else {
                    fail(ln, "unknown task key '" + key + "'");
                }
            }
        }
    }
    cfg.task.data.dim = cfg.task.model.input_dim;
    cfg.task.data.classes = cfg.task.model.classes;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

nlohmann::ordered_json to_json(const MetricRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["train_loss"] = finite_or_null(r.train_loss);
    j["grad_norm"] = finite_or_null(r.grad_norm);
    j["step_time_ns"] = r.step_time_ns;
    j["ortho_residual"] = r.ortho_residual ? nlohmann::ordered_json(*r.ortho_residual) : nullptr;
    j["max_k_gamma"] = r.max_k_gamma ? nlohmann::ordered_json(*r.max_k_gamma) : nullptr;
    j["optimizer"] = std::string(to_string(r.optimizer));
    j["seed"] = r.seed;
    return j;
}

std::optional<double> RunOutcome::min_train_loss() const {
    if (records.empty()) return std::nullopt;
    double best = records.front().train_loss;
    for (const auto& r : records) best = std::min(best, r.train_loss);
    return best;
}

std::optional<double> RunOutcome::final_grad_norm() const {
    if (records.empty()) return std::nullopt;
    return records.back().grad_norm;
}

std::optional<double> RunOutcome::min_grad_norm() const {
    if (records.empty()) return std::nullopt;
    double best = records.front().grad_norm;
    for (const auto& r : records) best = std::min(best, r.grad_norm);
    return best;
}

std::optional<double> RunOutcome::mean_step_time_ns() const {
    if (records.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& r : records) sum += static_cast<double>(r.step_time_ns);
    return sum / static_cast<double>(records.size());
}

std::optional<std::uint64_t> RunOutcome::steps_to_loss(double threshold) const {
    for (const auto& r : records)
        if (r.train_loss <= threshold) return r.step;
    return std::nullopt;
}

RunOutcome run_training(const ExperimentConfig& config, const GridPoint& point, std::uint64_t seed,
                        std::ostream* jsonl) {
    auto data = std::make_shared<const Dataset>(make_synthetic(config.task.data));
    TaskInstance task = make_task(config.task.model, data, seed);

    OptimizerConfig oc = point.optimizer;
    oc.seed = seed;
    Optimizer opt(oc, task.dim());
    BatchSampler sampler(data->size(), config.batch_size, seed * 0x9E3779B97F4A7C15ULL + 1);
    Rng fisher_rng(seed * 0xD1B54A32D192ED03ULL + 2);

    RunOutcome out;
    out.point = point;
    out.seed = seed;
    out.dim = task.dim();

    auto emit = [&](const nlohmann::ordered_json& j) {
        if (jsonl != nullptr) *jsonl << j.dump() << '\n';
    };
    auto abort_run = [&](std::uint64_t step, double loss, double gnorm, const std::string& reason) {
        out.aborted = true;
        out.abort_reason = reason;
        MetricRecord r{step, loss, gnorm, 0, std::nullopt, std::nullopt, oc.kind, seed};
        auto j = to_json(r);
        j["abort"] = reason;
        emit(j);
    };

    for (std::uint64_t t = 0; t < config.steps; ++t) {
        const auto batch = sampler.next();
        const LossGrad lg = loss_and_grad(task, batch);
        const double gnorm = lg.grad.norm();
        if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
            abort_run(t, lg.loss, gnorm, "non-finite loss or gradient");
            break;
        }
        const Vector d_t = fisher_direction(task, batch, fisher_rng, config.task.fisher_samples);

        const auto t0 = std::chrono::steady_clock::now();
        try {
            opt.step(task.params, lg.grad, d_t);
        } catch (const std::exception& e) {
            abort_run(t, lg.loss, gnorm, std::string("optimizer failure: ") + e.what());
            break;
        }
        const auto t1 = std::chrono::steady_clock::now();

        if (t % config.log_every == 0 || t + 1 == config.steps) {
            MetricRecord r;
            r.step = t;
            r.train_loss = lg.loss;
            r.grad_norm = gnorm;
            r.step_time_ns = config.record_timing
                                 ? std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()
                                 : 0;
            if (auto inv = opt.invariants()) {
                r.ortho_residual = inv->orthogonality;
                r.max_k_gamma = inv->max_k_gamma;
            }
            r.optimizer = oc.kind;
            r.seed = seed;
            out.records.push_back(r);
            emit(to_json(r));
        }
        if (!task.params.allFinite()) {
            abort_run(t, lg.loss, gnorm, "non-finite parameters after step");
            break;
        }
    }
    return out;
}

double update_flops(Eigen::Index dim, Eigen::Index tau) {
    const double d = static_cast<double>(dim);
    const double t = static_cast<double>(tau);
    return 2.0 * d * t * (t + 1.0) + 20.0 * d * t + 10.0 * (t + 1.0) * (t + 1.0) * (t + 1.0);
}

std::string run_file_name(const ExperimentConfig& config, std::size_t grid_index,
                          const GridPoint& point, std::uint64_t seed) {
    return config.name + "_" + point.label + "_g" + std::to_string(grid_index) + "_" +
           std::string(to_string(point.optimizer.kind)) + "_seed" + std::to_string(seed) + ".jsonl";
}

int run_experiment(const ExperimentConfig& config, unsigned jobs, std::ostream& log) {
    config.validate();
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);

    struct Job {
        std::size_t grid_index;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    for (std::size_t g = 0; g < config.grid.size(); ++g)
        for (auto s : config.seeds) work.push_back({g, s});

    std::vector<RunOutcome> outcomes(work.size());
    std::vector<std::string> errors(work.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++) {
            const auto& job = work[i];
            const auto& point = config.grid[job.grid_index];
            try {
                std::ofstream os(dir / run_file_name(config, job.grid_index, point, job.seed));
                outcomes[i] = run_training(config, point, job.seed, &os);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(work.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error(e);

    std::ofstream csv(dir / "summary.csv");
    csv << "run,label,optimizer,seed,learning_rate,gamma,tau,alpha,momentum_coef,steps,dim,"
           "min_train_loss,final_grad_norm,mean_step_time_ns,flops_per_update,status\n";
    int status = kExitOk;
    for (std::size_t i = 0; i < work.size(); ++i) {
        const auto& o = outcomes[i];
        const auto& oc = o.point.optimizer;
        const std::optional<double> flops =
            oc.kind == OptimizerKind::ginger ? std::optional<double>(update_flops(o.dim, oc.tau)) : std::nullopt;
        csv << run_file_name(config, work[i].grid_index, o.point, o.seed) << ',' << o.point.label << ','
            << to_string(oc.kind) << ',' << o.seed << ',' << format_double(oc.learning_rate) << ','
            << format_double(oc.gamma) << ',' << oc.tau << ',' << format_double(oc.alpha) << ','
            << format_double(oc.momentum_coef) << ',' << config.steps << ',' << o.dim << ','
            << format_double(o.min_train_loss()) << ',' << format_double(o.final_grad_norm()) << ','
            << format_double(o.mean_step_time_ns()) << ',' << format_double(flops) << ','
            << (o.aborted ? "aborted" : "ok") << '\n';
        log << o.point.label << " " << to_string(oc.kind) << " seed=" << o.seed
            << " min_loss=" << format_double(o.min_train_loss())
            << " final_grad_norm=" << format_double(o.final_grad_norm());
        if (o.aborted) {
            log << " ABORTED: " << o.abort_reason;
            status = kExitNumericalAbort;
        }
        log << '\n';
    }
    return status;
}

}  // namespace ginger
