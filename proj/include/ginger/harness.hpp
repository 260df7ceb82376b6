#pragma once

#include "ginger/optimizers.hpp"
#include "ginger/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ginger {

/// Process exit codes of the CLI.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitVerifyFailed = 2, kExitNumericalAbort = 3 };

struct TaskConfig {
    ModelSpec model;
    SyntheticConfig data;
    int fisher_samples = 1;
};

/// One point of the optimizer sweep; `label` names the config section it
/// came from.
struct GridPoint {
    std::string label;
    OptimizerConfig optimizer;
};

/// Experiment description. Text format (one canonical example ships in
/// configs/blobs.cfg):
///
///   file    := { line }
///   line    := blank | comment | section | entry
///   comment := '#' any*                      (also allowed after a value)
///   section := '[' name [ ' ' label ] ']'    name in {experiment, task, optimizer}
///   entry   := key '=' value { ',' value }
///
/// Every [optimizer <label>] section contributes the cartesian product of
/// its list-valued keys to the sweep grid. `seeds` in [experiment] may also
/// be a list.
struct ExperimentConfig {
    std::string name = "experiment";
    TaskConfig task;
    std::vector<GridPoint> grid;
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t steps = 1000;
    Eigen::Index batch_size = 32;
    std::uint64_t log_every = 1;
    std::string output_dir = "runs";
    bool record_timing = true;

    void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One logged training step.
struct MetricRecord {
    std::uint64_t step = 0;
    double train_loss = 0.0;
    double grad_norm = 0.0;
    std::int64_t step_time_ns = 0;
    std::optional<double> ortho_residual;  // ginger only
    std::optional<double> max_k_gamma;     // ginger only
    OptimizerKind optimizer = OptimizerKind::ginger;
    std::uint64_t seed = 0;
};

nlohmann::ordered_json to_json(const MetricRecord& r);

struct RunOutcome {
    GridPoint point;
    std::uint64_t seed = 0;
    std::vector<MetricRecord> records;
    bool aborted = false;
    std::string abort_reason;
    Eigen::Index dim = 0;

    std::optional<double> min_train_loss() const;
    std::optional<double> final_grad_norm() const;
    std::optional<double> min_grad_norm() const;
    std::optional<double> mean_step_time_ns() const;
    /// First logged step whose training loss is at or below `threshold`.
    std::optional<std::uint64_t> steps_to_loss(double threshold) const;
};

/// Trains one (grid point, seed) pair. When `jsonl` is given, every logged
/// record is written to it as one JSON object per line; an abort appends a
/// final diagnostic record carrying an "abort" key.
RunOutcome run_training(const ExperimentConfig& config, const GridPoint& point, std::uint64_t seed,
                        std::ostream* jsonl = nullptr);

/// Analytic floating-point operation count of one preconditioner update plus
/// one direction query:
///   2 d tau (tau + 1)  rotation of the extended basis
///   + 20 d tau         h, two Gram-Schmidt passes, direction query
///   + 10 (tau + 1)^3   small eigensolver (a few Jacobi sweeps)
double update_flops(Eigen::Index dim, Eigen::Index tau);

std::string run_file_name(const ExperimentConfig& config, std::size_t grid_index,
                          const GridPoint& point, std::uint64_t seed);

/// Runs the whole sweep (grid x seeds) with up to `jobs` concurrent runs and
/// writes one JSON Lines file per run plus summary.csv into `output_dir`.
/// Returns kExitOk, or kExitNumericalAbort if any run hit a non-finite value.
int run_experiment(const ExperimentConfig& config, unsigned jobs, std::ostream& log);

}  // namespace ginger
