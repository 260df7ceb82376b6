// Command-line front end: `ginger run`, `ginger verify`, `ginger bench`.

#include "ginger/bench.hpp"
#include "ginger/harness.hpp"
#include "ginger/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<Eigen::Index> parse_sizes(const std::string& text) {
    std::vector<Eigen::Index> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        std::size_t pos = 0;
        const double v = std::stod(item, &pos);
        if (pos != item.size() || v < 1 || v != static_cast<double>(static_cast<long long>(v))) {
            throw ginger::ParameterError("not a positive integer: '" + item + "'");
        }
        out.push_back(static_cast<Eigen::Index>(v));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank GGN preconditioner: experiments, verification and benchmarks"};
    app.require_subcommand(1);

    std::string config_path;
    unsigned jobs = 1;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool no_timing = false;
    auto* run = app.add_subcommand("run", "Train every (optimizer, seed) pair of a config file");
    run->add_option("config", config_path, "Experiment config file")->required();
    auto* run_seed = run->add_option("--seed", seed, "Run a single seed instead of the config's list");
    run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (overrides GINGER_OUT and the config)");
    run->add_flag("--no-timing", no_timing, "Write step_time_ns = 0 for byte-reproducible metrics");

    std::string filter;
    bool list = false;
    std::uint64_t verify_seed = 20240917;
    auto* verify = app.add_subcommand("verify", "Run the oracle-equivalence and invariant checks");
    verify->add_option("--filter", filter, "Only checks whose name contains this string");
    verify->add_option("--seed", verify_seed, "Random seed for the checks");
    verify->add_flag("--list", list, "List check names and exit");

    std::string dims_text = "1e3,1e4,1e5";
    std::string taus_text;
    Eigen::Index tau = 8;
    int reps = 20;
    std::uint64_t bench_seed = 7;
    auto* bench = app.add_subcommand("bench", "Median update+query time versus dimension");
    bench->add_option("--dims", dims_text, "Comma-separated dimensions (1e4 notation accepted)");
    bench->add_option("--tau", tau, "Rank for the dimension sweep");
    bench->add_option("--taus", taus_text, "Optional comma-separated ranks swept at the first dimension");
    bench->add_option("--reps", reps, "Timed repetitions per point")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bench_seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return ginger::kExitUsage;
    }

    try {
        if (*run) {
            ginger::ExperimentConfig config = ginger::load_config(config_path);
            if (const char* env = std::getenv("GINGER_OUT"); env != nullptr && *env != '\0') {
                config.output_dir = env;
            }
            if (!out_dir.empty()) config.output_dir = out_dir;
            if (*run_seed) config.seeds = {seed};
            if (no_timing) config.record_timing = false;
            return ginger::run_experiment(config, jobs, std::cout);
        }
        if (*verify) {
            if (list) {
                for (const auto& n : ginger::verify_check_names()) std::cout << n << '\n';
                return ginger::kExitOk;
            }
            const auto results = ginger::verify_suite(filter, verify_seed);
            if (results.empty()) {
                std::cerr << "no check matches '" << filter << "'\n";
                return ginger::kExitUsage;
            }
            ginger::print_report(std::cout, results);
            for (const auto& r : results)
                if (!r.passed) return ginger::kExitVerifyFailed;
            return ginger::kExitOk;
        }
        if (*bench) {
            const auto dims = parse_sizes(dims_text);
            ginger::print_bench_table(std::cout, ginger::bench_scaling(dims, tau, reps, bench_seed));
            if (!taus_text.empty()) {
                const auto taus = parse_sizes(taus_text);
                ginger::print_bench_table(std::cout,
                                          ginger::bench_rank_scaling(dims.front(), taus, reps, bench_seed));
            }
            return ginger::kExitOk;
        }
    } catch (const ginger::ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ginger::kExitUsage;
    } catch (const ginger::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return ginger::kExitNumericalAbort;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ginger::kExitUsage;
    }
    return ginger::kExitUsage;
}
