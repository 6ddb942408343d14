// Command-line driver: single experiments and sweeps from plain-text configs.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "fednorm/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::string data_root;
    long long seed = -1;
    std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "experiment config file")->required();
    cmd->add_option("-o,--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--threads", opts.threads, "client parallelism per round");
    cmd->add_option("--data-root", opts.data_root, "override the dataset directory");
}

fednorm::ParsedConfig load(const CommonOpts& opts) {
    fednorm::ParsedConfig cfg = fednorm::parse_config_file(opts.config_path);
    auto apply = [&](fednorm::ExperimentSpec& spec) {
        if (opts.seed >= 0) {
            spec.fed.seed = static_cast<std::uint64_t>(opts.seed);
            spec.synthetic.seed = spec.fed.seed;
        }
        if (!opts.data_root.empty()) spec.data_dir = opts.data_root;
        spec.fed.parallelism = opts.threads;
    };
    apply(cfg.base);
    if (cfg.sweep) apply(cfg.sweep->base);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fednorm: federated averaging with interchangeable normalization layers"};
    app.require_subcommand(1);

    CommonOpts run_opts, sweep_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "run a single experiment");
    add_common(run_cmd, run_opts);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a parameter sweep");
    add_common(sweep_cmd, sweep_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            fednorm::ParsedConfig cfg = load(run_opts);
            const auto summary = fednorm::run_experiment(cfg.base, run_opts.out_dir);
            std::printf("%s\n%s\n", fednorm::kSummaryCsvHeader, fednorm::summary_csv_row(summary).c_str());
        } else {
            fednorm::ParsedConfig cfg = load(sweep_opts);
            if (!cfg.sweep) {
                std::fprintf(stderr, "error: config has no [sweep] section\n");
                return kExitConfig;
            }
            const auto rows = fednorm::run_sweep(*cfg.sweep, sweep_opts.out_dir);
            std::printf("%s\n", fednorm::kSummaryCsvHeader);
            for (const auto& row : rows) std::printf("%s\n", fednorm::summary_csv_row(row).c_str());
        }
    } catch (const fednorm::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fednorm::ValueError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fednorm::FormatError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const fednorm::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
