#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fednorm/federation.hpp"

namespace fednorm {

enum class DatasetKind { Synthetic, Mnist, Cifar10 };
enum class PartitionKind { Uniform, LabelsSkew, CovariateShift };

const char* dataset_kind_name(DatasetKind k);
const char* partition_kind_name(PartitionKind k);

struct ExperimentSpec {
    std::string name = "experiment";
    DatasetKind dataset = DatasetKind::Synthetic;
    std::string data_dir;  // mnist/cifar10 root
    PartitionKind partition = PartitionKind::Uniform;
    std::size_t classes_per_client = 2;
    NormKind norm = NormKind::batch_norm();
    FedConfig fed;
    std::size_t repetitions = 3;
    std::size_t train_subset = 0;  // 0: use the whole split
    std::size_t test_subset = 0;
    bool augment = false;
    double momentum = 0.9;
    double epsilon = 1e-5;
    std::vector<std::size_t> blocks = {16, 32, 64};
    std::size_t classifier_width = 0;
    SyntheticSpec synthetic;
    std::size_t synthetic_test_per_class = 20;

    void validate() const;
    ModelConfig model_config() const;
    /// Swept-parameter echo, embedded in CSV rows for audit.
    std::string echo() const;
};

enum class SweepAxis { BatchSize, EpochsFixedRounds, EpochsFixedBudget, ClientsIid, ClientsSkew };

struct SweepSpec {
    SweepAxis axis = SweepAxis::BatchSize;
    std::vector<std::size_t> values;                         // single-value axes
    std::vector<std::pair<std::size_t, std::size_t>> er_pairs;  // EpochsFixedBudget: (E, R)
    std::vector<NormKind> norms;                             // one row per point per kind
    std::size_t per_client_samples = 1000;                   // ClientsIid weak scaling
    ExperimentSpec base;

    void validate() const;
    /// Concrete spec for one sweep point and one normalization kind.
    ExperimentSpec point(std::size_t index, const NormKind& norm) const;
    std::size_t point_count() const;
};

struct ParsedConfig {
    ExperimentSpec base;
    std::optional<SweepSpec> sweep;
};

/// Plain-text key=value configuration with bracketed [section] headers.
/// Unknown keys, type errors and constraint violations throw ConfigError
/// with the offending line number.
ParsedConfig parse_config(const std::string& text);
ParsedConfig parse_config_file(const std::string& path);

struct ExperimentSummary {
    ExperimentSpec spec;
    std::vector<double> best_accuracies;  // one per repetition
    double best_acc_mean = 0.0;
    double best_acc_sd = 0.0;
    double wall_seconds = 0.0;
};

/// Runs `repetitions` federations (seeds seed, seed+1, ...), writes per-round
/// curve CSVs, shard manifests and a summary row under `out_dir`.
ExperimentSummary run_experiment(const ExperimentSpec& spec, const std::string& out_dir);

/// One summary row per sweep point per norm kind; identical base seed across
/// points so the axis is the only varying factor. Writes sweep.csv.
std::vector<ExperimentSummary> run_sweep(const SweepSpec& sweep, const std::string& out_dir);

/// Shared dataset plumbing: load, subset, self-normalize (test reuses train
/// statistics).
std::pair<Dataset, Dataset> load_experiment_data(const ExperimentSpec& spec);

std::vector<ClientShard> make_shards(const ExperimentSpec& spec, const Dataset& train,
                                     std::uint64_t seed);

extern const char* kCurveCsvHeader;
extern const char* kSummaryCsvHeader;

std::string summary_csv_row(const ExperimentSummary& s);

}  // namespace fednorm
