#include "fednorm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fednorm {

namespace fs = std::filesystem;

const char* kCurveCsvHeader = "round,client_id,loss,test_acc_aggregated";
const char* kSummaryCsvHeader = "dataset,partition,norm,B,E,R,K,best_acc_mean,best_acc_sd,wall_s,echo";

const char* dataset_kind_name(DatasetKind k) {
    switch (k) {
        case DatasetKind::Synthetic: return "synthetic";
        case DatasetKind::Mnist: return "mnist";
        case DatasetKind::Cifar10: return "cifar10";
    }
    return "?";
}

const char* partition_kind_name(PartitionKind k) {
    switch (k) {
        case PartitionKind::Uniform: return "uniform";
        case PartitionKind::LabelsSkew: return "labels_skew";
        case PartitionKind::CovariateShift: return "covariate_shift";
    }
    return "?";
}

void ExperimentSpec::validate() const {
    fed.validate();
    if (repetitions < 1) throw ValueError("experiment: repetitions must be >= 1");
    if (blocks.empty()) throw ValueError("experiment: at least one conv block");
    if (dataset != DatasetKind::Synthetic && data_dir.empty())
        throw ValueError("experiment: data_dir required for on-disk datasets");
}

ModelConfig ExperimentSpec::model_config() const {
    ModelConfig mc;
    mc.blocks.clear();
    for (std::size_t f : blocks) mc.blocks.push_back({f, 3, 1});
    mc.max_pools = std::min<std::size_t>(2, mc.blocks.size());
    mc.norm = norm;
    mc.classifier_width = classifier_width;
    mc.momentum = momentum;
    mc.epsilon = epsilon;
    mc.seed = fed.seed;
    return mc;
}

std::string ExperimentSpec::echo() const {
    std::ostringstream s;
    s << "dataset=" << dataset_kind_name(dataset) << ";partition=" << partition_kind_name(partition)
      << ";norm=" << norm_algo_name(norm.algo) << ";B=" << fed.batch_size
      << ";E=" << fed.epochs_per_round << ";R=" << fed.rounds << ";K=" << fed.num_clients
      << ";seed=" << fed.seed << ";reps=" << repetitions << ";train_subset=" << train_subset;
    return s.str();
}

void SweepSpec::validate() const {
    base.validate();
    if (norms.empty()) throw ValueError("sweep: empty norm list");
    if (axis == SweepAxis::EpochsFixedBudget) {
        if (er_pairs.empty()) throw ValueError("sweep: fixed-budget axis needs (E,R) pairs");
        const std::size_t budget = er_pairs[0].first * er_pairs[0].second;
        for (const auto& [e, r] : er_pairs)
            if (e * r != budget) throw ValueError("sweep: fixed-budget pairs must share E*R");
    } else if (values.empty()) {
        throw ValueError("sweep: empty value list");
    }
}

std::size_t SweepSpec::point_count() const {
    return axis == SweepAxis::EpochsFixedBudget ? er_pairs.size() : values.size();
}

ExperimentSpec SweepSpec::point(std::size_t index, const NormKind& kind) const {
    ExperimentSpec spec = base;
    spec.norm = kind;
    std::ostringstream name;
    name << base.name;
    switch (axis) {
        case SweepAxis::BatchSize:
            spec.fed.batch_size = values[index];
            name << "_B" << values[index];
            break;
        case SweepAxis::EpochsFixedRounds:
            spec.fed.epochs_per_round = values[index];
            name << "_E" << values[index];
            break;
        case SweepAxis::EpochsFixedBudget:
            spec.fed.epochs_per_round = er_pairs[index].first;
            spec.fed.rounds = er_pairs[index].second;
            name << "_E" << er_pairs[index].first << "R" << er_pairs[index].second;
            break;
        case SweepAxis::ClientsSkew:
            spec.fed.num_clients = values[index];
            spec.partition = PartitionKind::LabelsSkew;
            name << "_K" << values[index];
            break;
        case SweepAxis::ClientsIid:
            // Weak scaling: fixed per-client shard, total data grows with K.
            spec.fed.num_clients = values[index];
            spec.partition = PartitionKind::Uniform;
            spec.train_subset = values[index] * per_client_samples;
            name << "_K" << values[index];
            break;
    }
    name << "_" << norm_algo_name(kind.algo);
    spec.name = name.str();
    return spec;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) out.push_back(trim(part));
    return out;
}

std::size_t to_size(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("expected non-negative integer, got '" + v + "'", line);
    }
}

double to_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("expected number, got '" + v + "'", line);
    }
}

bool to_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("expected boolean, got '" + v + "'", line);
}

NormAlgo to_norm_algo(const std::string& v, int line) {
    if (v == "batch") return NormAlgo::BatchNorm;
    if (v == "group") return NormAlgo::GroupNorm;
    if (v == "instance") return NormAlgo::InstanceNorm;
    if (v == "layer") return NormAlgo::LayerNorm;
    if (v == "batch_renorm") return NormAlgo::BatchRenorm;
    throw ConfigError("unknown norm kind '" + v + "'", line);
}

}  // namespace

ParsedConfig parse_config(const std::string& text) {
    ParsedConfig cfg;
    ExperimentSpec& spec = cfg.base;
    SweepSpec sweep;
    bool has_sweep = false;
    int budget_pairs_line = 0;

    std::string section = "experiment";
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
            section = trim(line.substr(1, line.size() - 2));
            if (section != "experiment" && section != "federation" && section != "sweep")
                throw ConfigError("unknown section '" + section + "'", line_no);
            if (section == "sweep") has_sweep = true;
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (section == "experiment") {
            if (key == "name") spec.name = value;
            else if (key == "dataset") {
                if (value == "synthetic") spec.dataset = DatasetKind::Synthetic;
                else if (value == "mnist") spec.dataset = DatasetKind::Mnist;
                else if (value == "cifar10") spec.dataset = DatasetKind::Cifar10;
                else throw ConfigError("unknown dataset '" + value + "'", line_no);
            }
            else if (key == "data_dir") spec.data_dir = value;
            else if (key == "partition") {
                if (value == "uniform") spec.partition = PartitionKind::Uniform;
                else if (value == "labels_skew") spec.partition = PartitionKind::LabelsSkew;
                else if (value == "covariate_shift") spec.partition = PartitionKind::CovariateShift;
                else throw ConfigError("unknown partition '" + value + "'", line_no);
            }
            else if (key == "classes_per_client") {
                spec.classes_per_client = to_size(value, line_no);
                if (spec.classes_per_client == 0) throw ConfigError("classes_per_client must be >= 1", line_no);
            }
            else if (key == "norm") spec.norm.algo = to_norm_algo(value, line_no);
            else if (key == "groups") spec.norm.groups = to_size(value, line_no);
            else if (key == "r_max") spec.norm.r_max = to_double(value, line_no);
            else if (key == "d_max") spec.norm.d_max = to_double(value, line_no);
            else if (key == "repetitions") {
                spec.repetitions = to_size(value, line_no);
                if (spec.repetitions == 0) throw ConfigError("repetitions must be >= 1", line_no);
            }
            else if (key == "seed") { spec.fed.seed = to_size(value, line_no); spec.synthetic.seed = spec.fed.seed; }
            else if (key == "train_subset") spec.train_subset = to_size(value, line_no);
            else if (key == "test_subset") spec.test_subset = to_size(value, line_no);
            else if (key == "augment") spec.augment = to_bool(value, line_no);
            else if (key == "momentum") spec.momentum = to_double(value, line_no);
            else if (key == "epsilon") spec.epsilon = to_double(value, line_no);
            else if (key == "classifier_width") spec.classifier_width = to_size(value, line_no);
            else if (key == "blocks") {
                spec.blocks.clear();
                for (const auto& part : split(value, ',')) spec.blocks.push_back(to_size(part, line_no));
                if (spec.blocks.empty()) throw ConfigError("blocks must be non-empty", line_no);
            }
            else if (key == "synthetic_classes") spec.synthetic.classes = to_size(value, line_no);
            else if (key == "synthetic_samples_per_class") spec.synthetic.samples_per_class = to_size(value, line_no);
            else if (key == "synthetic_test_per_class") spec.synthetic_test_per_class = to_size(value, line_no);
            else if (key == "synthetic_channels") spec.synthetic.channels = to_size(value, line_no);
            else if (key == "synthetic_height") spec.synthetic.height = to_size(value, line_no);
            else if (key == "synthetic_width") spec.synthetic.width = to_size(value, line_no);
            else if (key == "synthetic_separation") spec.synthetic.separation = to_double(value, line_no);
            else if (key == "synthetic_noise") spec.synthetic.noise = to_double(value, line_no);
            else throw ConfigError("unknown key '" + key + "' in [experiment]", line_no);
        } else if (section == "federation") {
            if (key == "clients") {
                spec.fed.num_clients = to_size(value, line_no);
                if (spec.fed.num_clients == 0) throw ConfigError("clients must be >= 1", line_no);
            }
            else if (key == "rounds") {
                spec.fed.rounds = to_size(value, line_no);
                if (spec.fed.rounds == 0) throw ConfigError("rounds must be >= 1", line_no);
            }
            else if (key == "epochs_per_round" || key == "epochs") {
                spec.fed.epochs_per_round = to_size(value, line_no);
                if (spec.fed.epochs_per_round == 0) throw ConfigError("epochs must be >= 1", line_no);
            }
            else if (key == "batch_size") {
                spec.fed.batch_size = to_size(value, line_no);
                if (spec.fed.batch_size == 0) throw ConfigError("batch_size must be >= 1", line_no);
            }
            else if (key == "learning_rate") {
                spec.fed.learning_rate = to_double(value, line_no);
                if (spec.fed.learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0", line_no);
            }
            else if (key == "weighting") {
                if (value == "plain") spec.fed.weighting = Weighting::Plain;
                else if (value == "sample") spec.fed.weighting = Weighting::SampleWeighted;
                else throw ConfigError("unknown weighting '" + value + "'", line_no);
            }
            else if (key == "parallelism") spec.fed.parallelism = std::max<std::size_t>(1, to_size(value, line_no));
            else throw ConfigError("unknown key '" + key + "' in [federation]", line_no);
        } else {  // sweep
            if (key == "axis") {
                if (value == "batch_size") sweep.axis = SweepAxis::BatchSize;
                else if (value == "epochs") sweep.axis = SweepAxis::EpochsFixedRounds;
                else if (value == "epochs_budget") sweep.axis = SweepAxis::EpochsFixedBudget;
                else if (value == "clients_iid") sweep.axis = SweepAxis::ClientsIid;
                else if (value == "clients_skew") sweep.axis = SweepAxis::ClientsSkew;
                else throw ConfigError("unknown sweep axis '" + value + "'", line_no);
            }
            else if (key == "values") {
                sweep.values.clear();
                for (const auto& part : split(value, ',')) sweep.values.push_back(to_size(part, line_no));
            }
            else if (key == "pairs") {
                sweep.er_pairs.clear();
                budget_pairs_line = line_no;
                for (const auto& part : split(value, ',')) {
                    const auto er = split(part, ':');
                    if (er.size() != 2) throw ConfigError("expected E:R pair, got '" + part + "'", line_no);
                    sweep.er_pairs.emplace_back(to_size(er[0], line_no), to_size(er[1], line_no));
                }
            }
            else if (key == "norms") {
                sweep.norms.clear();
                for (const auto& part : split(value, ',')) {
                    NormKind k = spec.norm;
                    k.algo = to_norm_algo(part, line_no);
                    sweep.norms.push_back(k);
                }
            }
            else if (key == "per_client_samples") sweep.per_client_samples = to_size(value, line_no);
            else throw ConfigError("unknown key '" + key + "' in [sweep]", line_no);
        }
    }

    spec.validate();
    if (has_sweep) {
        sweep.base = spec;
        // Norm kinds inherit the experiment's group/BRN knobs.
        for (auto& k : sweep.norms) {
            k.groups = spec.norm.groups;
            k.r_max = spec.norm.r_max;
            k.d_max = spec.norm.d_max;
        }
        if (sweep.axis == SweepAxis::EpochsFixedBudget && !sweep.er_pairs.empty()) {
            const std::size_t budget = sweep.er_pairs[0].first * sweep.er_pairs[0].second;
            for (const auto& [e, r] : sweep.er_pairs)
                if (e * r != budget)
                    throw ConfigError("fixed-budget pairs must share E*R", budget_pairs_line);
        }
        sweep.validate();
        cfg.sweep = std::move(sweep);
    }
    return cfg;
}

ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

std::pair<Dataset, Dataset> load_experiment_data(const ExperimentSpec& spec) {
    Dataset train, test;
    switch (spec.dataset) {
        case DatasetKind::Synthetic:
            std::tie(train, test) = synthetic_train_test(spec.synthetic, spec.synthetic_test_per_class);
            break;
        case DatasetKind::Mnist:
            std::tie(train, test) = load_mnist(spec.data_dir);
            break;
        case DatasetKind::Cifar10:
            std::tie(train, test) = load_cifar10(spec.data_dir);
            break;
    }
    if (spec.train_subset > 0) {
        if (spec.train_subset > train.size())
            throw ValueError("experiment: train_subset exceeds dataset size");
        train = train.take(spec.train_subset);
    }
    if (spec.test_subset > 0) {
        if (spec.test_subset > test.size()) throw ValueError("experiment: test_subset exceeds dataset size");
        test = test.take(spec.test_subset);
    }
    train = normalize_dataset(train);
    test = normalize_dataset(test, train.channel_mean, train.channel_std);
    return {std::move(train), std::move(test)};
}

std::vector<ClientShard> make_shards(const ExperimentSpec& spec, const Dataset& train,
                                     std::uint64_t seed) {
    RngStream rng(seed, 0x5AD);
    switch (spec.partition) {
        case PartitionKind::Uniform: return partition_uniform(train.labels, spec.fed.num_clients, rng);
        case PartitionKind::LabelsSkew:
            return partition_labels_skew(train.labels, spec.fed.num_clients, spec.classes_per_client, rng);
        case PartitionKind::CovariateShift:
            return partition_covariate_shift(train.images, train.labels, spec.fed.num_clients, rng);
    }
    throw ValueError("unreachable partition kind");
}

namespace {

void check_finite(const FederationResult& result) {
    for (const auto& report : result.reports) {
        if (!std::isfinite(report.test_accuracy)) throw NumericError("non-finite test accuracy");
        for (double loss : report.client_losses)
            if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
    }
}

std::string fmt(double v, const char* spec_str = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec_str, v);
    return buf;
}

}  // namespace

std::string summary_csv_row(const ExperimentSummary& s) {
    std::ostringstream row;
    row << dataset_kind_name(s.spec.dataset) << "," << partition_kind_name(s.spec.partition) << ","
        << norm_algo_name(s.spec.norm.algo) << "," << s.spec.fed.batch_size << ","
        << s.spec.fed.epochs_per_round << "," << s.spec.fed.rounds << "," << s.spec.fed.num_clients
        << "," << fmt(s.best_acc_mean) << "," << fmt(s.best_acc_sd) << "," << fmt(s.wall_seconds, "%.3f")
        << "," << s.spec.echo();
    return row.str();
}

ExperimentSummary run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
    spec.validate();
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    auto [train, test] = load_experiment_data(spec);

    ExperimentSummary summary;
    summary.spec = spec;

    std::vector<fs::path> written;
    try {
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
            const std::uint64_t seed = spec.fed.seed + rep;
            auto shards = make_shards(spec, train, seed);

            const fs::path manifest = fs::path(out_dir) / (spec.name + "_shards_rep" + std::to_string(rep) + ".txt");
            write_shard_manifest(shards, manifest.string());
            written.push_back(manifest);

            FedConfig fed = spec.fed;
            fed.seed = seed;
            FederationResult result =
                run_federation(fed, spec.model_config(), train, shards, test, spec.augment);
            check_finite(result);

            const fs::path curve = fs::path(out_dir) / (spec.name + "_curve_rep" + std::to_string(rep) + ".csv");
            std::ofstream out(curve);
            if (!out) throw FormatError("cannot open curve CSV: " + curve.string());
            written.push_back(curve);
            out << kCurveCsvHeader << "\n";
            for (const auto& report : result.reports)
                for (std::size_t k = 0; k < report.client_losses.size(); ++k)
                    out << report.round << "," << k << "," << fmt(report.client_losses[k]) << ","
                        << fmt(report.test_accuracy) << "\n";

            summary.best_accuracies.push_back(result.best_accuracy);
        }
    } catch (...) {
        for (const auto& p : written) {
            std::error_code ec;
            fs::remove(p, ec);  // partial outputs are removed on failure
        }
        throw;
    }

    double mean = 0.0;
    for (double a : summary.best_accuracies) mean += a;
    mean /= static_cast<double>(summary.best_accuracies.size());
    double var = 0.0;
    for (double a : summary.best_accuracies) var += (a - mean) * (a - mean);
    var /= static_cast<double>(summary.best_accuracies.size());
    summary.best_acc_mean = mean;
    summary.best_acc_sd = std::sqrt(var);
    summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ofstream out(fs::path(out_dir) / (spec.name + "_summary.csv"));
    out << kSummaryCsvHeader << "\n" << summary_csv_row(summary) << "\n";
    return summary;
}

std::vector<ExperimentSummary> run_sweep(const SweepSpec& sweep, const std::string& out_dir) {
    sweep.validate();
    fs::create_directories(out_dir);

    std::vector<ExperimentSummary> rows;
    for (std::size_t i = 0; i < sweep.point_count(); ++i)
        for (const auto& kind : sweep.norms) {
            const ExperimentSpec spec = sweep.point(i, kind);
            rows.push_back(run_experiment(spec, (fs::path(out_dir) / spec.name).string()));
        }

    std::ofstream out(fs::path(out_dir) / "sweep.csv");
    if (!out) throw FormatError("cannot open sweep CSV");
    out << kSummaryCsvHeader << "\n";
    for (const auto& row : rows) out << summary_csv_row(row) << "\n";
    return rows;
}

}  // namespace fednorm
