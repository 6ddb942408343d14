#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "fednorm/experiment.hpp"

using namespace fednorm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fednorm_exp_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Tiny synthetic spec that runs a full experiment in well under a second.
const char* kTinyConfig =
    "[experiment]\n"
    "name = tiny\n"
    "dataset = synthetic\n"
    "norm = group\n"
    "groups = 2\n"
    "blocks = 4\n"
    "repetitions = 2\n"
    "seed = 3\n"
    "synthetic_classes = 3\n"
    "synthetic_samples_per_class = 20\n"
    "synthetic_test_per_class = 8\n"
    "synthetic_height = 6\n"
    "synthetic_width = 6\n"
    "[federation]\n"
    "clients = 2\n"
    "rounds = 2\n"
    "epochs = 1\n"
    "batch_size = 16\n"
    "learning_rate = 0.003\n";

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
    ParsedConfig cfg = parse_config("");
    CHECK(cfg.base.fed.batch_size == 128);
    CHECK(cfg.base.fed.learning_rate == doctest::Approx(0.001));
    CHECK(cfg.base.fed.num_clients == 10);
    CHECK(cfg.base.fed.rounds == 30);
    CHECK(cfg.base.fed.epochs_per_round == 1);
    CHECK(cfg.base.dataset == DatasetKind::Synthetic);
    CHECK(cfg.base.partition == PartitionKind::Uniform);
    CHECK(cfg.base.norm.algo == NormAlgo::BatchNorm);
    CHECK(cfg.base.repetitions == 3);
    CHECK_FALSE(cfg.sweep.has_value());
}

TEST_CASE("config values land in the right fields") {
    ParsedConfig cfg = parse_config(kTinyConfig);
    CHECK(cfg.base.name == "tiny");
    CHECK(cfg.base.norm.algo == NormAlgo::GroupNorm);
    CHECK(cfg.base.norm.groups == 2);
    CHECK(cfg.base.blocks == std::vector<std::size_t>({4}));
    CHECK(cfg.base.repetitions == 2);
    CHECK(cfg.base.fed.seed == 3);
    CHECK(cfg.base.synthetic.seed == 3);
    CHECK(cfg.base.synthetic.classes == 3);
    CHECK(cfg.base.fed.num_clients == 2);
    CHECK(cfg.base.fed.rounds == 2);
    CHECK(cfg.base.fed.batch_size == 16);
    CHECK(cfg.base.fed.learning_rate == doctest::Approx(0.003));
}

TEST_CASE("config errors carry line numbers") {
    try {
        parse_config("[federation]\nepochs = 0\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_config("bogus_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nosuch]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nnorm = nope\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[federation]\nbatch_size = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\ndataset = mnist\n"), ValueError);  // missing data_dir
    CHECK_THROWS_AS(parse_config_file("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
    ParsedConfig cfg = parse_config("# a comment\n\n[federation]\n  rounds = 5  \n");
    CHECK(cfg.base.fed.rounds == 5);
}

TEST_CASE("fixed-budget sweep pairs must share the epoch budget") {
    const std::string head = std::string(kTinyConfig) + "[sweep]\naxis = epochs_budget\nnorms = group\n";
    ParsedConfig ok = parse_config(head + "pairs = 1:1000, 2:500, 100:10\n");
    REQUIRE(ok.sweep.has_value());
    CHECK(ok.sweep->axis == SweepAxis::EpochsFixedBudget);
    CHECK(ok.sweep->er_pairs.size() == 3);
    CHECK(ok.sweep->er_pairs[2] == std::pair<std::size_t, std::size_t>(100, 10));

    CHECK_THROWS_AS(parse_config(head + "pairs = 1:1000, 2:400\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(head + "pairs = 1:x\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(head + "pairs = 3\n"), ConfigError);
}

TEST_CASE("sweep norms inherit group and BRN knobs") {
    const std::string text = std::string(kTinyConfig) +
                             "[experiment]\nr_max = 2.5\nd_max = 1.5\n"
                             "[sweep]\naxis = batch_size\nvalues = 8, 16\n"
                             "norms = batch, batch_renorm, group\n";
    ParsedConfig cfg = parse_config(text);
    REQUIRE(cfg.sweep.has_value());
    CHECK(cfg.sweep->norms.size() == 3);
    for (const auto& k : cfg.sweep->norms) {
        CHECK(k.groups == 2);
        CHECK(k.r_max == doctest::Approx(2.5));
        CHECK(k.d_max == doctest::Approx(1.5));
    }
    CHECK(cfg.sweep->point_count() == 2);

    ExperimentSpec p = cfg.sweep->point(1, cfg.sweep->norms[2]);
    CHECK(p.fed.batch_size == 16);
    CHECK(p.norm.algo == NormAlgo::GroupNorm);
    CHECK(p.name == "tiny_B16_group");
}

TEST_CASE("clients_iid sweep points grow the train subset") {
    const std::string text = std::string(kTinyConfig) +
                             "[sweep]\naxis = clients_iid\nvalues = 2, 3\nnorms = layer\n"
                             "per_client_samples = 15\n";
    ParsedConfig cfg = parse_config(text);
    REQUIRE(cfg.sweep.has_value());
    ExperimentSpec p = cfg.sweep->point(1, cfg.sweep->norms[0]);
    CHECK(p.fed.num_clients == 3);
    CHECK(p.train_subset == 45);
    CHECK(p.partition == PartitionKind::Uniform);
}

TEST_CASE("run_experiment writes curves, manifests and a summary") {
    TempDir dir;
    ParsedConfig cfg = parse_config(kTinyConfig);
    ExperimentSummary s = run_experiment(cfg.base, dir.path.string());

    CHECK(s.best_accuracies.size() == 2);
    CHECK(s.best_acc_mean >= 0.0);
    CHECK(s.best_acc_mean <= 1.0);

    for (int rep = 0; rep < 2; ++rep) {
        const std::string curve = read_file(dir.path / ("tiny_curve_rep" + std::to_string(rep) + ".csv"));
        std::istringstream in(curve);
        std::string line;
        std::getline(in, line);
        CHECK(line == kCurveCsvHeader);
        std::size_t rows = 0;
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2 * 2);  // R rounds x K clients
        CHECK(fs::exists(dir.path / ("tiny_shards_rep" + std::to_string(rep) + ".txt")));
    }

    const std::string summary = read_file(dir.path / "tiny_summary.csv");
    CHECK(summary.find(kSummaryCsvHeader) == 0);
    CHECK(summary.find("synthetic,uniform,group,16,1,2,2,") != std::string::npos);
    CHECK(summary.find("dataset=synthetic") != std::string::npos);  // echo column
}

TEST_CASE("re-running an experiment reproduces the curve CSVs byte for byte") {
    TempDir dir;
    ParsedConfig cfg = parse_config(kTinyConfig);
    run_experiment(cfg.base, (dir.path / "a").string());
    run_experiment(cfg.base, (dir.path / "b").string());
    for (int rep = 0; rep < 2; ++rep) {
        const std::string name = "tiny_curve_rep" + std::to_string(rep) + ".csv";
        CHECK(read_file(dir.path / "a" / name) == read_file(dir.path / "b" / name));
        const std::string shards = "tiny_shards_rep" + std::to_string(rep) + ".txt";
        CHECK(read_file(dir.path / "a" / shards) == read_file(dir.path / "b" / shards));
    }
}

TEST_CASE("duplicated seeds give zero standard deviation") {
    TempDir dir;
    ParsedConfig cfg = parse_config(kTinyConfig);
    cfg.base.repetitions = 1;
    ExperimentSummary once = run_experiment(cfg.base, (dir.path / "x").string());
    CHECK(once.best_acc_sd == 0.0);
}

TEST_CASE("run_sweep writes one row per point per norm") {
    TempDir dir;
    const std::string text = std::string(kTinyConfig) +
                             "[sweep]\naxis = batch_size\nvalues = 8, 16\nnorms = group, layer\n";
    ParsedConfig cfg = parse_config(text);
    REQUIRE(cfg.sweep.has_value());
    SweepSpec sweep = *cfg.sweep;
    sweep.base.repetitions = 1;

    auto rows = run_sweep(sweep, dir.path.string());
    CHECK(rows.size() == 4);

    const std::string csv = read_file(dir.path / "sweep.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == kSummaryCsvHeader);
    std::size_t data_rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++data_rows;
    CHECK(data_rows == 4);
    CHECK(fs::exists(dir.path / "tiny_B8_group"));
    CHECK(fs::exists(dir.path / "tiny_B16_layer"));
}

TEST_CASE("failed experiments leave no partial output") {
    TempDir dir;
    ParsedConfig cfg = parse_config(kTinyConfig);
    cfg.base.partition = PartitionKind::LabelsSkew;
    cfg.base.classes_per_client = 5;  // > 3 classes: partitioner throws
    CHECK_THROWS_AS(run_experiment(cfg.base, dir.path.string()), ValueError);
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir.path)) {
        (void)entry;
        ++files;
    }
    CHECK(files == 0);
}

TEST_CASE("load_experiment_data standardizes with train statistics") {
    ParsedConfig cfg = parse_config(kTinyConfig);
    auto [train, test] = load_experiment_data(cfg.base);
    CHECK(train.size() == 60);
    CHECK(test.size() == 24);
    CHECK(train.channel_mean == test.channel_mean);
    CHECK(train.channel_std == test.channel_std);

    double mean = 0.0;
    for (double v : train.images.data) mean += v;
    mean /= static_cast<double>(train.images.size());
    CHECK(std::abs(mean) < 1e-10);
}

TEST_CASE("subset limits are validated") {
    ParsedConfig cfg = parse_config(kTinyConfig);
    cfg.base.train_subset = 100000;
    CHECK_THROWS_AS(load_experiment_data(cfg.base), ValueError);
}
