"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import fednorm as fn


@pytest.fixture(scope="module")
def synthetic():
    spec = fn.SyntheticSpec()
    spec.classes = 3
    spec.samples_per_class = 30
    spec.height = 6
    spec.width = 6
    spec.noise = 0.5
    spec.seed = 17
    train, test = fn.synthetic_train_test(spec, 10)
    train = fn.normalize_dataset(train)
    test = fn.normalize_dataset(test, train.channel_mean, train.channel_std)
    return train, test


def test_dataset_shapes(synthetic):
    train, test = synthetic
    assert len(train) == 90
    assert len(test) == 30
    assert train.images.shape == (90, 1, 6, 6)
    assert train.num_classes() == 3
    assert abs(float(train.images.mean())) < 1e-10


def test_partitions(synthetic):
    train, _ = synthetic
    rng = fn.RngStream(1, 0)
    shards = fn.partition_uniform(train.labels, 3, rng)
    assert len(shards) == 3
    assert sorted(i for s in shards for i in s.indices) == list(range(90))

    rng = fn.RngStream(2, 0)
    skew = fn.partition_labels_skew(train.labels, 3, 1, rng)
    for shard in skew:
        assert sum(1 for c in shard.label_histogram if c > 0) == 1

    rng = fn.RngStream(3, 0)
    cov = fn.partition_covariate_shift(train.images, train.labels, 3, rng)
    assert sorted(i for s in cov for i in s.indices) == list(range(90))


def test_run_federation(synthetic):
    train, test = synthetic
    rng = fn.RngStream(6, 0)
    shards = fn.partition_uniform(train.labels, 2, rng)

    model = fn.ModelConfig()
    model.in_channels = 1
    model.height = 6
    model.width = 6
    block = fn.ConvBlockConfig()
    block.filters = 4
    model.blocks = [block]
    model.max_pools = 0
    model.norm = fn.NormKind.group_norm(2)
    model.num_classes = 3
    model.seed = 5

    fed = fn.FedConfig()
    fed.num_clients = 2
    fed.rounds = 2
    fed.batch_size = 16
    result = fn.run_federation(fed, model, train, shards, test)
    assert len(result.reports) == 2
    assert 0.0 <= result.best_accuracy <= 1.0
    assert all(math.isfinite(l) for r in result.reports for l in r.client_losses)

    repeat = fn.run_federation(fed, model, train, shards, test)
    assert [r.test_accuracy for r in repeat.reports] == [
        r.test_accuracy for r in result.reports
    ]


def test_run_experiment(tmp_path):
    cfg = fn.parse_config(
        "[experiment]\n"
        "name = smoke\n"
        "dataset = synthetic\n"
        "norm = layer\n"
        "blocks = 4\n"
        "repetitions = 1\n"
        "synthetic_classes = 3\n"
        "synthetic_samples_per_class = 10\n"
        "synthetic_height = 6\n"
        "synthetic_width = 6\n"
        "[federation]\n"
        "clients = 2\n"
        "rounds = 1\n"
        "batch_size = 8\n"
    )
    summary = fn.run_experiment(cfg.base, str(tmp_path))
    assert len(summary.best_accuracies) == 1
    assert (tmp_path / "smoke_curve_rep0.csv").exists()
    assert (tmp_path / "smoke_summary.csv").exists()


def test_config_errors():
    with pytest.raises(ValueError):
        fn.parse_config("[federation]\nepochs = 0\n")
    with pytest.raises(ValueError):
        fn.parse_config("bogus = 1\n")


def test_load_mnist_rejects_missing_dir(tmp_path):
    with pytest.raises(RuntimeError):
        fn.load_mnist(str(tmp_path))
