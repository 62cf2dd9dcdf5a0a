import json
import math

import pytest

import cel


def blobs(num_classes=4, per_class=40, overlap=((0, 1),), seed=0):
    spec = cel.BlobSpec()
    spec.num_classes = num_classes
    spec.per_class_count = per_class
    spec.feature_dim = 2
    spec.overlap_pairs = list(overlap)
    spec.seed = seed
    return cel.generate_blobs(spec)


def test_dataset_roundtrip(tmp_path):
    ds = blobs()
    assert len(ds) == 160 and ds.num_classes == 4 and ds.feature_dim == 2
    path = tmp_path / "blobs.csv"
    cel.save_csv(ds, path)
    assert cel.load_csv(path) == ds
    parts = cel.partition_by_class(ds)
    assert sorted(i for p in parts for i in p) == list(range(len(ds)))
    train, test = cel.split_train_test(ds, 0.25, 1)
    assert len(train) + len(test) == len(ds)


def test_distance_score_example():
    batch = cel.EmbeddingBatch([[0.0], [2.0], [10.0], [12.0]], [0, 0, 1, 1], 2)
    scores = cel.score_distance(batch).scores
    assert scores[0] == pytest.approx(1 + 0.5 * (1 / 121 + 1 / 81), abs=1e-12)
    assert cel.class_centers(batch) == [[1.0], [11.0]]


def test_entropy_and_ordering():
    batch = cel.EmbeddingBatch(
        [[0.0], [1.0], [2.0]], [0, 1, 2], 3,
        probabilities=[[1, 0, 0], [1 / 3, 1 / 3, 1 / 3], [0.5, 0.5, 0]],
    )
    report = cel.score_entropy(batch)
    assert report.scores == pytest.approx([0.0, math.log(3), math.log(2)], abs=1e-12)
    assert cel.order_classes(report).order == [1, 2, 0]
    tied = cel.ConfusionReport([0.7, 0.9, 0.7])
    assert cel.order_classes(tied).order == [1, 0, 2]


def test_schedule_and_cost():
    schedule = cel.build_schedule(cel.natural_ordering(10), 5, 30, 5.0)
    assert schedule.stage_epochs == [6, 6, 6, 6, 30]
    assert cel.stage_class_counts(10, 3) == [4, 7, 10]
    cost = cel.predicted_cost(5, 5.0)
    assert cost.equal_epoch_cost == pytest.approx(3.0)
    assert cost.reduced_cost == pytest.approx(1.4)
    ds = cel.LabeledDataset([[float(i)] for i in range(20)], [i // 2 for i in range(20)], 10)
    assert cel.measured_cost(schedule, ds) == pytest.approx(1.4, abs=1e-12)
    assert cel.pool_at_stage(schedule, 1, ds) == [0, 1, 2, 3]
    json.loads(schedule.to_json())


def test_model_gradients():
    model = cel.DenseModel.glorot([2, 5, 3], seed=4)
    ds = blobs(num_classes=3, per_class=5)
    grad, loss = cel.gradients(model, ds)
    assert len(grad) == len(model.parameters)
    assert loss > 0
    assert cel.grad_check(model, ds) < 1e-4
    assert cel.loss([0.0] * 10, 3) == pytest.approx(math.log(10))


def test_train_stage_and_warm_start(tmp_path):
    ds = blobs()
    config = cel.TrainConfig()
    config.batch_size = 16
    config.initial_lr = 0.05
    config.epochs = 3
    init = cel.initial_checkpoint([2, 8, 4], 1)
    ckpt, metrics = cel.train_stage(init, list(range(len(ds))), ds, config)
    assert len(metrics) == 3 and ckpt.stage == 1 and ckpt.epoch == 3
    path = tmp_path / "c.json"
    cel.save_checkpoint(ckpt, path)
    assert cel.load_checkpoint(path) == ckpt
    assert cel.lr_at_epoch(config, 1) == pytest.approx(0.05)
    assert cel.lr_at_epoch(config, 2) == pytest.approx(0.005)


def test_divergence_is_reported():
    ds = blobs(num_classes=2, per_class=10)
    config = cel.TrainConfig()
    config.initial_lr = 1e200
    config.epochs = 2
    with pytest.raises(cel.DivergenceError) as info:
        cel.train_stage(cel.initial_checkpoint([2, 4, 2]), list(range(len(ds))), ds, config)
    assert info.value.kind == "divergence"
    assert info.value.epoch < 2


def test_errors_carry_kind():
    with pytest.raises(cel.CelError) as info:
        cel.LabeledDataset([[0.0], [1.0]], [0, 0], 1)
    assert info.value.kind == "invalid_argument"


def test_experiment_runs_and_compare(tmp_path):
    text = json.dumps({
        "data": {"source": "blobs", "blobs": {"num_classes": 4, "per_class_count": 40, "feature_dim": 2,
                                                "overlap_pairs": [[0, 1]], "seed": 2}},
        "scorer": {"hidden": [8], "batch_size": 16},
        "model": {"hidden": [8], "batch_size": 16},
        "stages": 2, "epochs": 4, "lambda": 2, "seeds": [0, 1],
    })
    config = cel.ExperimentConfig.from_json(text)
    config.output_dir = str(tmp_path / "cel")
    cel_report = cel.run_cel(config)
    assert (tmp_path / "cel" / "report.json").exists()
    # stage 1: half the classes for 2 epochs, stage 2: all classes for 4 epochs
    assert cel_report.mean_measured_cost == pytest.approx((0.5 * 2 + 4) / 4, abs=1e-12)
    config.output_dir = str(tmp_path / "normal")
    normal_report = cel.run_normal(config)
    comparison = cel.compare(normal_report, cel_report)
    assert len(comparison.per_class_delta) == 4
    assert cel.compare(cel_report, cel_report).overall_delta == 0.0
    again = cel.ExperimentReport.load(tmp_path / "cel" / "report.json")
    assert again.to_json() == cel_report.to_json()

    config.num_stages = 1
    config.output_dir = ""
    assert cel.run_cel(config).results_json() == cel.run_normal(config).results_json()
