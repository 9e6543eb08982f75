import math

import numpy as np
import pytest

import smile_mil


def test_attention_matches_hand_values():
    out = smile_mil.scale_adaptive_attention([1.0, 2.0, 4.0], threshold=0.5, factor=0.5)
    assert out["mask"] == [0, 0, 1]
    assert out["weights"] == pytest.approx([0.15536, 0.42232, 0.42232], abs=1e-4)
    assert math.isclose(sum(out["weights"]), 1.0, abs_tol=1e-12)


def test_factor_one_is_plain_softmax():
    a = np.array([0.3, -1.2, 2.5, 0.0])
    expected = np.exp(a - a.max())
    expected /= expected.sum()
    out = smile_mil.scale_adaptive_attention(a.tolist(), threshold=0.6, factor=1.0)
    np.testing.assert_allclose(out["weights"], expected, atol=1e-12)


def test_auc_and_metrics():
    assert smile_mil.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    report = smile_mil.evaluate_predictions([0.9, 0.2, 0.6, 0.4], [1, 0, 0, 1])
    assert report["accuracy"] == pytest.approx(0.5)
    assert report["n_samples"] == 4


def test_bad_scale_is_rejected():
    with pytest.raises(ValueError):
        smile_mil.scale_adaptive_attention([1.0, 2.0], threshold=0.5, factor=0.0)


def test_synthetic_dataset_round_trip(tmp_path):
    data = smile_mil.Dataset.synthetic(n_bags=20, feature_dim=8, min_size=3, max_size=6, seed=1)
    assert len(data) == 20
    assert data.feature_dim == 8
    assert data.provenance == "synthetic"
    bag = data[0]
    assert bag["features"].shape[1] == 8
    assert (bag["label"] == 1) == (sum(bag["instance_labels"]) >= 1)

    path = tmp_path / "tiny.milb"
    data.save(path)
    back = smile_mil.Dataset.load(path)
    assert len(back) == 20
    np.testing.assert_array_equal(back[3]["features"], data[3]["features"])
    with pytest.raises(IndexError):
        data[20]


def test_run_cv_and_cli_checkpoint(tmp_path):
    data = smile_mil.Dataset.synthetic(n_bags=30, feature_dim=8, min_size=4, max_size=8, seed=2)
    result = smile_mil.run_cv(data, epochs=2, folds=3, hidden_dim=8, attn_dim=4, lr=1e-3)
    assert len(result["folds"]) == 3
    assert 0.0 <= result["mean"]["auc"] <= 1.0

    path = tmp_path / "tiny.milb"
    data.save(path)
    code, out, err = smile_mil.run_cli(
        ["train", "--data", str(path), "--out", str(tmp_path / "runs"), "--epochs", "1", "--folds", "2",
         "--hidden-dim", "8", "--attn-dim", "4"])
    assert code == 0, err
    run_dir = out.splitlines()[0].split(" ", 2)[2]
    pred = smile_mil.predict_checkpoint(f"{run_dir}/fold_0.milc", data[0]["features"])
    assert 0.0 < pred["probability"] < 1.0
    assert sum(pred["weights"]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        smile_mil.predict_checkpoint(f"{run_dir}/fold_0.milc", np.zeros((3, 5)))


def test_cli_usage_error():
    code, _, _ = smile_mil.run_cli(["train", "--epochs", "0"])
    assert code == 2
