import numpy as np
import pytest

import carenet


def test_axis_has_467_points():
    wn = carenet.biofingerprint_axis()
    assert wn.shape == (467,)
    assert wn[0] == pytest.approx(1800.0)
    assert wn[-1] == pytest.approx(900.0)
    assert np.all(np.diff(wn) < 0)


def test_savitzky_golay_keeps_quadratics():
    x = np.linspace(-1.0, 1.0, 101)
    y = 0.3 * x**2 - 2.0 * x + 0.5
    np.testing.assert_allclose(carenet.savitzky_golay(y, 11, 2), y, atol=1e-10)


def test_minmax_range_and_constant_error():
    out = carenet.minmax_normalize(np.array([2.0, 4.0, 3.0]))
    np.testing.assert_allclose(out, [0.0, 1.0, 0.5])
    with pytest.raises(carenet.DegenerateInput):
        carenet.minmax_normalize(np.ones(5))


def test_outliers_reject_spike():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 30))
    x[17] += 50.0
    kept = carenet.remove_outliers(x, n_pcs=5)
    assert 17 not in kept
    assert 0.8 < len(kept) / 200 < 0.96


def test_kmeans_two_blobs():
    x = np.vstack([np.zeros((10, 3)), np.ones((10, 3)) * 5.0])
    labels, wcss = carenet.kmeans(x, 2, seed=1)
    assert len(set(labels[:10])) == 1 and len(set(labels[10:])) == 1
    assert labels[0] != labels[-1]
    assert wcss == pytest.approx(0.0)


def test_parameter_counts():
    assert carenet.count_params("type") == 241057
    assert carenet.count_params("subtype") == 241444
    assert carenet.Model("subtype", seed=3).parameter_count() == 241444


def test_model_predict_and_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(3, 467)).astype(np.float32)
    m = carenet.Model("subtype", seed=5)
    p = m.predict(x)
    assert p.shape == (3, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-5)
    path = tmp_path / "m.crnm"
    m.save(path)
    again = carenet.Model.load(path)
    assert again.head == "subtype"
    np.testing.assert_array_equal(again.predict(x), p)
    cam = m.gradcam(x, [0, 1, 2])
    assert cam.shape == (3, 467)
    assert np.all(cam >= 0)


def test_corrupt_checkpoint_raises(tmp_path):
    path = tmp_path / "bad.crnm"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(carenet.FormatError):
        carenet.Model.load(path)


def test_evaluation_helpers():
    assert carenet.classify([0.5]) == (1, False)
    assert carenet.classify([0.25, 0.25, 0.25, 0.25]) == (0, True)
    cls, tie, votes = carenet.patient_vote([1, 0], [[0.42, 0.58], [0.6, 0.4]], 2)
    assert tie and cls == 0  # mean p: class 0 0.51, class 1 0.49
    m = carenet.compute_metrics([1, 1, 1, 0, 0, 0, 0, 0, 1, 1], [1, 1, 1, 1, 0, 0, 0, 0, 0, 0], 1)
    assert m["accuracy"] == pytest.approx(0.7)
    assert m["sensitivity"] == pytest.approx(0.75)
    assert m["specificity"] == pytest.approx(4 / 6)
    assert carenet.compute_metrics([1, 1], [1, 1], 1)["specificity"] is None


def test_panel_preprocess_split(tmp_path):
    panel = carenet.gen_panel(patients_per_subtype=[2, 2, 2, 2], rows=12, cols=12, seed=4)
    assert len(panel["cores"]) == 16
    assert sum(c["core_type"] == "CA" for c in panel["cores"]) == 8

    data = carenet.preprocess_panel(patients_per_subtype=[2, 2, 2, 2], rows=12, cols=12, seed=4)
    spectra = data["spectra"]
    assert spectra.shape[1] == 467
    assert spectra.min() >= 0.0 and spectra.max() <= 1.0
    path = tmp_path / "set.crns"
    carenet.write_spectraset(data, path)
    back = carenet.read_spectraset(path)
    np.testing.assert_array_equal(back["spectra"], spectra)

    plan = carenet.make_split(back, seed=9, n_folds=1)
    assert len(plan["test"]) == 4
    for fold in plan["folds"]:
        assert not set(fold["dev"]) & set(plan["test"])
        assert not set(fold["train"]) & set(fold["dev"])
