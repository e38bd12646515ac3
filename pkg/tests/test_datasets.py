"""Generator determinism, class balance, and CSV round-trips."""

import numpy as np
import pytest

from qmldesk import datasets as ds
from qmldesk.clustering import Dataset
from qmldesk.seeding import stream


def test_blobs_shapes_and_balance():
    pts, labels = ds.gaussian_blobs(stream(7, "data", "blobs"))
    assert pts.shape == (2000, 10)
    assert labels.shape == (2000,)
    assert [int(np.sum(labels == j)) for j in range(4)] == [500] * 4


def test_blobs_norm_spread_is_exactly_forced():
    pts, _ = ds.gaussian_blobs(stream(3, "data", "blobs"), norm_ratio=2.0)
    data = Dataset.from_rows(pts, min_norm_normalize=True)
    assert abs(data.eta - 4.0) < 1e-9


def test_blobs_natural_spread_without_forcing():
    pts, _ = ds.gaussian_blobs(stream(3, "data", "blobs"), norm_ratio=None)
    norms = np.linalg.norm(pts, axis=1)
    # Near-orthogonal centers at a fixed radius keep the spread moderate.
    assert 1.5 < norms.max() / norms.min() < 3.0


def test_blobs_centers_are_equidistant():
    pts, labels = ds.gaussian_blobs(stream(11, "data", "blobs"), norm_ratio=None)
    means = np.array([pts[labels == j].mean(axis=0) for j in range(4)])
    gaps = [np.linalg.norm(means[a] - means[b]) for a in range(4) for b in range(a + 1, 4)]
    expected = np.sqrt(2.0) * 23.5
    assert np.allclose(gaps, expected, rtol=0.05)


def test_blobs_too_many_clusters_rejected():
    with pytest.raises(ValueError):
        ds.gaussian_blobs(stream(0, "data"), n_features=3, n_clusters=4)


def test_circles_balance_and_radii():
    pts, labels = ds.concentric_circles(stream(5, "data", "circles"))
    assert pts.shape == (600, 2)
    for j, radius in enumerate((1.0, 2.5)):
        ring = np.linalg.norm(pts[labels == j], axis=1)
        assert ring.shape == (300,)
        assert abs(ring.mean() - radius) < 0.02


def test_circles_uneven_split_rejected():
    with pytest.raises(ValueError):
        ds.concentric_circles(stream(0, "data"), n_samples=601)


def test_moons_balance_and_interleaving():
    pts, labels = ds.half_moons(stream(9, "data", "moons"), n_samples=400, noise=0.0)
    assert int(np.sum(labels == 0)) == 200
    # Noiseless moons overlap horizontally but not vertically at the tips.
    assert pts[labels == 0][:, 1].max() > 0.9
    assert pts[labels == 1][:, 1].min() < -0.4


def test_moons_odd_count_rejected():
    with pytest.raises(ValueError):
        ds.half_moons(stream(0, "data"), n_samples=401)


def test_toy_shapes_pixel_mass_matches_class():
    images, labels = ds.toy_shapes(stream(13, "data", "shapes"), n_samples=80, noise=0.01)
    assert images.shape == (80, 8, 8)
    bright = (images > 0.5).sum(axis=(1, 2))
    # Filled squares stamp 16 pixels, crosses stamp 9.
    assert np.array_equal(bright, np.where(labels == 0, 16, 9))


def test_gen_dataset_flattens_images():
    rows, labels = ds.gen_dataset("toy_shapes", stream(1, "data"), n_samples=10)
    assert rows.shape == (10, 64)
    assert labels.shape == (10,)


def test_gen_dataset_unknown_kind():
    with pytest.raises(ValueError):
        ds.gen_dataset("spirals", stream(0, "data"))


def test_same_seed_gives_byte_identical_csv(tmp_path):
    payloads = []
    for attempt in range(2):
        rows, labels = ds.gen_dataset("gaussian_blobs", stream(77, "data", "blobs"), n_samples=50)
        path = tmp_path / f"blobs_{attempt}.csv"
        ds.write_csv(path, rows, labels)
        payloads.append(path.read_bytes())
    assert payloads[0] == payloads[1]


def test_csv_round_trip_is_exact(tmp_path):
    rows, labels = ds.gen_dataset("half_moons", stream(21, "data", "moons"), n_samples=30)
    path = tmp_path / "moons.csv"
    ds.write_csv(path, rows, labels)
    back_rows, back_labels = ds.read_csv(path)
    assert np.array_equal(back_rows, rows)
    assert np.array_equal(back_labels, labels)


def test_csv_without_labels(tmp_path):
    rows, _ = ds.gen_dataset("concentric_circles", stream(2, "data"), n_samples=20)
    path = tmp_path / "plain.csv"
    ds.write_csv(path, rows)
    back, none = ds.read_csv(path, with_labels=False)
    assert none is None
    assert np.array_equal(back, rows)


def test_csv_label_length_mismatch(tmp_path):
    with pytest.raises(ValueError):
        ds.write_csv(tmp_path / "bad.csv", np.eye(3), np.array([0, 1]))
