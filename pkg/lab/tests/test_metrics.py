import numpy as np
import pytest

from config.presets import gm2_sym, gm8_ring
from oracle.gaussian_mixture import sample_gaussian_mixture
from utils.exceptions import DomainError, NonFiniteError
from utils.metrics import (
    SampleSet,
    energy_distance,
    evaluate_samples,
    median_bandwidth,
    mmd_rbf,
    mode_coverage,
    sliced_w2,
)
from utils.svg_writer import write_scatter_svg


def test_distances_vanish_on_identical_sets(rng):
    a = rng.standard_normal((300, 2))
    assert sliced_w2(a, a, 32, rng) == pytest.approx(0.0, abs=1e-12)
    assert mmd_rbf(a, a, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_sliced_w2_of_a_one_dimensional_shift(rng):
    a = rng.standard_normal((500, 1))
    assert sliced_w2(a, a + 0.7, 8, rng) == pytest.approx(0.7, rel=1e-9)


def test_sliced_w2_handles_unequal_sizes(rng):
    a = rng.standard_normal((400, 2))
    b = rng.standard_normal((250, 2))
    assert 0.0 <= sliced_w2(a, b, 64, rng) < 0.3


def test_distances_grow_with_separation(rng):
    a = rng.standard_normal((400, 2))
    near = rng.standard_normal((400, 2)) + 0.2
    far = rng.standard_normal((400, 2)) + 2.0
    h = median_bandwidth(a, far)
    assert mmd_rbf(a, near, h) < mmd_rbf(a, far, h)
    assert energy_distance(a, near) < energy_distance(a, far)
    assert sliced_w2(a, near, 64, np.random.default_rng(1)) < sliced_w2(a, far, 64, np.random.default_rng(1))


def test_energy_distance_of_two_points():
    assert energy_distance(np.array([[0.0]]), np.array([[3.0]])) == pytest.approx(6.0)


def test_metric_argument_checks(rng):
    a = rng.standard_normal((10, 2))
    with pytest.raises(DomainError):
        sliced_w2(a, rng.standard_normal((10, 3)), 4, rng)
    with pytest.raises(DomainError):
        mmd_rbf(a, a, 0.0)
    with pytest.raises(DomainError):
        energy_distance(np.zeros((0, 2)), a)
    with pytest.raises(NonFiniteError):
        SampleSet(points=np.array([[np.inf, 0.0]]))


def test_mode_coverage_full_and_collapsed():
    spec = gm8_ring()
    data, _ = sample_gaussian_mixture(spec, 4000, np.random.default_rng(2))
    full = mode_coverage(data, spec)
    assert full.coverage == 1.0
    np.testing.assert_allclose(full.per_mode_mass, 1 / 8, atol=0.03)

    collapsed = np.repeat(np.array(spec.means[:2]), 500, axis=0)
    partial = mode_coverage(collapsed, spec)
    assert partial.coverage == pytest.approx(2 / 8)
    assert partial.covered[:2].all() and not partial.covered[2:].any()

    empty = mode_coverage(np.zeros((0, 2)), spec)
    assert empty.coverage == 0.0


def test_mode_coverage_rejects_scattered_samples():
    spec = gm2_sym(offset=1.0, stdev=0.01)
    scattered = np.array([[-1.5, 0.0], [-0.6, 0.0], [0.6, 0.0], [1.5, 0.0]])
    assert mode_coverage(scattered, spec, radius_multiple=3.0).coverage == 0.0


def test_evaluate_samples_report(rng):
    spec = gm8_ring()
    samples, _ = sample_gaussian_mixture(spec, 512, rng)
    reference, _ = sample_gaussian_mixture(spec, 512, rng)
    report = evaluate_samples(samples, reference, spec, projections=32, rng=np.random.default_rng(3))
    assert report.mode_coverage == 1.0
    assert report.n_samples == 512 and report.projections == 32
    assert report.bandwidth > 0.0
    assert report.sw2 < 0.2
    again = evaluate_samples(samples, reference, spec, projections=32, rng=np.random.default_rng(3))
    assert again == report


def test_scatter_svg(tmp_path, rng):
    spec = gm8_ring()
    points, labels = sample_gaussian_mixture(spec, 50, rng)
    path = write_scatter_svg(tmp_path / "plot.svg", points, labels=labels, spec=spec, title="ring <8>")
    text = path.read_text(encoding="utf-8")
    assert text.startswith("<?xml") or text.startswith("<svg")
    assert text.count("<circle") == 50
    assert "ring &lt;8&gt;" in text
