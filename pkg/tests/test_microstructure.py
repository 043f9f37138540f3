import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mlmcuq.microstructure import (LogNormalSpec, Microstructure, MicrostructureConfigError, TextureSpec,
                                   axis_angle_matrix, bunge_angles, bunge_matrix, grain_count,
                                   misorientation_deg, sample_microstructure)
from mlmcuq.model import SampleKey


def test_grain_count():
    assert [grain_count(l) for l in range(3)] == [8, 64, 512]
    assert grain_count(2, n0=3) == 192


def test_zero_scatter_gives_ideal_orientation():
    m = sample_microstructure(SampleKey(1, 0, 1), TextureSpec(scatter_deg=0.0))
    assert np.array_equal(m.euler_deg, np.tile([90.0, 0.0, 0.0], (64, 1)))


def test_lognormal_mean_diameter():
    spec = LogNormalSpec(5.2983, 0.2)
    assert spec.mean == pytest.approx(np.exp(5.2983 + 0.02), rel=1e-15)
    m = sample_microstructure(SampleKey(3, 0, 3), grain_stats=spec, n0=196)
    assert len(m) >= 100_000
    assert m.diameters.mean() == pytest.approx(204.1, rel=0.01)


def test_nested_prefix():
    key = SampleKey(5, 17, 2)
    fine = sample_microstructure(key)
    coarse = sample_microstructure(key, level=1)
    assert len(coarse) == 64 and len(fine) == 512
    assert fine.diameters[:64].tobytes() == coarse.diameters.tobytes()
    assert fine.euler_deg[:64].tobytes() == coarse.euler_deg.tobytes()


def test_weights_and_angle_ranges():
    m = sample_microstructure(SampleKey(2, 4, 2), TextureSpec(scatter_deg=40.0))
    w = m.weights
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.allclose(w / w[0], (m.diameters / m.diameters[0]) ** 3, rtol=1e-12)
    e = m.euler_deg
    assert np.all((0 <= e[:, 0]) & (e[:, 0] < 360))
    assert np.all((0 <= e[:, 1]) & (e[:, 1] <= 180))
    assert np.all((0 <= e[:, 2]) & (e[:, 2] < 360))
    assert sum(g.volume_weight for g in m.grains) == pytest.approx(1.0, abs=1e-12)


def _perturbation(m, texture):
    g0 = bunge_matrix(np.array([texture.phi1, texture.Phi, texture.phi2]))
    P = m.crystal_to_sample() @ g0     # sample-frame rotation applied to the ideal
    angle = misorientation_deg(P, np.eye(3))
    axis = np.stack([P[:, 2, 1] - P[:, 1, 2], P[:, 0, 2] - P[:, 2, 0], P[:, 1, 0] - P[:, 0, 1]], axis=1)
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    return angle, axis


def test_scatter_is_half_normal_and_isotropic():
    tex = TextureSpec(scatter_deg=15.0)
    m = sample_microstructure(SampleKey(8, 0, 3), tex, n0=8)
    angle, axis = _perturbation(m, tex)
    # perturbation angle follows the configured half-normal
    assert stats.kstest(angle, stats.halfnorm(scale=15.0).cdf).pvalue > 1e-3
    # the angle distribution does not depend on the axis direction
    polar = np.abs(axis[:, 2]) > 0.5
    assert stats.ks_2samp(angle[polar], angle[~polar]).pvalue > 1e-3
    east = axis[:, 0] > 0
    assert stats.ks_2samp(angle[east], angle[~east]).pvalue > 1e-3


def test_microstructure_csv(tmp_path):
    m = sample_microstructure(SampleKey(1, 1, 0))
    m.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "diameter,weight,phi1,Phi,phi2"
    assert len(lines) == 9


@pytest.mark.parametrize("make", [lambda: TextureSpec(scatter_deg=-1.0), lambda: TextureSpec(Phi=200.0),
                                  lambda: LogNormalSpec(sigma=0.0)])
def test_invalid_specs(make):
    with pytest.raises(MicrostructureConfigError):
        make()


def test_microstructure_validation():
    with pytest.raises(ValueError):
        Microstructure(0, [1.0, 2.0], [[0, 0, 0]])
    with pytest.raises(ValueError):
        Microstructure(0, [-1.0], [[0, 0, 0]])


@given(st.floats(0, 359.99), st.floats(0.01, 179.99), st.floats(0, 359.99))
@settings(max_examples=100, deadline=None)
def test_bunge_round_trip(p1, P, p2):
    g = bunge_matrix(np.array([p1, P, p2]))
    assert np.allclose(g @ g.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(g) == pytest.approx(1.0, abs=1e-12)
    back = bunge_matrix(bunge_angles(g))
    assert np.allclose(back, g, atol=1e-9)


def test_axis_angle_rotation():
    R = axis_angle_matrix(np.array([[0.0, 0.0, 1.0]]), np.array([np.pi / 2]))[0]
    assert np.allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)
