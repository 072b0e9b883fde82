import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from pdsynth.errors import GridMismatch, NegativeVariance
from pdsynth.rare import RareEventProfile
from pdsynth.synthesis import gaussian_moment, moment, synthesize
from pdsynth.systems import Quantity


def box_profile(a, b, P_r, tag="x"):
    """Uniform rare density on [a, b]."""
    edges = np.linspace(-max(abs(a), abs(b)), max(abs(a), abs(b)), 401)
    c = np.clip((edges - a) / (b - a), 0, 1)
    dens = np.diff(c) / np.diff(edges)
    return RareEventProfile(Quantity.parse(tag), edges, dens, P_r * 5000, P_r,
                            np.array([P_r * 5000]), np.array([0.1]), np.array([1.0]))


def test_no_rare_part_is_gaussian(seat_lin):
    pdf = synthesize(seat_lin, None, "x")
    s = seat_lin.sigma["x"]
    np.testing.assert_allclose(pdf.density, norm.pdf(pdf.grid, scale=s), rtol=1e-12)
    assert pdf.moment(2) == pytest.approx(s ** 2)
    assert pdf.moment(4) == pytest.approx(3 * s ** 4)
    assert pdf.grid[-1] == pytest.approx(8 * s)


def test_gaussian_moments():
    assert gaussian_moment(2.0, 4) == pytest.approx(48.0)
    assert gaussian_moment(2.0, 3) == 0.0
    assert gaussian_moment(2.0, 0) == 1.0
    assert gaussian_moment(0.5, 6) == pytest.approx(15 * 0.5 ** 6)


def test_mixture_moment_matches_component_sum(seat_lin):
    prof = box_profile(-0.02, 0.1, 0.02)
    pdf = synthesize(seat_lin, prof, "x")
    s = seat_lin.sigma["x"]
    m4_box = (0.1 ** 5 - (-0.02) ** 5) / (5 * 0.12)
    assert pdf.moment(4) == pytest.approx(0.98 * 3 * s ** 4 + 0.02 * m4_box, rel=1e-9)
    assert pdf.numeric_moment(2) == pytest.approx(pdf.moment(2), rel=0.02)


def test_normalization_and_extent(seat_lin, seat_rare):
    for frame in ("relative", "absolute"):
        for tag in ("x", "xdot", "xddot", "v"):
            pdf = synthesize(seat_lin, seat_rare[tag], tag, frame)
            assert pdf.mass() == pytest.approx(1.0, abs=1e-3)
            assert np.all(pdf.density >= 0)
            assert pdf.grid[-1] >= 1.1 * seat_rare[tag].support - 1e-15
            assert sum(pdf.weights) == 1.0


def test_rare_component_frame_independent(seat_lin, seat_rare):
    rel = synthesize(seat_lin, seat_rare["x"], "x", "relative")
    ab = synthesize(seat_lin, seat_rare["x"], "x", "absolute")
    np.testing.assert_array_equal(rel.rare_component, ab.rare_component)
    assert rel.sigma_b != ab.sigma_b


def test_synthesis_linear_in_components(seat_lin, seat_rare):
    pdf = synthesize(seat_lin, seat_rare["x"], "x")
    w_b, w_r = pdf.weights
    np.testing.assert_allclose(pdf.density,
                               w_b * pdf.background_component + w_r * pdf.rare_component)


def test_absolute_variance_plain_sum_and_anticorrelated(seat_lin):
    sx, sh = seat_lin.sigma["x"], seat_lin.sigma_base[0]
    zero = dataclasses.replace(seat_lin, cov_base={**seat_lin.cov_base, "x": 0.0})
    assert zero.absolute_variance("x") == pytest.approx(sx ** 2 + sh ** 2)
    anti = dataclasses.replace(seat_lin, cov_base={**seat_lin.cov_base, "x": -sx * sh})
    assert anti.absolute_variance("x") == pytest.approx((sx - sh) ** 2)
    bad = dataclasses.replace(seat_lin, cov_base={**seat_lin.cov_base, "x": -sx ** 2 - sh ** 2})
    with pytest.raises(NegativeVariance):
        synthesize(bad, None, "x", "absolute")


def test_unknown_frame(seat_lin):
    with pytest.raises(ValueError):
        synthesize(seat_lin, None, "x", "inertial")


def test_nonfinite_rare_support(seat_lin):
    prof = box_profile(-0.02, 0.1, 0.02)
    prof.edges[-1] = np.inf
    with pytest.raises(GridMismatch):
        synthesize(seat_lin, prof, "x")


def test_exceedance_level_gaussian(seat_lin):
    pdf = synthesize(seat_lin, None, "x")
    s = seat_lin.sigma["x"]
    assert pdf.exceedance_level(0.01) == pytest.approx(norm.ppf(0.995) * s, rel=1e-9)


def test_cell_average_integrates_cdf(seat_lin, seat_rare):
    pdf = synthesize(seat_lin, seat_rare["x"], "x")
    edges = np.linspace(-0.1, 0.1, 51)
    avg = pdf.cell_average(edges)
    assert np.sum(avg * np.diff(edges)) == pytest.approx(pdf.cdf(0.1) - pdf.cdf(-0.1))


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(0.001, 0.05), st.floats(0.05, 0.3))
def test_random_mixture_normalized(P_r, a, b):
    lin = _LIN
    prof = box_profile(-a, b, P_r)
    pdf = synthesize(lin, prof, "x")
    assert pdf.mass() == pytest.approx(1.0, abs=1e-3)
    assert np.all(pdf.density >= 0)
    s = lin.sigma["x"]
    e = prof.edges
    m2_rare = np.sum(prof.density * (e[1:] ** 3 - e[:-1] ** 3)) / 3
    exact = (1 - P_r) * s ** 2 + P_r * m2_rare
    assert pdf.moment(2) == pytest.approx(exact, rel=1e-9)


@pytest.fixture(autouse=True, scope="module")
def _shared_lin(seat_lin):
    global _LIN
    _LIN = seat_lin
