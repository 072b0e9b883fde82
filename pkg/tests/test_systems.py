import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdsynth import _kernels as K
from pdsynth.errors import ConfigError
from pdsynth.systems import (Attachment, ImpulsePattern, Quantity, SpringLaw, SystemModel,
                             apply_impulse, deck_seat_model, mechanical_energy, restoring_force,
                             rhs, seat_model)


def test_cubic_force_direct_cube():
    assert restoring_force(SpringLaw.cubic(3.461), 0.1) == pytest.approx(3.461e-3, rel=1e-12)


@pytest.mark.parametrize("spring", [SpringLaw.linear(0.3), SpringLaw.cubic(2.0, 0.1),
                                    SpringLaw.piecewise(0.04, 0.5, 2.0, 0.01)])
def test_force_zero_at_origin(spring):
    assert restoring_force(spring, 0.0) == 0.0


def test_piecewise_continuous_at_knees():
    s = SpringLaw.piecewise(0.04, 0.035, 0.634, 0.02)
    for d in (0.02, -0.02):
        lo, hi = restoring_force(s, d * (1 - 1e-12)), restoring_force(s, d * (1 + 1e-12))
        assert lo == pytest.approx(hi, abs=1e-12)
        assert lo == pytest.approx(0.04 * d, abs=1e-12)


def test_piecewise_slopes():
    s = SpringLaw.piecewise(0.04, 0.5, 2.0, 0.01)
    assert restoring_force(s, 0.005) == pytest.approx(0.04 * 0.005)
    assert restoring_force(s, 0.03) == pytest.approx(0.04 * 0.01 + 0.5 * 0.02)
    assert restoring_force(s, -0.03) == pytest.approx(-0.04 * 0.01 - 2.0 * 0.02)


def test_piecewise_needs_knee():
    with pytest.raises(ConfigError):
        SpringLaw.piecewise(0.04, 0.5, 2.0, 0.0)


def test_rhs_equilibrium_is_zero():
    m = seat_model(attachment=Attachment(0.05, 0.021, SpringLaw.cubic(3.461)))
    assert np.all(rhs(m, np.zeros(4)) == 0.0)


def test_rhs_hand_evaluation():
    m = seat_model(attachment=Attachment(0.05, 0.021, SpringLaw.cubic(3.461)))
    d = rhs(m, [0.01, 0.0, 0.0, 0.0])
    assert d[1] == pytest.approx(-(0.01 + 3.461 * 1e-6), rel=1e-12)
    assert d[1] == pytest.approx(-0.01000346, rel=1e-6)
    assert d[3] == pytest.approx(3.461e-6 / 0.05, rel=1e-12)


def test_rhs_base_acceleration_loads_every_mass():
    m = deck_seat_model(attachment=Attachment(0.05, 0.035, SpringLaw.cubic(5.86)))
    d = rhs(m, np.zeros(6), base_accel=2.0)
    np.testing.assert_allclose(d[1::2], -2.0)


def test_apply_impulse_patterns():
    m = seat_model(attachment=Attachment(0.05, 0.021, SpringLaw.cubic(3.461)))
    np.testing.assert_array_equal(apply_impulse(m, np.zeros(4), 0.0), np.zeros(4))
    np.testing.assert_array_equal(apply_impulse(m, np.zeros(4), 0.1), [0, 0.1, 0, 0])
    np.testing.assert_array_equal(apply_impulse(m, np.zeros(4), 0.1, ImpulsePattern.ALL_DOFS),
                                  [0, 0.1, 0, 0.1])


def test_deck_primary_is_deck():
    m = deck_seat_model(attachment=Attachment(0.05, 0.035, SpringLaw.cubic(5.86)))
    assert m.dofs == ("y", "x", "v")
    np.testing.assert_array_equal(apply_impulse(m, np.zeros(6), 0.1), [0, 0.1, 0, 0, 0, 0])


def test_model_validation():
    with pytest.raises(ConfigError):
        SystemModel("seat2dof", -1.0, 0.01, 1.0)
    with pytest.raises(ConfigError):
        SystemModel("deckseat3dof", 0.05, 0.1, 1.0)
    with pytest.raises(ConfigError):
        SystemModel("tower", 1.0, 0.01, 1.0)


def test_quantity_tags_roundtrip():
    for tag in ("x", "xdot", "xddot", "v", "vdot", "y", "yddot"):
        assert Quantity.parse(tag).tag == tag
    assert Quantity.parse("vddot") == Quantity("v", 2)


def test_linear_sdof_impulse_matches_closed_form():
    # a vanishing attachment leaves the damped oscillator x'' + 0.01 x' + x = 0
    m = seat_model()
    y0 = np.array([0.0, 0.1])
    out, rows, status = K.impulse_response(y0, 60.0, 0.05, 1e-10, np.full(2, 1e-14),
                                           np.zeros(3, np.bool_), 0.1, 5.0, *m.kernel_args())
    t = np.arange(rows) * 0.05
    wd = math.sqrt(1 - 0.005 ** 2)
    x = 0.1 * np.exp(-0.005 * t) * np.sin(wd * t) / wd
    np.testing.assert_allclose(out[:rows, 0], x, atol=1e-10)


@pytest.mark.parametrize("spring", [SpringLaw.cubic(3.461), SpringLaw.linear(0.04),
                                    SpringLaw.piecewise(0.04, 0.035, 0.634, 0.02)])
def test_undamped_energy_conserved(spring):
    m = SystemModel("seat2dof", 1.0, 0.0, 1.0, attachment=Attachment(0.05, 0.0, spring))
    y0 = np.array([0.0, 0.1, 0.0, 0.0])
    out, rows, status = K.impulse_response(y0, 200.0, 0.05, 1e-10, np.full(4, 1e-14),
                                           np.zeros(6, np.bool_), 0.1, 5.0, *m.kernel_args())
    e0 = mechanical_energy(m, y0)
    states = out[:rows][:, [0, 1, 3, 4]]
    energies = np.array([mechanical_energy(m, s) for s in states])
    assert np.max(np.abs(energies - e0)) / e0 < 1e-7


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
       st.floats(-0.5, 0.5), st.sampled_from(["linear", "cubic", "piecewise"]))
def test_rhs_odd_for_symmetric_springs(x, xd, v, vd, kind):
    spring = {"linear": SpringLaw.linear(0.04), "cubic": SpringLaw.cubic(3.0),
              "piecewise": SpringLaw.piecewise(0.04, 0.7, 0.7, 0.02)}[kind]
    m = seat_model(attachment=Attachment(0.05, 0.02, spring))
    s = np.array([x, xd, v, vd])
    np.testing.assert_allclose(rhs(m, -s), -rhs(m, s), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.floats(1e-4, 0.1))
def test_piecewise_continuity_property(k_o, a_pos, a_neg, delta):
    s = SpringLaw.piecewise(k_o, a_pos, a_neg, delta)
    z = np.array([-delta, delta])
    eps = 1e-9 * delta
    np.testing.assert_allclose(restoring_force(s, z - eps), restoring_force(s, z + eps),
                               atol=1e-8 * delta * (1 + k_o + a_pos + a_neg))
    np.testing.assert_allclose(restoring_force(s, z), k_o * z, rtol=1e-12,
                               atol=1e-14 * delta * (1 + a_pos + a_neg))
