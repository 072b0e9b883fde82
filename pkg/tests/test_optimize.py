import numpy as np
import pytest

from pdsynth.errors import ConfigError
from pdsynth.optimize import (Axis, DesignGrid, OptimizationResult, _argmin, default_grid,
                              design_piecewise, grid_search, make_attachment, objective,
                              piecewise_grid, sigma_zeta)
from pdsynth.rare import RareOptions
from pdsynth.systems import Attachment, SpringLaw, seat_model

from conftest import reference_forcing

FAST = RareOptions(n_eta=9, rtol=1e-6, atol=1e-10)


def test_axis_values_and_zoom():
    ax = Axis("lambda_a", 1e-3, 1.0, 4)
    np.testing.assert_allclose(ax.values, [1e-3, 1e-2, 1e-1, 1.0])
    z = ax.zoom(2)
    assert (z.lo, z.hi, z.count) == (pytest.approx(1e-2), pytest.approx(1.0), 5)
    edge = ax.zoom(0)
    assert edge.lo == pytest.approx(1e-3) and edge.count == 3
    lin = Axis("alpha_pos", 0.0, 5.0, 51, "linear")
    assert lin.values[1] == pytest.approx(0.1)


def test_default_grids():
    g = default_grid("tmd")
    assert [a.name for a in g.axes] == ["lambda_a", "k_a"]
    assert g.axes[0].count == 41 and g.axes[1].hi == 10.0
    assert g.quantities == ("x", "xdot") and g.order == 4
    pw = piecewise_grid()
    assert pw.axes[0].count == 51 and pw.axes[0].hi == 5.0 and pw.quantities == ("x",)
    with pytest.raises(ConfigError):
        DesignGrid((g.axes[0],))


def test_argmin_tie_breaks_toward_smaller_indices():
    s = np.array([[3.0, 1.0], [1.0, np.nan]])
    assert _argmin(s) == (0, 1)
    s = np.array([[2.0, 2.0], [1.0, 1.0]])
    assert _argmin(s) == (1, 0)
    assert _argmin(np.full((2, 2), np.nan)) is None


def test_make_attachment_families():
    assert make_attachment("tmd", 0.02, 0.04, 0.05).spring == SpringLaw.linear(0.04)
    assert make_attachment("cubic_nes", 0.02, 3.0, 0.05).spring == SpringLaw.cubic(3.0)
    pw = make_attachment("piecewise", 1.0, 2.0, 0.05, k_o=0.04, lambda_a=0.02, delta=0.01)
    assert pw.damping == 0.02 and pw.spring == SpringLaw.piecewise(0.04, 1.0, 2.0, 0.01)
    with pytest.raises(ConfigError):
        make_attachment("magnetic", 1.0, 1.0, 0.05)


def test_best_reports_gamma():
    ax = (Axis("lambda_a", 0.1, 1.0, 2), Axis("k_a", 0.1, 1.0, 2))
    res = OptimizationResult("tmd", ax, {"x": np.array([[4.0, 2.0], [3.0, 5.0]])},
                             {"x": 8.0}, {"x": (0, 1)})
    assert res.best("x") == {"lambda_a": 0.1, "k_a": 1.0, "objective": 2.0, "gamma": 0.25}
    np.testing.assert_allclose(res.gamma_surface("x"), [[0.5, 0.25], [0.375, 0.625]])


def test_grid_search_small_tmd():
    f = reference_forcing()
    grid = DesignGrid((Axis("lambda_a", 0.01, 0.1, 2), Axis("k_a", 0.02, 0.06, 2)), ("x",))
    res = grid_search(seat_model(), f, grid, "tmd", rare_opts=FAST)
    assert res.baseline["x"] == pytest.approx(objective(seat_model(), f, "x", rare_opts=FAST))
    g = res.gamma_surface("x")
    assert np.all(np.isfinite(g)) and np.all(g > 0)
    assert res.best("x")["gamma"] == pytest.approx(g.min())
    # an attachment that only adds mass and damping helps the lightly damped seat
    assert g.min() < 1.0
    with pytest.raises(ConfigError):
        grid_search(seat_model(), f, grid, "cubic_nes")


def test_piecewise_with_core_slopes_reproduces_tmd():
    f = reference_forcing()
    k_o, lam = 0.045, 0.02
    grid = DesignGrid((Axis("alpha_pos", k_o, 2 * k_o, 2, "linear"),
                       Axis("alpha_neg", k_o, 2 * k_o, 2, "linear")), ("x",))
    res = design_piecewise(seat_model(), f, k_o, lam, grid, rare_opts=FAST)
    assert res.gamma_surface("x")[0, 0] == pytest.approx(1.0, rel=1e-6)
    tmd = seat_model(attachment=Attachment(0.05, lam, SpringLaw.linear(k_o)))
    assert res.design["sigma_zeta"] == pytest.approx(sigma_zeta(tmd, f))
    assert res.design["delta"] == pytest.approx(4 * res.design["sigma_zeta"])
