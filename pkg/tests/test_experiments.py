import numpy as np
import pytest

from ipmsaddle.experiments import (
    TOY_SADDLES,
    CostTableRow,
    PenaltyRun,
    ac_initial,
    basin_map,
    ch_initials,
    ch_table,
    classify,
    compare_penalty,
    omega1_mask,
    penalty_report,
    phi04,
    toy_config,
)
from ipmsaddle.landscape import GinzburgLandau1D


@pytest.fixture(scope="module")
def small_basin(toy):
    cfg = toy_config(max_outer=100, divergence_cap=100.0)
    return basin_map(toy, cfg, nx=11, ny=11)


def test_basin_grid_shape_and_labels(small_basin):
    g = small_basin
    assert g.labels.shape == (11, 11) and g.in_omega1.shape == (11, 11)
    assert set(np.unique(g.labels)) <= {0, 1, 2, 3}
    assert g.classified.sum() > 0
    assert 0.0 <= g.omega1_coverage() <= 1.0
    rows = list(g.rows())
    assert len(rows) == 121 and rows[12][:2] == (1, 1)


def test_basin_map_is_mirror_symmetric(small_basin):
    # x -> -x swaps the two upper saddles
    swap = np.array([0, 2, 1, 3])
    assert np.array_equal(small_basin.labels[::-1], swap[small_basin.labels])


def test_basin_split_does_not_change_result(toy, small_basin):
    cfg = toy_config(max_outer=100, divergence_cap=100.0)
    again = basin_map(toy, cfg, nx=11, ny=11, chunks=2)
    assert np.array_equal(again.labels, small_basin.labels)


def test_classify_and_omega1_mask(toy):
    pts = np.array([[0.61727, 1.10273], [0.0, -0.3], [0.0, -0.31582], [np.nan, np.nan]])
    conv = np.array([True, True, False, True])
    assert classify(pts, conv, TOY_SADDLES, 1e-2).tolist() == [1, 0, 0, 0]
    mask = omega1_mask(toy, np.array(TOY_SADDLES + ((1.0, 0.0),)))
    assert mask.tolist() == [True, True, True, False]


def test_named_initials(ch, ac):
    inits = ch_initials(ch)
    assert set(inits) == {"phi01*", "phi02*", "phi03*", "phi04"}
    for phi in inits.values():
        assert np.mean(phi) == pytest.approx(0.6, abs=1e-14)
    assert np.allclose(phi04(ch), 0.5 * np.sin(2 * np.pi * ch.x) + 0.6)
    assert np.mean(ac_initial(ac)) == pytest.approx(0.1, abs=1e-14)


def test_ch_table_rows_conserve_mass():
    model = GinzburgLandau1D.cahn_hilliard()
    rows = ch_table({"phi02*": ch_initials(model)["phi02*"]}, M_list=(10,), model=model, max_outer=40)
    assert [r["method"] for r in rows] == ["IMF", "IPM"]
    for r in rows:
        assert r["stand_in_initial"]
        assert r["mark"] in ("ok", "x")
        if np.isfinite(r["mass"]):
            assert r["mass"] == pytest.approx(0.6, abs=1e-10)


def test_cost_row_and_penalty_report():
    assert CostTableRow(100, 0.0, 118, "Converged").total_cost == 11800
    assert CostTableRow(100, 0.0, 5, "Diverged").total_cost is None
    runs = [
        PenaltyRun(3, 0.4, 100, "Converged", 40, np.zeros(1)),
        PenaltyRun(4, 0.4, 100, "Converged", 30, np.zeros(1)),
        PenaltyRun(3, 0.4, 9000, "Converged", 5, np.zeros(1)),
        PenaltyRun(4, 0.4, 9000, "Diverged", 2, np.zeros(1)),
    ]
    rep = penalty_report(runs)
    assert rep["cubic_needs_more_cycles"] is True
    assert rep["cases_only_cubic_converges"] == [{"rho": 0.4, "M": 9000}]
    with pytest.raises(ValueError):
        compare_penalty(problem="toy2d")
