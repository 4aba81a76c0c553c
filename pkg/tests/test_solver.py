import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipmsaddle.auxiliary import AuxParams, PenaltyForm
from ipmsaddle.experiments import ac_config, ch_config, toy_config
from ipmsaddle.landscape import GinzburgLandau1D, ToyPotential2D
from ipmsaddle.solver import (
    CONVERGED,
    DIVERGED,
    MAX_OUTER,
    InnerStepper,
    InsufficientData,
    IpmConfig,
    estimate_convergence_order,
    index_matches,
    nash_residual_closed_form,
    run_ipm,
    run_ipm_batch,
    verify_nash_residuals,
)
from ipmsaddle.spectral import SpectralInfo, lowest_k_modes


def one_cycle(model, x, cfg):
    modes = lowest_k_modes(model, x, k=cfg.aux.k)
    stepper = InnerStepper(model, x, modes, cfg, cfg.rho)
    y = np.array(x, dtype=float)
    for _ in range(cfg.M):
        y, _ = stepper.step(y)
    return y


@pytest.mark.parametrize(
    "start, saddle",
    [((0.5, 0.8), (0.61727, 1.10273)), ((-0.5, 0.8), (-0.61727, 1.10273)), ((0.2, -0.1), (0.0, -0.31582))],
)
def test_toy_runs_find_catalogue_saddles(toy, start, saddle):
    tr = run_ipm(toy, start, toy_config())
    assert tr.status == CONVERGED and not tr.wrong_index
    assert np.allclose(tr.x, saddle, atol=1e-4)


def test_runs_are_deterministic(toy, ac):
    a = run_ipm(toy, (0.5, 0.8), toy_config())
    b = run_ipm(toy, (0.5, 0.8), toy_config())
    assert np.array_equal(a.errors, b.errors) and np.array_equal(a.x, b.x)
    phi = 0.5 * np.sin(2 * np.pi * ac.x) + 0.1
    cfg = ac_config(M=100, max_outer=5)
    assert np.array_equal(run_ipm(ac, phi, cfg).x, run_ipm(ac, phi, cfg).x)


def test_batch_agrees_with_single_runs(toy):
    starts = np.array([[0.5, 0.8], [-0.5, 0.8], [0.2, -0.1], [1.5, 2.0], [-1.9, 1.2], [0.0, 1.1]])
    for backtrack in (True, False):
        cfg = toy_config(max_outer=60, divergence_cap=100.0, backtrack=backtrack)
        batch = run_ipm_batch(toy, starts, cfg)
        for i, s in enumerate(starts):
            tr = run_ipm(toy, s, cfg)
            assert batch.status[i] == tr.status
            assert batch.wrong_index[i] == tr.wrong_index
            if tr.status == CONVERGED:
                assert np.allclose(batch.x[i], tr.x, atol=1e-9)
                assert batch.outer_iters[i] == tr.outer_iters


@pytest.mark.parametrize("ab", [(1.0, 1.0), (0.0, 2.0), (0.3, 0.9)])
def test_exact_saddle_is_a_fixed_point(toy, toy_saddles, ab):
    cfg = toy_config().with_(alpha=ab[0], beta=ab[1])
    for s in toy_saddles:
        y = one_cycle(toy, s, cfg)
        assert np.linalg.norm(y - s) < 10 * cfg.tol


def test_pde_saddle_is_a_fixed_point(ac):
    cfg = ac_config(rho=0.3, tol=1e-10)
    tr = run_ipm(ac, 0.5 * np.sin(2 * np.pi * ac.x) + 0.1, cfg.with_(M=400))
    assert tr.status == CONVERGED
    y = one_cycle(ac, tr.x, cfg)
    assert np.sqrt(ac.h) * np.linalg.norm(y - tr.x) < 10 * 1e-6


@settings(max_examples=10)
@given(seed=st.integers(0, 2**32 - 1), rho=st.sampled_from([0.0, 100.0]))
def test_hminus1_inner_steps_conserve_mass(seed, rho):
    model = GinzburgLandau1D.cahn_hilliard()
    rng = np.random.default_rng(seed)
    x = model.project_mass(0.6 + 0.4 * np.sin(2 * np.pi * model.x) + 0.02 * rng.standard_normal(model.dim))
    cfg = ch_config(rho=rho)
    modes = lowest_k_modes(model, x)
    stepper = InnerStepper(model, x, modes, cfg, rho)
    y = x.copy()
    for _ in range(50):
        y_new, _ = stepper.step(y)
        assert abs(np.mean(y_new) - np.mean(y)) <= 1e-10
        y = y_new
    assert abs(np.mean(y) - 0.6) <= 1e-12


def test_converged_runs_are_index_certified(toy, ac):
    for start in [(0.5, 0.8), (0.2, -0.1), (-1.0, 1.0), (0.9, 0.3)]:
        tr = run_ipm(toy, start, toy_config())
        if tr.status == CONVERGED:
            modes = lowest_k_modes(toy, tr.x)
            assert index_matches(modes, 1, 1e-6) and not tr.wrong_index
    tr = run_ipm(ac, 0.5 * np.sin(2 * np.pi * ac.x) + 0.1, ac_config(M=400))
    assert tr.status == CONVERGED and not tr.wrong_index
    # the periodic saddle carries a translation zero mode next to lambda_1
    assert tr.records[-1].eigenvalues[0] < -0.05
    assert abs(tr.records[-1].eigenvalues[1]) < 1e-4


def test_index_rule_tolerates_zero_modes_only():
    def info(spec):
        spec = np.asarray(spec, dtype=float)
        return SpectralInfo(spec[:1], np.zeros((1, 3)), None, np.zeros(1), next_eigenvalue=spec[1], spectrum=spec)

    assert index_matches(info([-12.7, 1e-7, 5.0]), 1, 1e-6)
    assert index_matches(info([-12.7, -1e-6, 5.0]), 1, 1e-6)
    assert not index_matches(info([-12.7, -1e-3, 5.0]), 1, 1e-6)
    assert not index_matches(info([1e-3, 2.0, 5.0]), 1, 1e-6)


def test_divergence_is_reported(toy):
    cfg = toy_config(inner_dt=5.0, backtrack=False, divergence_cap=1e3)
    tr = run_ipm(toy, (0.5, 0.8), cfg)
    assert tr.status == DIVERGED
    assert not np.isfinite(tr.errors[-1])


def test_max_outer_is_reported(toy):
    tr = run_ipm(toy, (0.5, 0.8), toy_config(max_outer=2))
    assert tr.status == MAX_OUTER and tr.outer_iters == 2


def test_backtracking_never_raises_w_tilde(toy):
    x = np.array([0.4, 0.9])
    cfg = toy_config(inner_dt=0.5)
    modes = lowest_k_modes(toy, x)
    stepper = InnerStepper(toy, x, modes, cfg, cfg.rho)
    y = x + [0.1, -0.05]
    for _ in range(30):
        y_new, _ = stepper.step(y)
        assert stepper.grad.value(y_new) <= stepper.grad.value(y) + 1e-12
        y = y_new


def test_nash_residuals_at_saddle_and_elsewhere(toy, toy_saddles):
    cfg = toy_config()
    rep = verify_nash_residuals(toy, toy_saddles[0], cfg, tol=1e-9)
    assert rep.passed and rep.r_x == 0.0
    assert rep.r_y == pytest.approx(nash_residual_closed_form(toy, toy_saddles[0], cfg), abs=1e-14)
    bad = verify_nash_residuals(toy, (0.5, 0.8), cfg)
    assert not bad.passed and bad.is_index_k
    assert set(bad.as_dict()) == {"r_minus1", "r_0", "r_1", "eigenvalues", "is_index_k", "tol", "passed"}
    minimum = verify_nash_residuals(toy, ToyPotential2D.MINIMA[0], cfg, tol=1e-3)
    assert not minimum.is_index_k


def test_convergence_order_of_model_sequences():
    quad = [1e-1]
    for _ in range(4):
        quad.append(quad[-1] ** 2)
    assert estimate_convergence_order(quad) == pytest.approx(2.0, abs=1e-9)
    lin = 0.05 * 0.5 ** np.arange(12)
    assert estimate_convergence_order(lin) == pytest.approx(1.0, abs=0.05)
    with pytest.raises(InsufficientData):
        estimate_convergence_order([1.0, 0.5, 1e-3])


def test_progress_callback_and_trace_properties(toy):
    seen = []
    tr = run_ipm(toy, (0.5, 0.8), toy_config(), progress=seen.append)
    assert [r.outer for r in seen] == list(range(tr.outer_iters + 1))
    assert tr.total_inner_steps >= tr.outer_iters * 100
    assert seen[0].penalty == 0.0 and all(r.penalty > 0 for r in seen[1:])


def test_rho_decay_reaches_same_saddle(toy):
    tr = run_ipm(toy, (0.5, 0.8), toy_config(rho_decay=0.5))
    assert tr.converged and np.allclose(tr.x, (0.61727, 1.10273), atol=1e-4)


def test_config_validation_and_copy():
    with pytest.raises(ValueError, match="alpha\\+beta"):
        IpmConfig(aux=AuxParams(1.0, 1.0)).with_(alpha=0.2, beta=0.2)
    with pytest.raises(ValueError, match="M"):
        IpmConfig(M=0)
    for bad in (dict(tol=0.0), dict(inner_dt=-1.0), dict(max_outer=0), dict(rho_decay=1.5)):
        with pytest.raises(ValueError):
            IpmConfig(**bad)
    cfg = IpmConfig(aux=AuxParams(1.0, 1.0, PenaltyForm("norm", 3, 5.0))).with_(rho=7.0, alpha=0.0, beta=2.0, M=3)
    assert (cfg.rho, cfg.aux.alpha, cfg.aux.beta, cfg.M, cfg.aux.penalty.kind) == (7.0, 0.0, 2.0, 3, "norm")


def test_dimension_checks(toy):
    with pytest.raises(ValueError, match="dimension"):
        run_ipm(toy, (0.1, 0.2, 0.3), toy_config())
