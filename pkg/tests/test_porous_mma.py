"""MMA optimizer and the local-volume (porous) optimization loop."""
import numpy as np
import pytest

from infillbench import domain as dm
from infillbench import fem
from infillbench import mma
from infillbench import porous

from conftest import solid_box, cantilever


# --------------------------------------------------------------------- MMA

def test_mma_analytic_problem():
    """min x1^2 + x2^2  s.t.  x1 + x2 >= 1  ->  (0.5, 0.5)."""
    x = np.array([0.8, 0.1])
    state = mma.MMAState(np.zeros(2), np.ones(2))
    for _ in range(50):
        dfdx = 2.0 * x
        g = 1.0 - x.sum()                      # g <= 0 feasible
        dgdx = np.array([-1.0, -1.0])
        x = mma.mma_update(state, x, dfdx, g, dgdx, move=0.2)
        if np.abs(x - 0.5).max() < 1e-4:
            break
    assert np.abs(x - 0.5).max() <= 1e-3


def test_mma_respects_move_and_box_limits():
    rng = np.random.default_rng(0)
    x = rng.random(20)
    state = mma.MMAState(np.zeros(20), np.ones(20))
    for _ in range(5):
        x_old = x.copy()
        x = mma.mma_update(state, x, rng.standard_normal(20),
                           -0.5, rng.standard_normal(20), move=0.1)
        assert (np.abs(x - x_old) <= 0.1 + 1e-12).all()
        assert (x >= -1e-12).all() and (x <= 1 + 1e-12).all()
        # iterates stay strictly inside the asymptotes
        assert (x > state.low).all() and (x < state.upp).all()


def test_mma_stationary_point_is_fixed():
    x = np.full(4, 0.5)
    state = mma.MMAState(np.zeros(4), np.ones(4))
    x_new = mma.mma_update(state, x, np.zeros(4), -0.5, np.zeros(4),
                           move=0.2)
    assert np.abs(x_new - x).max() <= 1e-9


# --------------------------------------------------------- local fractions

def test_local_fraction_uniform():
    dom = solid_box(6, 6, 6)
    f = porous.local_fraction(dom, np.full(dom.n_elements, 0.5), 2.0)
    assert np.allclose(f, 0.5, atol=1e-12)


def test_local_fraction_point_neighborhood():
    dom = solid_box(5, 5, 5)
    rng = np.random.default_rng(1)
    rho = rng.random(dom.n_elements)
    f = porous.local_fraction(dom, rho, 0.99)
    assert np.allclose(f, rho, atol=1e-12)


def test_local_fraction_single_solid_matches_enumeration():
    dom = solid_box(9, 9, 9)
    rho = np.zeros(dom.n_elements)
    center = 4 + 9 * (4 + 9 * 4)
    rho[center] = 1.0
    Re = 2.0
    f = porous.local_fraction(dom, rho, Re)
    # brute force at the center element
    centers = dom.element_centers()
    hood = np.linalg.norm(centers - centers[center], axis=1) \
        <= Re * dom.spacing + 1e-9
    assert f[center] == pytest.approx(1.0 / hood.sum(), rel=1e-12)
    assert int(hood.sum()) == 33               # |ball of radius 2| in Z^3


def test_aggregate_constraint():
    dom = solid_box(3, 3, 3)
    active = dom.active_elements()
    f = np.full(dom.n_elements, 0.5)
    g, _ = porous.aggregate_constraint(f, 0.5, 16.0, active)
    assert g == pytest.approx(0.0, abs=1e-12)
    # large p approaches the max; converged porous fields plateau at the
    # cap, so the random field carries a plateau at its maximum too
    rng = np.random.default_rng(2)
    big = solid_box(8, 8, 8)
    big_active = big.active_elements()
    fb = np.clip(rng.random(big.n_elements) * 1.2, 0.0, 1.0)
    g, _ = porous.aggregate_constraint(fb, 1.0, 256.0, big_active)
    assert abs((g + 1.0) - fb[big_active].max()) <= 0.01 * fb[big_active].max()
    # gradient vs finite differences
    f = 0.2 + 0.6 * rng.random(dom.n_elements)
    g0, grad = porous.aggregate_constraint(f, 0.5, 16.0, active)
    h = 1e-6
    for e in [0, 5, 13, 26]:
        fp, fm = f.copy(), f.copy()
        fp[e] += h
        fm[e] -= h
        fd = (porous.aggregate_constraint(fp, 0.5, 16.0, active)[0]
              - porous.aggregate_constraint(fm, 0.5, 16.0, active)[0]) / (2 * h)
        assert abs(grad[e] - fd) <= 1e-4 * max(abs(fd), 1e-12)


def test_aggregation_is_lower_bound_of_max():
    dom = solid_box(4, 4, 4)
    active = dom.active_elements()
    rng = np.random.default_rng(3)
    f = rng.random(dom.n_elements)
    g, _ = porous.aggregate_constraint(f, 0.5, 16.0, active)
    assert (g + 1.0) * 0.5 <= f[active].max() + 1e-12


# -------------------------------------------------------------------- loop

def test_run_porous_small():
    dom = cantilever(12, 6, 6)
    cfg = porous.PorousConfig(Ve=0.55, Re=2.5, max_iters=40,
                              solver=fem.SolverConfig(rel_tol=1e-5))
    field, report = porous.run_porous(dom, cfg)
    active = dom.active_elements()
    fr = porous.local_fraction(dom, field.rho_bar, cfg.Re)
    assert fr[active].max() <= cfg.Ve + 0.02
    assert report.extra["max_local_fraction"] == pytest.approx(
        fr[active].max(), rel=1e-9)
    # porous designs spread material: most coarse subblocks get some
    rho = field.rho_bar.reshape(dom.dims, order="F")
    filled = 0
    blocks = 0
    for i in range(0, 12, 3):
        for j in range(0, 6, 3):
            for k in range(0, 6, 3):
                blocks += 1
                filled += rho[i:i + 3, j:j + 3, k:k + 3].max() > 0.3
    assert filled / blocks >= 0.9
