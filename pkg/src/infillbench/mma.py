"""Method of Moving Asymptotes for box-constrained problems with one
inequality constraint g(x) <= 0.

Standard Svanberg scheme: per-variable moving asymptotes adapted by
oscillation detection, a convex separable subproblem, and a scalar dual
solved by bisection + Newton polishing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ASYINIT = 0.5
ASYDECR = 0.7
ASYINCR = 1.2
ASYMIN = 0.01
ASYMAX = 10.0
RAA0 = 1e-5
ELASTIC_C = 1000.0      # penalty on the constraint slack variable
ELASTIC_D = 1.0


class MMAError(RuntimeError):
    pass


@dataclass
class MMAState:
    xmin: np.ndarray
    xmax: np.ndarray
    low: np.ndarray = None
    upp: np.ndarray = None
    xold1: np.ndarray = None
    xold2: np.ndarray = None
    iteration: int = 0

    @classmethod
    def create(cls, n: int, xmin=0.0, xmax=1.0) -> "MMAState":
        return cls(np.full(n, float(xmin)), np.full(n, float(xmax)))


def mma_update(state: MMAState, x: np.ndarray, dfdx: np.ndarray,
               g: float, dgdx: np.ndarray, move: float = 0.2,
               kkt_tol: float = 1e-9) -> np.ndarray:
    """One MMA step; returns the new design and mutates `state`."""
    x = np.asarray(x, dtype=np.float64)
    dfdx = np.asarray(dfdx, dtype=np.float64)
    dgdx = np.asarray(dgdx, dtype=np.float64)
    if not (np.isfinite(dfdx).all() and np.isfinite(dgdx).all() and np.isfinite(g)):
        raise MMAError("non-finite inputs to MMA update")
    n = x.size
    xmin, xmax = state.xmin, state.xmax
    xrange = np.maximum(xmax - xmin, 1e-12)

    if state.iteration < 2 or state.xold2 is None:
        low = x - ASYINIT * xrange
        upp = x + ASYINIT * xrange
    else:
        osc = (x - state.xold1) * (state.xold1 - state.xold2)
        gamma = np.where(osc > 0, ASYINCR, np.where(osc < 0, ASYDECR, 1.0))
        low = x - gamma * (state.xold1 - state.low)
        upp = x + gamma * (state.upp - state.xold1)
        low = np.clip(low, x - ASYMAX * xrange, x - ASYMIN * xrange)
        upp = np.clip(upp, x + ASYMIN * xrange, x + ASYMAX * xrange)
    state.low, state.upp = low, upp

    alpha = np.maximum.reduce([xmin, low + 0.1 * (x - low), x - move * xrange])
    beta = np.minimum.reduce([xmax, upp - 0.1 * (upp - x), x + move * xrange])
    beta = np.maximum(beta, alpha)

    ux = upp - x
    xl = x - low
    # objective approximation coefficients
    p0 = ux ** 2 * (np.maximum(dfdx, 0) + 0.001 * np.abs(dfdx) + RAA0 / xrange)
    q0 = xl ** 2 * (np.maximum(-dfdx, 0) + 0.001 * np.abs(dfdx) + RAA0 / xrange)
    # constraint approximation coefficients
    p1 = ux ** 2 * np.maximum(dgdx, 0)
    q1 = xl ** 2 * np.maximum(-dgdx, 0)
    # subproblem constraint value at x: approx g(x) = g; residual term b
    b = float(np.sum(p1 / ux + q1 / xl) - g)

    def x_of(lam: float) -> np.ndarray:
        pl = p0 + lam * p1
        ql = q0 + lam * q1
        sq_p = np.sqrt(pl)
        sq_q = np.sqrt(ql)
        xs = (sq_p * low + sq_q * upp) / (sq_p + sq_q)
        return np.clip(xs, alpha, beta)

    def dual_residual(lam: float) -> float:
        xs = x_of(lam)
        y = max(0.0, (lam - ELASTIC_C) / ELASTIC_D)   # elastic slack
        return float(np.sum(p1 / (upp - xs) + q1 / (xs - low)) - b - y)

    # dual_residual is non-increasing in lambda and -> -inf via the slack
    if dual_residual(0.0) <= 0:
        lam = 0.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(200):
            if dual_residual(hi) <= 0:
                break
            lo, hi = hi, hi * 2
        else:
            raise MMAError("dual variable bracketing failed")
        for _ in range(200):
            lam = 0.5 * (lo + hi)
            r = dual_residual(lam)
            if abs(r) <= kkt_tol * max(1.0, abs(b)):
                break
            if r > 0:
                lo = lam
            else:
                hi = lam
        lam = 0.5 * (lo + hi)
        if abs(dual_residual(lam)) > 1e-3 * max(1.0, abs(b)) and hi - lo > 1e-14:
            raise MMAError(f"dual solver did not converge: residual "
                           f"{dual_residual(lam):.3e}")
    x_new = x_of(lam)
    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.iteration += 1
    if not ((x_new > low) & (x_new < upp)).all():
        raise MMAError("iterate left the asymptote interval")
    return x_new
