"""Overflow-free random products T_n = A_n ... A_1 and quantities derived from them.

A product is carried as ``e^logscale * unit`` where ``unit`` has operator norm
one. Since ||c M|| = c ||M||, the log-scale *is* log ||T_n|| and never needs a
separate norm evaluation. Batched variants run many independent trials at
once; letters are drawn index by index with one generator call per index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import Schedule, draw_letters
from .sl2core import (
    ProjectivePoint,
    SL2Matrix,
    angle_mod_pi,
    norm_entries,
    proj_action_entries,
    svd_entries,
)


@dataclass(frozen=True)
class ScaledProduct:
    unit: tuple[float, float, float, float]
    log_scale: float

    def matrix(self) -> np.ndarray:
        a, b, c, d = self.unit
        return math.exp(self.log_scale) * np.array([[a, b], [c, d]])


def identity_product() -> ScaledProduct:
    return ScaledProduct((1.0, 0.0, 0.0, 1.0), 0.0)


def push(p: ScaledProduct, A: SL2Matrix) -> ScaledProduct:
    """Left-multiply the product by ``A`` and renormalise."""
    a, b, c, d = p.unit
    na = A.a * a + A.b * c
    nb = A.a * b + A.b * d
    nc = A.c * a + A.d * c
    nd = A.c * b + A.d * d
    nrm = float(norm_entries(na, nb, nc, nd))
    if not math.isfinite(nrm) or nrm <= 0.0:
        raise FloatingPointError("non-finite product: corrupted input matrix")
    return ScaledProduct((na / nrm, nb / nrm, nc / nrm, nd / nrm), p.log_scale + math.log(nrm))


def log_norm(p: ScaledProduct) -> float:
    return p.log_scale


class ProductBatch:
    """Many independent scaled products advanced in lockstep."""

    def __init__(self, size: int):
        self.a = np.ones(size)
        self.b = np.zeros(size)
        self.c = np.zeros(size)
        self.d = np.ones(size)
        self.log_scale = np.zeros(size)

    def copy(self) -> "ProductBatch":
        out = ProductBatch.__new__(ProductBatch)
        out.a, out.b, out.c, out.d = self.a.copy(), self.b.copy(), self.c.copy(), self.d.copy()
        out.log_scale = self.log_scale.copy()
        return out

    def push(self, la, lb, lc, ld) -> None:
        a, b, c, d = self.a, self.b, self.c, self.d
        na = la * a + lb * c
        nb = la * b + lb * d
        nc = lc * a + ld * c
        nd = lc * b + ld * d
        nrm = norm_entries(na, nb, nc, nd)
        inv = 1.0 / nrm
        self.a, self.b, self.c, self.d = na * inv, nb * inv, nc * inv, nd * inv
        self.log_scale += np.log(nrm)

    def top_direction(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit vector T u where u is the maximally expanded direction (e1 for rotations)."""
        phi, s, s_min, _ = svd_entries(self.a, self.b, self.c, self.d)
        vx, vy = np.cos(phi), np.sin(phi)
        tie = (s - s_min) <= 1e-15 * s
        if np.any(tie):
            vx = np.where(tie, self.a, vx)
            vy = np.where(tie, self.c, vy)
        return vx, vy


def simulate_xi_batch(
    sch: Schedule, n: int, size: int, rng: np.random.Generator, checkpoints=None, start: int = 0
):
    """Sample xi_n = log ||A_{start+n} ... A_{start+1}|| for ``size`` independent trials.

    With ``checkpoints`` (ascending lengths <= n) returns ``{k: xi_k}`` read off
    the same trajectories instead of a single array.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    marks = set(checkpoints or ())
    out = {}
    prod = ProductBatch(size)
    for k in range(1, n + 1):
        prod.push(*draw_letters(sch, start + k, rng, size))
        if k in marks:
            out[k] = prod.log_scale.copy()
    return out if checkpoints is not None else prod.log_scale


def simulate_xi(sch: Schedule, n: int, rng: np.random.Generator) -> float:
    return float(simulate_xi_batch(sch, n, 1, rng)[0])


@dataclass(frozen=True)
class SplitSample:
    xi_prefix: float
    xi_suffix: float
    xi_full: float
    discrepancy: float
    theta_bound: float


def simulate_split_batch(sch: Schedule, n: int, n_prime: int, size: int, rng: np.random.Generator) -> dict:
    """Coupled prefix / suffix / full log-norms on one letter stream.

    Returns arrays ``prefix`` (xi_n), ``suffix`` (xi_(n, n+n']), ``full``
    (xi_{n+n'}), ``discrepancy`` (R_{n,n'}) and ``theta_bound``, the expansion
    loss Theta(T_(n, n+n'], T_n u) which dominates R pathwise.
    """
    if n < 1 or n_prime < 1:
        raise ValueError("n and n_prime must be >= 1")
    full = ProductBatch(size)
    for k in range(1, n + 1):
        full.push(*draw_letters(sch, k, rng, size))
    prefix_xi = full.log_scale.copy()
    vx, vy = full.top_direction()
    # log|T_(n, n+n'] v| by pushing v itself: reading it off the suffix's
    # singular vectors loses accuracy like e^{2 Theta}, this like e^{Theta}
    vec_log = np.zeros(size)
    suffix = ProductBatch(size)
    for k in range(n + 1, n + n_prime + 1):
        la, lb, lc, ld = draw_letters(sch, k, rng, size)
        full.push(la, lb, lc, ld)
        suffix.push(la, lb, lc, ld)
        vx, vy = la * vx + lb * vy, lc * vx + ld * vy
        nrm = np.hypot(vx, vy)
        vec_log += np.log(nrm)
        vx, vy = vx / nrm, vy / nrm
    theta = np.maximum(suffix.log_scale - vec_log, 0.0)
    return {
        "prefix": prefix_xi,
        "suffix": suffix.log_scale,
        "full": full.log_scale,
        "discrepancy": (prefix_xi + suffix.log_scale) - full.log_scale,
        "theta_bound": theta,
    }


def simulate_split(sch: Schedule, n: int, n_prime: int, rng: np.random.Generator) -> SplitSample:
    r = simulate_split_batch(sch, n, n_prime, 1, rng)
    return SplitSample(*(float(r[k][0]) for k in ("prefix", "suffix", "full", "discrepancy", "theta_bound")))


def simulate_direction_batch(
    sch: Schedule,
    from_index: int,
    to_index: int,
    theta0,
    inverse: bool,
    rng: np.random.Generator,
    size: int,
    checkpoints=None,
):
    """Image of the angles ``theta0`` under f_{T_(from, to]} (or its inverse).

    Letters are drawn in index order from_index+1 .. to_index in both modes;
    the inverse applies A_to^-1 first. ``checkpoints`` (forward mode only)
    returns ``{k: angles}`` after k letters.
    """
    if from_index >= to_index:
        raise ValueError("from_index must be < to_index")
    theta = np.broadcast_to(np.asarray(theta0, dtype=float), (size,)).copy()
    if inverse:
        if checkpoints is not None:
            raise ValueError("checkpoints are only available in forward mode")
        letters = [draw_letters(sch, k, rng, size) for k in range(from_index + 1, to_index + 1)]
        for a, b, c, d in reversed(letters):
            theta = proj_action_entries(d, -b, -c, a, theta)
        return theta
    marks = set(checkpoints or ())
    out = {}
    for k in range(from_index + 1, to_index + 1):
        a, b, c, d = draw_letters(sch, k, rng, size)
        theta = proj_action_entries(a, b, c, d, theta)
        if k - from_index in marks:
            out[k - from_index] = theta.copy()
    return out if checkpoints is not None else theta


def simulate_direction(
    sch: Schedule, from_index: int, to_index: int, p0: ProjectivePoint, inverse: bool, rng: np.random.Generator
) -> ProjectivePoint:
    theta = simulate_direction_batch(sch, from_index, to_index, p0.theta, inverse, rng, 1)
    return ProjectivePoint(float(angle_mod_pi(float(theta[0]))))
