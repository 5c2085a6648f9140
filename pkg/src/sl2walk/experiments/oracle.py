"""Exhaustive word enumeration for finite-support schedules."""

from __future__ import annotations

import numpy as np

from ..measures import FiniteSupport, Schedule, schedule_get
from ..sl2core import norm_entries

MAX_WORDS = 1 << 20


class NotEnumerable(ValueError):
    pass


def _supports(sch: Schedule, first: int, last: int):
    out = []
    total = 1
    for i in range(first, last + 1):
        s = schedule_get(sch, i)
        if not isinstance(s, FiniteSupport):
            raise NotEnumerable(f"letter {i} is not finitely supported")
        total *= len(s.atoms)
        if total > MAX_WORDS:
            raise NotEnumerable("too many words to enumerate")
        out.append(s)
    return out


def enumerate_products(sch: Schedule, first: int, last: int):
    """All products A_last ... A_first with their probabilities.

    Returns ``(entries, probs)`` where ``entries`` has shape (words, 4).
    """
    ent = np.array([[1.0, 0.0, 0.0, 1.0]])
    prob = np.array([1.0])
    for s in _supports(sch, first, last):
        atoms = s.entries
        a, b, c, d = (ent[:, k][None, :] for k in range(4))
        la, lb, lc, ld = (atoms[:, k][:, None] for k in range(4))
        ent = np.stack(
            [la * a + lb * c, la * b + lb * d, lc * a + ld * c, lc * b + ld * d], axis=-1
        ).reshape(-1, 4)
        prob = (np.asarray(s.probs)[:, None] * prob[None, :]).ravel()
    return ent, prob


def is_enumerable(sch: Schedule, n: int) -> bool:
    try:
        _supports(sch, 1, n)
    except NotEnumerable:
        return False
    return True


def _moments(values: np.ndarray, prob: np.ndarray) -> dict:
    mean = float(np.dot(prob, values))
    dev = values - mean
    return {
        "mean": mean,
        "var": float(np.dot(prob, dev**2)),
        "m2": float(np.dot(prob, values**2)),
        "m3": float(np.dot(prob, values**3)),
    }


def exact_xi(sch: Schedule, n: int) -> dict:
    """Exact mean and variance of xi_n."""
    ent, prob = enumerate_products(sch, 1, n)
    xi = np.log(norm_entries(ent[:, 0], ent[:, 1], ent[:, 2], ent[:, 3]))
    return _moments(xi, prob)


def exact_split(sch: Schedule, n: int, n_prime: int) -> dict:
    """Exact first three raw moments of R_{n,n'}."""
    _supports(sch, 1, n + n_prime)
    pe, pp = enumerate_products(sch, 1, n)
    se, sp = enumerate_products(sch, n + 1, n + n_prime)
    xp = np.log(norm_entries(*pe.T))
    xs = np.log(norm_entries(*se.T))
    # full = S P for every (suffix, prefix) pair
    a, b, c, d = (pe[:, k][None, :] for k in range(4))
    la, lb, lc, ld = (se[:, k][:, None] for k in range(4))
    xf = np.log(norm_entries(la * a + lb * c, la * b + lb * d, lc * a + ld * c, lc * b + ld * d))
    r = (xp[None, :] + xs[:, None] - xf).ravel()
    prob = (sp[:, None] * pp[None, :]).ravel()
    out = _moments(r, prob)
    out["mean_full"] = float(np.dot(prob, xf.ravel()))
    return out
