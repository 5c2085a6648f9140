"""Streaming moments, empirical distribution diagnostics and the N_rho functional."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr


# --------------------------------------------------------------------------- moments


@dataclass(frozen=True)
class MomentAccumulator:
    """Count, mean and the sums of squared / cubed deviations from the mean."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0

    @classmethod
    def from_values(cls, values) -> "MomentAccumulator":
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return cls()
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite value")
        mu = float(x.mean())
        dev = x - mu
        return cls(int(x.size), mu, float(np.dot(dev, dev)), float(np.sum(dev**3)))

    @property
    def variance(self) -> float:
        """Population variance m2 / count."""
        return self.m2 / self.count if self.count else math.nan

    @property
    def sample_variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def third_central(self) -> float:
        return self.m3 / self.count if self.count else math.nan

    @property
    def skewness(self) -> float:
        v = self.variance
        return self.third_central / v**1.5 if v > 0 else math.nan

    @property
    def mean_se(self) -> float:
        return math.sqrt(self.sample_variance / self.count) if self.count > 1 else math.inf


def acc_push(acc: MomentAccumulator, x: float) -> MomentAccumulator:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r}")
    n1 = acc.count
    n = n1 + 1
    delta = x - acc.mean
    dn = delta / n
    term = delta * dn * n1
    return MomentAccumulator(
        n,
        acc.mean + dn,
        acc.m2 + term,
        acc.m3 + term * dn * (n - 2) - 3.0 * dn * acc.m2,
    )


def acc_merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    mean = a.mean + delta * nb / n
    m2 = a.m2 + b.m2 + delta * delta * na * nb / n
    m3 = (
        a.m3
        + b.m3
        + delta**3 * na * nb * (na - nb) / (n * n)
        + 3.0 * delta * (na * b.m2 - nb * a.m2) / n
    )
    return MomentAccumulator(n, mean, m2, m3)


def jackknife_variance(values, groups: int = 20) -> tuple[float, float]:
    """Sample variance and its delete-a-group jackknife standard error."""
    x = np.asarray(values, dtype=float)
    var = float(x.var(ddof=1))
    g = min(groups, x.size)
    if g < 2:
        return var, math.inf
    blocks = [MomentAccumulator.from_values(b) for b in np.array_split(x, g)]
    total = blocks[0]
    for blk in blocks[1:]:
        total = acc_merge(total, blk)
    reps = []
    for k in range(g):
        rest = MomentAccumulator()
        for j, blk in enumerate(blocks):
            if j != k:
                rest = acc_merge(rest, blk)
        reps.append(rest.sample_variance)
    reps = np.array(reps)
    se = math.sqrt((g - 1) / g * float(np.sum((reps - reps.mean()) ** 2)))
    return var, se


# --------------------------------------------------------------------------- empirical distributions


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    values: np.ndarray

    @classmethod
    def from_values(cls, values) -> "EmpiricalSample":
        x = np.sort(np.asarray(values, dtype=float).ravel())
        return cls(x)

    @property
    def count(self) -> int:
        return int(self.values.size)

    def standardized(self) -> "EmpiricalSample":
        """Plug-in standardisation by the sample mean and (population) SD."""
        sd = float(self.values.std())
        if sd == 0.0:
            raise ValueError("degenerate sample: zero spread")
        return EmpiricalSample((self.values - self.values.mean()) / sd)


def standardize(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    sd = float(x.std())
    if sd == 0.0:
        raise ValueError("degenerate sample: zero spread")
    return (x - x.mean()) / sd


def normal_cdf(x):
    """Standard normal CDF (scipy ``ndtr``, absolute error well below 1e-7)."""
    return ndtr(x)


def ks_distance(s: EmpiricalSample) -> float:
    """Kolmogorov-Smirnov distance between the sample and N(0, 1)."""
    n = s.count
    if n == 0:
        raise ValueError("empty sample")
    cdf = normal_cdf(s.values)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def tail_prob(s: EmpiricalSample, x: float) -> float:
    """Fraction of the sample strictly greater than ``x``."""
    if s.count == 0:
        raise ValueError("empty sample")
    return float(s.count - np.searchsorted(s.values, x, side="right")) / s.count


# --------------------------------------------------------------------------- characteristic functions


class GridTooCoarseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CharFnGrid:
    t_grid: np.ndarray
    phi_re: np.ndarray
    phi_im: np.ndarray
    count: int

    @property
    def phi(self) -> np.ndarray:
        return self.phi_re + 1j * self.phi_im

    @classmethod
    def from_function(cls, t_grid, fn) -> "CharFnGrid":
        """Grid filled with exact values of an analytic characteristic function."""
        t = np.asarray(t_grid, dtype=float)
        vals = np.asarray(fn(t), dtype=complex)
        vals = np.where(t == 0.0, 1.0 + 0j, vals)
        return cls(t, vals.real.copy(), vals.imag.copy(), 0)


def make_t_grid(rho: float, points: int = 257) -> np.ndarray:
    """Symmetric grid on [-rho, rho] including 0 (``points`` odd)."""
    if points < 3 or points % 2 == 0:
        raise ValueError("points must be odd and >= 3")
    half = np.linspace(0.0, rho, points // 2 + 1)
    return np.concatenate([-half[:0:-1], half])


def _check_grid(t: np.ndarray) -> None:
    if t.ndim != 1 or t.size < 3 or np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be strictly increasing")
    if not np.allclose(t, -t[::-1], rtol=0, atol=1e-12) or 0.0 not in t:
        raise ValueError("t grid must be symmetric about 0 and contain 0")


_CF_CHUNK = 1 << 15


def empirical_cf(s: EmpiricalSample, t_grid) -> CharFnGrid:
    """phi(t) = mean of exp(i t x_j), evaluated on t >= 0 and mirrored by conjugation."""
    t = np.asarray(t_grid, dtype=float)
    _check_grid(t)
    if s.count == 0:
        raise ValueError("empty sample")
    zero = int(np.flatnonzero(t == 0.0)[0])
    tp = t[zero:]
    re = np.zeros(tp.size)
    im = np.zeros(tp.size)
    x = s.values
    step = np.diff(tp)
    uniform = step.size > 0 and np.allclose(step, step[0], rtol=1e-12, atol=0)
    for lo in range(0, x.size, _CF_CHUNK):
        xc = x[lo : lo + _CF_CHUNK]
        if uniform:
            # e^{i k h x} by repeated multiplication: one complex exponential per sample
            z = np.exp(1j * step[0] * xc)
            w = np.ones_like(z)
            for k in range(tp.size):
                acc = w.sum()
                re[k] += acc.real
                im[k] += acc.imag
                w *= z
        else:
            arg = np.outer(xc, tp)
            re += np.cos(arg).sum(axis=0)
            im += np.sin(arg).sum(axis=0)
    re /= x.size
    im /= x.size
    re[0], im[0] = 1.0, 0.0
    full_re = np.concatenate([re[:0:-1], re])
    full_im = np.concatenate([-im[:0:-1], im])
    return CharFnGrid(t, full_re, full_im, s.count)


def log_gauss_ratio(cf: CharFnGrid, rho: float, floor: float = 1e-6):
    """Continuous branch of log(phi(t) e^{t^2/2}) on the grid points 0 <= t < rho.

    Returns ``(t, g)``; ``g`` is None when |phi| drops below ``floor`` or
    phi changes sign between neighbours. The phase is unwrapped outward from
    g(0) = 0; any other increment above pi/2 between neighbours means the grid
    cannot resolve the branch.
    """
    t = cf.t_grid
    _check_grid(t)
    sel = (t >= 0.0) & (t < rho)
    tt = t[sel]
    phi = cf.phi[sel]
    inside = t[(t > -rho) & (t < rho)]
    spacing = float(np.max(np.diff(inside))) if inside.size > 1 else math.inf
    if spacing > rho / 64 * (1 + 1e-9) or tt[-1] < rho * (1 - 1 / 64) - 1e-12:
        raise ValueError(f"grid must cover (-rho, rho) with spacing <= rho/64 (rho={rho})")
    mod = np.abs(phi)
    if np.any(mod < floor):
        return tt, None
    steps = np.angle(phi[1:] * np.conj(phi[:-1]))
    jumps = np.abs(steps) > math.pi / 2
    if np.any(jumps):
        # |phi'| <= E|X| <= 1 for a standardized variable, so a zero between
        # two points forces both moduli below the spacing; otherwise the grid
        # is too coarse to follow the phase
        low = np.minimum(mod[1:], mod[:-1]) <= np.diff(tt)
        if np.all(low[jumps]):
            return tt, None
        raise GridTooCoarseError("phase jump above pi/2 between neighbouring grid points")
    phase = np.concatenate([[0.0], np.cumsum(steps)])
    g = np.log(mod) + 0.5 * tt * tt + 1j * phase
    return tt, g


def n_rho(cf: CharFnGrid, rho: float, floor: float = 1e-6) -> float:
    """Grid estimate of sup_{0<|t|<rho} |log(phi(t) e^{t^2/2})| / |t|^3.

    Returns ``math.inf`` when the characteristic function (numerically)
    vanishes inside the window, where the logarithm has no continuous branch.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    tt, g = log_gauss_ratio(cf, rho, floor)
    if g is None:
        return math.inf
    pos = tt > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(np.abs(g[pos]) / tt[pos] ** 3))


def n_rho_standardized(values, rho: float, points: int = 257, floor: float = 1e-6) -> float:
    """N'_rho of a raw sample: standardise by sample moments, then n_rho."""
    s = EmpiricalSample.from_values(standardize(values))
    return n_rho(empirical_cf(s, make_t_grid(rho, points)), rho, floor)
