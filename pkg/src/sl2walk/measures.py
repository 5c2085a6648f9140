"""Matrix samplers, non-stationary schedules and diagnostics for them.

Every sampler draws a batch of letters as four entry arrays ``(a, b, c, d)``.
Stream consumption is fixed per variant so that a given generator state always
produces the same letters:

* ``FiniteSupport``: one uniform per letter (categorical by inverse CDF).
* ``RotScaleRot``: three uniforms per letter (beta1, log-scale, beta2 in that
  order); Gaussian parameters use the inverse normal CDF.
* ``Conjugated``: whatever the inner sampler consumes.
* ``Mixture``: one uniform per letter for the component, then every component
  is drawn for the full batch in declaration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy.special import ndtri

from .sl2core import SL2Matrix, norm_entries, proj_action_entries, proj_distance_angles

PROB_TOL = 1e-12


class SpecError(ValueError):
    """A sampler or schedule document failed validation.

    ``violations`` holds ``(path, message)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


# --------------------------------------------------------------------------- samplers


@dataclass(frozen=True)
class ParamDist:
    """Distribution of one scalar parameter: 'uniform', 'normal' or 'const'."""

    kind: str
    p1: float
    p2: float = 0.0

    def draw(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "uniform":
            return self.p1 + (self.p2 - self.p1) * u
        if self.kind == "normal":
            return self.p1 + self.p2 * ndtri(u)
        return np.full_like(u, self.p1)

    def lerp(self, other: "ParamDist", w: float) -> "ParamDist":
        return ParamDist(self.kind, (1 - w) * self.p1 + w * other.p1, (1 - w) * self.p2 + w * other.p2)

    def to_spec(self) -> dict:
        if self.kind == "uniform":
            return {"dist": "uniform", "low": self.p1, "high": self.p2}
        if self.kind == "normal":
            return {"dist": "normal", "mean": self.p1, "std": self.p2}
        return {"dist": "const", "value": self.p1}


@dataclass(frozen=True)
class FiniteSupport:
    atoms: tuple[SL2Matrix, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise ValueError("FiniteSupport needs matching nonempty atoms and probabilities")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum {total:g}")

    @property
    def entries(self) -> np.ndarray:
        return np.array([m.to_list() for m in self.atoms])

    def sample_batch(self, rng: np.random.Generator, size: int):
        u = rng.random(size)
        cdf = np.cumsum(self.probs)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.atoms) - 1)
        e = self.entries[idx]
        return e[:, 0], e[:, 1], e[:, 2], e[:, 3]

    def to_spec(self) -> dict:
        return {
            "type": "finite_support",
            "atoms": [{"matrix": m.to_list(), "p": p} for m, p in zip(self.atoms, self.probs)],
        }


@dataclass(frozen=True)
class RotScaleRot:
    """Rot(beta1) diag(e^sigma, e^-sigma) Rot(beta2) with independent parameters."""

    beta1: ParamDist
    log_scale: ParamDist
    beta2: ParamDist

    def sample_batch(self, rng: np.random.Generator, size: int):
        u = rng.random((3, size))
        b1 = self.beta1.draw(u[0])
        sig = self.log_scale.draw(u[1])
        b2 = self.beta2.draw(u[2])
        return rot_scale_rot_entries(b1, sig, b2)

    def lerp(self, other: "RotScaleRot", w: float) -> "RotScaleRot":
        return RotScaleRot(
            self.beta1.lerp(other.beta1, w),
            self.log_scale.lerp(other.log_scale, w),
            self.beta2.lerp(other.beta2, w),
        )

    def to_spec(self) -> dict:
        return {
            "type": "rot_scale_rot",
            "beta1": self.beta1.to_spec(),
            "log_scale": self.log_scale.to_spec(),
            "beta2": self.beta2.to_spec(),
        }


@dataclass(frozen=True)
class Conjugated:
    """C X C^-1 with X drawn from ``inner``."""

    inner: "MatrixSampler"
    conjugator: SL2Matrix

    def sample_batch(self, rng: np.random.Generator, size: int):
        a, b, c, d = self.inner.sample_batch(rng, size)
        C = self.conjugator
        Ci = C.inverse()
        # (C X) then (C X) C^-1
        ta, tb = C.a * a + C.b * c, C.a * b + C.b * d
        tc, td = C.c * a + C.d * c, C.c * b + C.d * d
        return (
            ta * Ci.a + tb * Ci.c,
            ta * Ci.b + tb * Ci.d,
            tc * Ci.a + td * Ci.c,
            tc * Ci.b + td * Ci.d,
        )

    def to_spec(self) -> dict:
        return {"type": "conjugated", "inner": self.inner.to_spec(), "conjugator": self.conjugator.to_list()}


@dataclass(frozen=True)
class Mixture:
    components: tuple["MatrixSampler", ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("Mixture needs matching nonempty components and weights")
        total = math.fsum(self.weights)
        if any(w < 0 for w in self.weights) or abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"mixture weights sum {total:g}")

    def sample_batch(self, rng: np.random.Generator, size: int):
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(np.cumsum(self.weights), u, side="right"), len(self.weights) - 1)
        out = [np.empty(size) for _ in range(4)]
        for k, comp in enumerate(self.components):
            drawn = comp.sample_batch(rng, size)
            mask = idx == k
            for o, x in zip(out, drawn):
                o[mask] = x[mask]
        return tuple(out)

    def to_spec(self) -> dict:
        return {
            "type": "mixture",
            "components": [{"weight": w, "sampler": c.to_spec()} for c, w in zip(self.components, self.weights)],
        }


MatrixSampler = Union[FiniteSupport, RotScaleRot, Conjugated, Mixture]


def rot_scale_rot_entries(b1, sigma, b2):
    c1, s1 = np.cos(b1), np.sin(b1)
    c2, s2 = np.cos(b2), np.sin(b2)
    up = np.exp(sigma)
    dn = np.exp(-sigma)
    return (
        c1 * up * c2 - s1 * dn * s2,
        -c1 * up * s2 - s1 * dn * c2,
        s1 * up * c2 + c1 * dn * s2,
        -s1 * up * s2 + c1 * dn * c2,
    )


def sample(s: MatrixSampler, rng: np.random.Generator) -> SL2Matrix:
    a, b, c, d = s.sample_batch(rng, 1)
    return SL2Matrix(float(a[0]), float(b[0]), float(c[0]), float(d[0]))


# --------------------------------------------------------------------------- schedules


@dataclass(frozen=True)
class Stationary:
    sampler: MatrixSampler

    def get(self, i: int) -> MatrixSampler:
        return self.sampler

    def to_spec(self) -> dict:
        return {"type": "stationary", "sampler": self.sampler.to_spec()}


@dataclass(frozen=True)
class Periodic:
    samplers: tuple[MatrixSampler, ...]

    def get(self, i: int) -> MatrixSampler:
        return self.samplers[(i - 1) % len(self.samplers)]

    def to_spec(self) -> dict:
        return {"type": "periodic", "samplers": [s.to_spec() for s in self.samplers]}


@dataclass(frozen=True)
class Explicit:
    samplers: tuple[MatrixSampler, ...]

    def get(self, i: int) -> MatrixSampler:
        return self.samplers[min(i, len(self.samplers)) - 1]

    def to_spec(self) -> dict:
        return {"type": "explicit", "samplers": [s.to_spec() for s in self.samplers]}


@dataclass(frozen=True)
class Drifting:
    """RotScaleRot parameters interpolated between ``start`` and ``end`` over the index.

    ``mode='cosine'`` oscillates with the given period (weight 0 at i = 1);
    ``mode='linear'`` moves from start at i = 1 to end at i = period, then holds.
    Parameters stay in the segment between the two endpoints, so the family
    of letter distributions is compact.
    """

    start: RotScaleRot
    end: RotScaleRot
    period: int
    mode: str = "cosine"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def weight(self, i: int) -> float:
        if self.mode == "linear":
            if self.period <= 1:
                return 1.0
            return min(1.0, (i - 1) / (self.period - 1))
        return 0.5 * (1.0 - math.cos(2.0 * math.pi * (i - 1) / self.period))

    def get(self, i: int) -> MatrixSampler:
        key = min(i, self.period) if self.mode == "linear" else (i - 1) % self.period
        hit = self._cache.get(key)
        if hit is None:
            hit = self.start.lerp(self.end, self.weight(i))
            self._cache[key] = hit
        return hit

    def to_spec(self) -> dict:
        return {
            "type": "drifting",
            "start": self.start.to_spec(),
            "end": self.end.to_spec(),
            "period": self.period,
            "mode": self.mode,
        }


Schedule = Union[Stationary, Periodic, Explicit, Drifting]


def schedule_get(sch: Schedule, i: int) -> MatrixSampler:
    if i < 1:
        raise IndexError(f"schedule indices start at 1, got {i}")
    return sch.get(i)


def draw_letters(sch: Schedule, i: int, rng: np.random.Generator, size: int):
    """Batch of ``size`` independent letters A_i."""
    return schedule_get(sch, i).sample_batch(rng, size)


# --------------------------------------------------------------------------- diagnostics


class Estimate(NamedTuple):
    value: float
    se: float
    count: int


def log_norm_moment(s: MatrixSampler, gamma: float, trials: int, rng: np.random.Generator) -> Estimate:
    """Monte Carlo estimate of E (log ||A||)^gamma with its standard error."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a, b, c, d = s.sample_batch(rng, trials)
    ln = np.maximum(np.log(np.maximum(norm_entries(a, b, c, d), 1.0)), 0.0)
    vals = ln**gamma
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return Estimate(float(vals.mean()), se, trials)


class ProbeResult(NamedTuple):
    score: float
    initial_dispersion: float
    isometric: bool
    verdict: str  # "ok", "collapsed" or "isometric"
    threshold: float


PROBE_THRESHOLD = 0.05


def _mean_pairwise(angles: np.ndarray) -> np.ndarray:
    """Mean pairwise angle distance along the last axis."""
    k = angles.shape[-1]
    d = proj_distance_angles(angles[..., :, None], angles[..., None, :])
    return d.sum(axis=(-1, -2)) / (k * (k - 1))


def probe_schedule(
    sch: Schedule,
    points: int = 16,
    iterations: int = 32,
    rng: np.random.Generator | None = None,
    words: int = 16,
    threshold: float = PROBE_THRESHOLD,
) -> ProbeResult:
    """Heuristic screen for the measures condition.

    For each of ``points`` equally spaced start directions, push it through
    ``words`` independent random words of length ``iterations`` and measure the
    mean pairwise distance between the resulting images. The score averages
    this over start directions. Deterministic images (single matrices, common
    attracting directions of commuting letters) drive it to 0. A separate
    check flags isometric schedules, whose letters all have norm 1.
    """
    if points < 2:
        raise ValueError("points must be >= 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    start = np.arange(points) * (math.pi / points)
    theta = np.broadcast_to(start[:, None], (points, words)).copy()
    max_log_norm = 0.0
    for i in range(1, iterations + 1):
        a, b, c, d = draw_letters(sch, i, rng, words)
        max_log_norm = max(max_log_norm, float(np.log(norm_entries(a, b, c, d)).max()))
        theta = proj_action_entries(a[None, :], b[None, :], c[None, :], d[None, :], theta)
    score = float(_mean_pairwise(theta).mean())
    initial = float(_mean_pairwise(start))
    isometric = max_log_norm < 1e-12
    if isometric:
        verdict = "isometric"
    elif score < threshold:
        verdict = "collapsed"
    else:
        verdict = "ok"
    return ProbeResult(score, initial, isometric, verdict, threshold)


def invariant_measure_probe(
    s: MatrixSampler, points: int = 16, iterations: int = 32, rng: np.random.Generator | None = None, **kw
) -> ProbeResult:
    return probe_schedule(Stationary(s), points, iterations, rng, **kw)


# --------------------------------------------------------------------------- documents


def _matrix(doc, path, errs):
    if not isinstance(doc, (list, tuple)) or len(doc) != 4:
        errs.append((path, "matrix must be a 4-element array [a, b, c, d]"))
        return None
    try:
        return SL2Matrix.from_list(doc)
    except (TypeError, ValueError) as exc:
        errs.append((path, str(exc)))
        return None


def _param(doc, path, errs):
    if not isinstance(doc, dict) or "dist" not in doc:
        errs.append((path, "expected an object with a 'dist' field"))
        return None
    kind = doc["dist"]
    keys = {"uniform": ("low", "high"), "normal": ("mean", "std"), "const": ("value",)}.get(kind)
    if keys is None:
        errs.append((f"{path}.dist", f"unknown distribution {kind!r}"))
        return None
    vals = []
    for k in keys:
        v = doc.get(k)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            errs.append((f"{path}.{k}", "must be a finite number"))
            return None
        vals.append(float(v))
    if kind == "uniform" and vals[1] < vals[0]:
        errs.append((path, "uniform needs low <= high"))
    if kind == "normal" and vals[1] < 0:
        errs.append((f"{path}.std", "must be nonnegative"))
    return ParamDist(kind, *vals)


def _sampler(doc, path, errs):
    if not isinstance(doc, dict):
        errs.append((path, "sampler must be an object"))
        return None
    kind = doc.get("type")
    if kind == "finite_support":
        atoms = doc.get("atoms")
        if not isinstance(atoms, list) or not atoms:
            errs.append((f"{path}.atoms", "must be a nonempty array"))
            return None
        mats, probs = [], []
        for k, atom in enumerate(atoms):
            apath = f"{path}.atoms[{k}]"
            if not isinstance(atom, dict):
                errs.append((apath, "atom must be an object {matrix, p}"))
                return None
            mats.append(_matrix(atom.get("matrix"), f"{apath}.matrix", errs))
            p = atom.get("p")
            if not isinstance(p, (int, float)) or isinstance(p, bool) or p < 0:
                errs.append((f"{apath}.p", "probability must be a nonnegative number"))
                p = 0.0
            probs.append(float(p))
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            errs.append((f"{path}.atoms", f"probabilities sum {total:g}"))
            return None
        if any(m is None for m in mats):
            return None
        return FiniteSupport(tuple(mats), tuple(probs))
    if kind == "rot_scale_rot":
        parts = [_param(doc.get(k), f"{path}.{k}", errs) for k in ("beta1", "log_scale", "beta2")]
        return None if any(p is None for p in parts) else RotScaleRot(*parts)
    if kind == "conjugated":
        inner = _sampler(doc.get("inner"), f"{path}.inner", errs)
        conj = _matrix(doc.get("conjugator"), f"{path}.conjugator", errs)
        return None if inner is None or conj is None else Conjugated(inner, conj)
    if kind == "mixture":
        comps = doc.get("components")
        if not isinstance(comps, list) or not comps:
            errs.append((f"{path}.components", "must be a nonempty array"))
            return None
        samplers, weights = [], []
        for k, comp in enumerate(comps):
            cpath = f"{path}.components[{k}]"
            if not isinstance(comp, dict):
                errs.append((cpath, "component must be an object {weight, sampler}"))
                return None
            w = comp.get("weight")
            if not isinstance(w, (int, float)) or isinstance(w, bool) or w < 0:
                errs.append((f"{cpath}.weight", "weight must be a nonnegative number"))
                w = 0.0
            weights.append(float(w))
            samplers.append(_sampler(comp.get("sampler"), f"{cpath}.sampler", errs))
        total = math.fsum(weights)
        if abs(total - 1.0) > PROB_TOL:
            errs.append((f"{path}.components", f"weights sum {total:g}"))
            return None
        if any(s is None for s in samplers):
            return None
        return Mixture(tuple(samplers), tuple(weights))
    errs.append((f"{path}.type", f"unknown sampler type {kind!r}"))
    return None


def _sampler_list(doc, path, errs):
    if not isinstance(doc, list) or not doc:
        errs.append((path, "must be a nonempty array of samplers"))
        return None
    out = [_sampler(s, f"{path}[{k}]", errs) for k, s in enumerate(doc)]
    return None if any(s is None for s in out) else tuple(out)


def _schedule(doc, path, errs):
    if not isinstance(doc, dict):
        errs.append((path, "schedule must be an object"))
        return None
    kind = doc.get("type")
    if kind == "stationary":
        s = _sampler(doc.get("sampler"), f"{path}.sampler", errs)
        return None if s is None else Stationary(s)
    if kind in ("periodic", "explicit"):
        ss = _sampler_list(doc.get("samplers"), f"{path}.samplers", errs)
        if ss is None:
            return None
        return Periodic(ss) if kind == "periodic" else Explicit(ss)
    if kind == "drifting":
        ends = []
        for k in ("start", "end"):
            s = _sampler(doc.get(k), f"{path}.{k}", errs)
            if s is not None and not isinstance(s, RotScaleRot):
                errs.append((f"{path}.{k}", "drifting endpoints must be rot_scale_rot samplers"))
                s = None
            ends.append(s)
        period = doc.get("period")
        if not isinstance(period, int) or isinstance(period, bool) or period < 1:
            errs.append((f"{path}.period", "must be a positive integer"))
            return None
        mode = doc.get("mode", "cosine")
        if mode not in ("cosine", "linear"):
            errs.append((f"{path}.mode", f"unknown mode {mode!r}"))
            return None
        if any(e is None for e in ends):
            return None
        for name in ("beta1", "log_scale", "beta2"):
            if getattr(ends[0], name).kind != getattr(ends[1], name).kind:
                errs.append((f"{path}.end.{name}", "must use the same distribution kind as start"))
                return None
        return Drifting(ends[0], ends[1], period, mode)
    errs.append((f"{path}.type", f"unknown schedule type {kind!r}"))
    return None


def sampler_from_spec(doc, path: str = "sampler") -> MatrixSampler:
    errs: list = []
    s = _sampler(doc, path, errs)
    if errs:
        raise SpecError(errs)
    return s


def schedule_from_spec(doc, path: str = "schedule") -> Schedule:
    """Parse the ``{"type": ...}`` body of a schedule document."""
    errs: list = []
    s = _schedule(doc, path, errs)
    if errs:
        raise SpecError(errs)
    return s


# --------------------------------------------------------------------------- presets

_UNIFORM_ANGLE = {"dist": "uniform", "low": 0.0, "high": math.pi}

# Two-atom measures never satisfy the measures condition strictly (an
# eigendirection of B^-1 A has a deterministic image), but the pair below is
# strongly irreducible and non-compact, so the exponent is positive; it exists
# for exhaustive enumeration.
PRESETS: dict[str, dict] = {
    "rot-hyp": {
        "type": "stationary",
        "sampler": {
            "type": "rot_scale_rot",
            "beta1": _UNIFORM_ANGLE,
            "log_scale": {"dist": "const", "value": math.log(2.0)},
            "beta2": _UNIFORM_ANGLE,
        },
    },
    "bernoulli-2x2": {
        "type": "stationary",
        "sampler": {
            "type": "finite_support",
            "atoms": [
                {"matrix": [2.0, 1.0, 1.0, 1.0], "p": 0.5},
                {"matrix": [1.0, 0.0, -1.0, 1.0], "p": 0.5},
            ],
        },
    },
    "drift": {
        "type": "drifting",
        "start": {
            "type": "rot_scale_rot",
            "beta1": _UNIFORM_ANGLE,
            "log_scale": {"dist": "uniform", "low": 0.2, "high": 0.4},
            "beta2": {"dist": "uniform", "low": 0.0, "high": 1.0},
        },
        "end": {
            "type": "rot_scale_rot",
            "beta1": _UNIFORM_ANGLE,
            "log_scale": {"dist": "uniform", "low": 0.8, "high": 1.2},
            "beta2": _UNIFORM_ANGLE,
        },
        "period": 64,
        "mode": "cosine",
    },
    "degenerate-rotation": {
        "type": "stationary",
        "sampler": {
            "type": "rot_scale_rot",
            "beta1": _UNIFORM_ANGLE,
            "log_scale": {"dist": "const", "value": 0.0},
            "beta2": {"dist": "const", "value": 0.0},
        },
    },
    "commuting-diag": {
        "type": "stationary",
        "sampler": {
            "type": "finite_support",
            "atoms": [
                {"matrix": [2.0, 0.0, 0.0, 0.5], "p": 0.5},
                {"matrix": [3.0, 0.0, 0.0, 1.0 / 3.0], "p": 0.5},
            ],
        },
    },
}


def preset(name: str) -> Schedule:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return schedule_from_spec(PRESETS[name])


__all__ = [
    "ParamDist", "FiniteSupport", "RotScaleRot", "Conjugated", "Mixture", "MatrixSampler",
    "Stationary", "Periodic", "Explicit", "Drifting", "Schedule", "SpecError", "Estimate",
    "ProbeResult", "sample", "schedule_get", "draw_letters", "log_norm_moment",
    "invariant_measure_probe", "probe_schedule", "sampler_from_spec", "schedule_from_spec",
    "PRESETS", "preset", "rot_scale_rot_entries",
]
