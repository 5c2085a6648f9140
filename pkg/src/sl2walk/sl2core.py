"""Linear algebra on SL(2, R): norms, singular decomposition, projective action.

The entry-level helpers (``norm_entries``, ``theta_loss_entries``, ...) accept
floats or numpy arrays interchangeably, so the batched simulations in
:mod:`sl2walk.cocycle` share the exact arithmetic used by the scalar API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DET_TOL = 1e-9
PI = math.pi


class NotSL2Error(ValueError):
    """Raised when entries do not describe a finite determinant-one matrix."""


def norm_entries(a, b, c, d):
    """Largest singular value of ``[[a, b], [c, d]]`` (any 2x2 matrix).

    Uses ``s_max = (|z1| + |z2|) / 2`` with ``z1 = (a+d, c-b)`` and
    ``z2 = (a-d, c+b)``; both radicands are sums of squares, so there is no
    cancellation near rotations or near rank one.
    """
    q = np.hypot(a + d, c - b)
    r = np.hypot(a - d, c + b)
    return 0.5 * (q + r)


def svd_entries(a, b, c, d):
    """Return ``(phi, s_max, s_min, theta)`` with M = Rot(phi) diag(s_max, s_min) Rot(theta).

    ``s_min`` is signed (negative when det < 0). Works on scalars or arrays.
    """
    e = 0.5 * (a + d)
    f = 0.5 * (a - d)
    g = 0.5 * (c + b)
    h = 0.5 * (c - b)
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    a1 = np.arctan2(g, f)
    a2 = np.arctan2(h, e)
    return 0.5 * (a2 + a1), q + r, q - r, 0.5 * (a2 - a1)


def theta_loss_entries(a, b, c, d, vx, vy):
    """Expansion loss log(||B|| |v|) - log|Bv| for B = [[a, b], [c, d]].

    Evaluated through the singular decomposition so the result stays accurate
    when v sits close to the most contracted direction.
    """
    _, s, s_min, theta = svd_entries(a, b, c, d)
    # angle of Rot(theta) v measured from the top right-singular axis
    phi = np.arctan2(vy, vx) + theta
    ratio = s_min / s
    cos2 = np.cos(phi) ** 2
    inner = cos2 + (ratio * ratio) * (1.0 - cos2)
    return -0.5 * np.log(inner)


def angle_mod_pi(theta):
    """Reduce angles into [0, pi)."""
    t = np.mod(theta, PI)
    return np.where(t >= PI, t - PI, t) if isinstance(t, np.ndarray) else (t - PI if t >= PI else t)


def proj_action_entries(a, b, c, d, theta):
    """Projectivised action of [[a, b], [c, d]] on angles (mod pi)."""
    x = np.cos(theta)
    y = np.sin(theta)
    return angle_mod_pi(np.arctan2(c * x + d * y, a * x + b * y))


def proj_distance_angles(p, q):
    """Angle metric on RP^1 with period pi; values lie in [0, pi/2]."""
    delta = np.abs(np.mod(p - q, PI))
    return np.minimum(delta, PI - delta)


@dataclass(frozen=True)
class SL2Matrix:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        entries = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(x) for x in entries):
            raise NotSL2Error(f"non-finite entries {entries}")
        det = self.a * self.d - self.b * self.c
        if abs(det - 1.0) > DET_TOL:
            raise NotSL2Error(f"determinant {det!r} is not 1 within {DET_TOL}")

    @classmethod
    def from_list(cls, entries) -> "SL2Matrix":
        a, b, c, d = (float(x) for x in entries)
        return cls(a, b, c, d)

    @classmethod
    def identity(cls) -> "SL2Matrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def rot(cls, beta: float) -> "SL2Matrix":
        cb, sb = math.cos(beta), math.sin(beta)
        return cls(cb, -sb, sb, cb)

    @classmethod
    def diag(cls, s: float) -> "SL2Matrix":
        return cls(s, 0.0, 0.0, 1.0 / s)

    @classmethod
    def rot_diag_rot(cls, beta1: float, s: float, beta2: float) -> "SL2Matrix":
        return multiply(multiply(cls.rot(beta1), cls.diag(s)), cls.rot(beta2))

    def to_list(self) -> list[float]:
        return [self.a, self.b, self.c, self.d]

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def inverse(self) -> "SL2Matrix":
        return SL2Matrix(self.d, -self.b, -self.c, self.a)

    def apply(self, v) -> tuple[float, float]:
        x, y = v
        return (self.a * x + self.b * y, self.c * x + self.d * y)

    def __matmul__(self, other: "SL2Matrix") -> "SL2Matrix":
        return multiply(self, other)


@dataclass(frozen=True)
class ProjectivePoint:
    """A direction in RP^1, stored as its angle in [0, pi)."""

    theta: float

    def __post_init__(self):
        if not (0.0 <= self.theta < PI):
            raise ValueError(f"theta {self.theta!r} outside [0, pi)")

    @classmethod
    def from_angle(cls, theta: float) -> "ProjectivePoint":
        return cls(float(angle_mod_pi(float(theta))))

    def vector(self) -> tuple[float, float]:
        return (math.cos(self.theta), math.sin(self.theta))


@dataclass(frozen=True)
class RotDiagRot:
    """Normal form Rot(beta1) diag(s, 1/s) Rot(beta2) of an SL(2, R) matrix.

    Canonical ranges: beta1 in [0, 2 pi), beta2 in [0, pi), s >= 1, and
    beta2 = 0 for rotations.
    """

    beta1: float
    s: float
    beta2: float

    def recompose(self) -> SL2Matrix:
        return SL2Matrix.rot_diag_rot(self.beta1, self.s, self.beta2)


def multiply(A: SL2Matrix, B: SL2Matrix) -> SL2Matrix:
    prod = SL2Matrix.__new__(SL2Matrix)
    entries = (
        A.a * B.a + A.b * B.c,
        A.a * B.b + A.b * B.d,
        A.c * B.a + A.d * B.c,
        A.c * B.b + A.d * B.d,
    )
    if not all(math.isfinite(x) for x in entries):
        raise OverflowError("matrix product overflowed; use a ScaledProduct for long words")
    for name, value in zip("abcd", entries):
        object.__setattr__(prod, name, value)
    if abs(prod.det - 1.0) > 1e-8:
        raise NotSL2Error(f"product determinant {prod.det!r} drifted from 1")
    return prod


def operator_norm(A: SL2Matrix) -> float:
    return max(1.0, float(norm_entries(A.a, A.b, A.c, A.d)))


_ROTATION_TOL = 1e-15


def _mod_2pi(x: float) -> float:
    t = float(np.mod(x, 2 * PI))
    return 0.0 if t >= 2 * PI else t  # np.mod(-tiny, 2 pi) rounds to 2 pi


def decompose(A: SL2Matrix) -> RotDiagRot:
    """Singular normal form of ``A`` in the canonical ranges of :class:`RotDiagRot`."""
    phi, s, _, theta = svd_entries(A.a, A.b, A.c, A.d)
    phi, s, theta = float(phi), float(s), float(theta)
    if np.hypot(A.a - A.d, A.c + A.b) <= _ROTATION_TOL * s:
        return RotDiagRot(_mod_2pi(phi + theta), 1.0, 0.0)
    s = max(s, 1.0)
    # Rot(b1 + pi) D Rot(b2 + pi) = Rot(b1) D Rot(b2): shift both to bring beta2 into [0, pi)
    beta2 = _mod_2pi(theta)
    if beta2 >= PI:
        phi += PI
        beta2 -= PI
    return RotDiagRot(_mod_2pi(phi), s, beta2)


def project(v) -> ProjectivePoint:
    x, y = float(v[0]), float(v[1])
    if x == 0.0 and y == 0.0:
        raise ValueError("the zero vector has no direction")
    return ProjectivePoint(float(angle_mod_pi(math.atan2(y, x))))


def proj_action(A: SL2Matrix, p: ProjectivePoint) -> ProjectivePoint:
    return ProjectivePoint(float(proj_action_entries(A.a, A.b, A.c, A.d, p.theta)))


def proj_distance(p: ProjectivePoint, q: ProjectivePoint) -> float:
    return float(proj_distance_angles(p.theta, q.theta))


def theta_loss(B: SL2Matrix, v) -> float:
    """Loss of expansion of ``v`` under ``B`` relative to ``||B||``; lies in [0, 2 log ||B||]."""
    vx, vy = float(v[0]), float(v[1])
    if vx == 0.0 and vy == 0.0:
        raise ValueError("theta_loss needs a nonzero vector")
    loss = float(theta_loss_entries(B.a, B.b, B.c, B.d, vx, vy))
    return max(loss, 0.0)
