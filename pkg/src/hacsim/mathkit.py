"""Reference-frame transforms and angle arithmetic on the 4*pi angle space.

Two-vectors are plain ``Vec2`` named tuples so they unpack like ``(a, b)``
and interoperate with numpy.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple, Sequence

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
SQRT3_2 = math.sqrt(3.0) / 2.0


class Vec2(NamedTuple):
    """An alpha-beta or dq pair."""

    a: float
    b: float

    def norm(self) -> float:
        return math.hypot(self.a, self.b)

    def dot(self, other: Sequence[float]) -> float:
        return self.a * other[0] + self.b * other[1]

    def skew_dot(self, other: Sequence[float]) -> float:
        """``self^T J other`` with ``J = [[0, 1], [-1, 0]]``."""
        return self.a * other[1] - self.b * other[0]


class PreconditionError(ValueError):
    pass


class DomainError(ValueError):
    pass


def clarke(z_abc: Sequence[float], tol: float = 1e-9) -> Vec2:
    """Magnitude-preserving Clarke transform of a balanced three-phase triple."""
    za, zb, zc = (float(z) for z in z_abc)
    scale = max(abs(za), abs(zb), abs(zc))
    # absolute floor: subnormal inputs cannot cancel to a relative tolerance
    if abs(za + zb + zc) > tol * scale + sys.float_info.min:
        raise PreconditionError(
            f"unbalanced three-phase input: sum={za + zb + zc!r}")
    return Vec2((2.0 / 3.0) * (za - 0.5 * zb - 0.5 * zc),
                (2.0 / 3.0) * SQRT3_2 * (zb - zc))


def inverse_clarke(z: Sequence[float]) -> tuple[float, float, float]:
    a, b = z
    return (a, -0.5 * a + SQRT3_2 * b, -0.5 * a - SQRT3_2 * b)


def rotate(angle: float, z: Sequence[float]) -> Vec2:
    c, s = math.cos(angle), math.sin(angle)
    return Vec2(c * z[0] - s * z[1], s * z[0] + c * z[1])


def psi(angle: float) -> Vec2:
    return Vec2(math.cos(angle), math.sin(angle))


def to_polar(z: Sequence[float]) -> tuple[float, float]:
    mag = math.hypot(z[0], z[1])
    if mag == 0.0:
        raise DomainError("polar angle of the zero vector is undefined")
    return mag, math.atan2(z[1], z[0])


def from_polar(magnitude: float, angle: float) -> Vec2:
    return Vec2(magnitude * math.cos(angle), magnitude * math.sin(angle))


def wrap_mobius_value(raw: float) -> float:
    """Reduce ``raw`` modulo 4*pi onto [-2*pi, 2*pi)."""
    w = math.fmod(raw + TWO_PI, FOUR_PI)
    if w < 0.0:
        w += FOUR_PI
    return w - TWO_PI


def mobius_distance(a: float, b: float) -> float:
    d = abs(wrap_mobius_value(a) - wrap_mobius_value(b))
    return min(d, FOUR_PI - d)


@dataclass(frozen=True, eq=False)
class MobiusAngle:
    """An angle on [-2*pi, 2*pi] with the endpoints identified.

    Equality is tolerance based (the space is a circle of circumference
    4*pi), so instances are deliberately unhashable.
    """

    value: float
    tol: float = 1e-12

    def __post_init__(self):
        if not (-TWO_PI <= self.value <= TWO_PI):
            raise DomainError(f"{self.value!r} outside [-2pi, 2pi]")

    def distance(self, other: "MobiusAngle | float") -> float:
        ov = other.value if isinstance(other, MobiusAngle) else float(other)
        return mobius_distance(self.value, ov)

    def isclose(self, other: "MobiusAngle | float", tol: float | None = None) -> bool:
        return self.distance(other) <= (self.tol if tol is None else tol)

    def __eq__(self, other):
        if isinstance(other, (MobiusAngle, int, float)):
            return self.isclose(other)
        return NotImplemented

    __hash__ = None

    def __float__(self):
        return self.value


def wrap_mobius(raw: float) -> MobiusAngle:
    return MobiusAngle(wrap_mobius_value(float(raw)))
