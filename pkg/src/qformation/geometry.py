"""Planar vectors, angle arithmetic and the absolute/relative state transform."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

TWO_PI = 2.0 * math.pi


class DegenerateEdgeError(ValueError):
    """Two consecutive agents coincide, so their relative vector has no angle."""


def wrap_angle(theta: float) -> float:
    """Reduce ``theta`` to the representative in ``[0, 2*pi)``."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    out = math.fmod(theta, TWO_PI)
    if out < 0.0:
        out += TWO_PI
    # fmod + shift can land exactly on 2*pi for tiny negative inputs
    if out >= TWO_PI:
        out = 0.0
    return out


def signed_angle_diff(a: float, b: float) -> float:
    """Return ``a - b`` reduced to ``[-pi, pi)``."""
    d = wrap_angle(a - b + math.pi) - math.pi
    if d >= math.pi:
        d -= TWO_PI
    return d


@dataclass(frozen=True)
class CartVec:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite cartesian vector ({self.x}, {self.y})")

    def __add__(self, other: CartVec) -> CartVec:
        return CartVec(self.x + other.x, self.y + other.y)

    def __sub__(self, other: CartVec) -> CartVec:
        return CartVec(self.x - other.x, self.y - other.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def to_polar(self) -> PolarVec:
        r = self.norm()
        if r == 0.0:
            raise DegenerateEdgeError("zero-length vector has no polar angle")
        return PolarVec(r, wrap_angle(math.atan2(self.y, self.x)))


@dataclass(frozen=True)
class PolarVec:
    """Planar vector ``(r, theta)`` with ``r > 0`` and ``theta`` in ``[0, 2*pi)``."""

    r: float
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r > 0.0):
            raise ValueError(f"radius must be positive and finite, got {self.r!r}")
        if not (math.isfinite(self.theta) and 0.0 <= self.theta < TWO_PI):
            raise ValueError(f"angle must lie in [0, 2pi), got {self.theta!r}")

    @classmethod
    def wrapped(cls, r: float, theta: float) -> PolarVec:
        """Build from an arbitrary angle, wrapping it first."""
        return cls(r, wrap_angle(theta))

    def to_cart(self) -> CartVec:
        return CartVec(self.r * math.cos(self.theta), self.r * math.sin(self.theta))


class FormationState(Sequence[PolarVec]):
    """Relative positions ``y_1..y_N`` along the agent chain.

    Entry ``k`` (0-based) is the displacement from agent ``k`` to agent ``k+1``.
    """

    __slots__ = ("_rel",)

    def __init__(self, rel: Iterable[PolarVec]):
        rel = tuple(rel)
        if not rel:
            raise ValueError("a formation needs at least one relative position")
        for v in rel:
            if not isinstance(v, PolarVec):
                raise TypeError(f"expected PolarVec, got {type(v).__name__}")
        self._rel = rel

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> FormationState:
        return cls(PolarVec(float(r), float(t)) for r, t in pairs)

    def __getitem__(self, idx):  # type: ignore[override]
        if isinstance(idx, slice):
            return self._rel[idx]
        return self._rel[idx]

    def __len__(self) -> int:
        return len(self._rel)

    def __iter__(self) -> Iterator[PolarVec]:
        return iter(self._rel)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, FormationState):
            return self._rel == other._rel
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._rel)

    def __repr__(self) -> str:
        inner = ", ".join(f"({v.r:.6g}, {v.theta:.6g})" for v in self._rel)
        return f"FormationState([{inner}])"

    def replace(self, updates: dict[int, PolarVec]) -> FormationState:
        rel = list(self._rel)
        for k, v in updates.items():
            rel[k] = v
        return FormationState(rel)

    @property
    def radii(self) -> list[float]:
        return [v.r for v in self._rel]

    @property
    def angles(self) -> list[float]:
        return [v.theta for v in self._rel]


AbsState = Sequence[CartVec]


def abs_to_rel(q: AbsState) -> FormationState:
    """Convert absolute positions ``q_0..q_N`` into ``y_i = q_i - q_{i-1}``."""
    if len(q) < 2:
        raise ValueError("need at least two agents")
    rel = []
    for k in range(1, len(q)):
        try:
            rel.append((q[k] - q[k - 1]).to_polar())
        except DegenerateEdgeError:
            raise DegenerateEdgeError(f"agents {k - 1} and {k} coincide") from None
    return FormationState(rel)


def rel_to_abs(y: FormationState, anchor: CartVec = CartVec(0.0, 0.0)) -> list[CartVec]:
    """Rebuild absolute positions from relative ones, placing agent 0 at ``anchor``."""
    out = [anchor]
    x, yy = anchor.x, anchor.y
    for v in y:
        x += v.r * math.cos(v.theta)
        yy += v.r * math.sin(v.theta)
        out.append(CartVec(x, yy))
    return out
