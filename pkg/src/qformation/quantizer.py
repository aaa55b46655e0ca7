"""Logarithmic polar quantizer and its group operators.

Radii live on the multiplicative grid ``{a**k}`` and angles on
``{k * 2*pi/M}``.  Every radial quantity is handled in log space so that
extreme indices never overflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

from .geometry import TWO_PI, PolarVec, wrap_angle

# log-space distance under which a value counts as sitting exactly on a
# half-step boundary (tie) or exactly on a grid point
TIE_TOL = 1e-9
GRID_TOL = 1e-9

ANGLE_MEANS = ("signed", "literal")


def round_half_away(x: float) -> int:
    """Nearest integer, ties (within ``TIE_TOL``) broken away from zero.

    Symmetric: ``round_half_away(-x) == -round_half_away(x)``.
    """
    f = math.floor(x)
    frac = x - f
    if frac > 0.5 + TIE_TOL:
        return int(f) + 1
    if frac < 0.5 - TIE_TOL:
        return int(f)
    return int(f) + 1 if f + 0.5 > 0.0 else int(f)


@dataclass(frozen=True)
class QuantizerConfig:
    """Step radius ``a``, sector count ``M`` and gossip weight ``omega``.

    ``angle_mean`` picks the representative of the angular difference that
    gets scaled by ``omega``: ``"signed"`` uses the shortest rotation in
    ``(-pi, pi]``; ``"literal"`` uses the ``[0, 2*pi)`` representative.
    """

    a: float
    M: int
    omega: float = 0.618
    angle_mean: str = "signed"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and self.a > 1.0):
            raise ValueError(f"step radius a must exceed 1, got {self.a!r}")
        if isinstance(self.M, bool) or int(self.M) != self.M or self.M < 2:
            raise ValueError(f"sector count M must be an integer >= 2, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))
        if not (0.5 < self.omega < 0.75):
            raise ValueError(f"omega must lie in (1/2, 3/4), got {self.omega!r}")
        if self.angle_mean not in ANGLE_MEANS:
            raise ValueError(f"angle_mean must be one of {ANGLE_MEANS}, got {self.angle_mean!r}")

    @property
    def log_a(self) -> float:
        return math.log(self.a)

    @property
    def theta_b(self) -> float:
        """Step angle ``2*pi/M``."""
        return TWO_PI / self.M

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.angle_mean == "signed":
            del d["angle_mean"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> QuantizerConfig:
        unknown = set(d) - {"a", "M", "omega", "angle_mean"}
        if unknown:
            raise ValueError(f"unknown quantizer keys: {sorted(unknown)}")
        return cls(
            a=float(d["a"]),
            M=d["M"],
            omega=float(d.get("omega", 0.618)),
            angle_mean=d.get("angle_mean", "signed"),
        )

    @classmethod
    def from_json(cls, text: str) -> QuantizerConfig:
        return cls.from_dict(json.loads(text))


def _check_radius(r: float) -> None:
    if not (math.isfinite(r) and r > 0.0):
        raise ValueError(f"radius must be positive and finite, got {r!r}")


def index_r(cfg: QuantizerConfig, r: float) -> int:
    _check_radius(r)
    return round_half_away(math.log(r) / cfg.log_a)


def quantize_r(cfg: QuantizerConfig, r: float) -> float:
    return math.exp(index_r(cfg, r) * cfg.log_a)


def radius_at(cfg: QuantizerConfig, k: int) -> float:
    """Grid radius ``a**k``."""
    return math.exp(k * cfg.log_a)


def index_theta(cfg: QuantizerConfig, theta: float) -> int:
    if not (math.isfinite(theta) and 0.0 <= theta < TWO_PI):
        raise ValueError(f"angle must lie in [0, 2pi), got {theta!r}")
    return round_half_away(theta / cfg.theta_b) % cfg.M


def quantize_theta(cfg: QuantizerConfig, theta: float) -> float:
    return index_theta(cfg, theta) * cfg.theta_b


def angle_at(cfg: QuantizerConfig, k: int) -> float:
    """Grid angle ``(k mod M) * theta_b``."""
    return (k % cfg.M) * cfg.theta_b


def diff_r(r_i: float, r_j: float) -> float:
    return r_i / r_j


def mean_omega_r(cfg: QuantizerConfig, r_i: float, r_j: float) -> float:
    """Weighted geometric mean ``r_i**(1-omega) * r_j**omega``."""
    _check_radius(r_i)
    _check_radius(r_j)
    w = cfg.omega
    return math.exp((1.0 - w) * math.log(r_i) + w * math.log(r_j))


def diff_theta(theta_i: float, theta_j: float) -> float:
    """Group difference ``theta_i - theta_j`` in ``[0, 2*pi)``."""
    return wrap_angle(theta_i - theta_j)


def _difference_rep(cfg: QuantizerConfig, d: float) -> float:
    # d is in [0, 2pi); grid arithmetic leaves it within ~1e-14 of k*theta_b
    eps = GRID_TOL * cfg.theta_b
    if d > TWO_PI - eps:
        d = 0.0
    if cfg.angle_mean == "signed" and d > math.pi + eps:
        d -= TWO_PI
    return d


def mean_omega_theta(cfg: QuantizerConfig, theta_i: float, theta_j: float) -> float:
    """Move ``theta_i`` a fraction ``omega`` of the way toward ``theta_j``."""
    d = _difference_rep(cfg, diff_theta(theta_j, theta_i))
    return wrap_angle(theta_i + cfg.omega * d)


def on_grid_r(cfg: QuantizerConfig, r: float) -> bool:
    _check_radius(r)
    x = math.log(r) / cfg.log_a
    return abs(x - round(x)) < GRID_TOL


def on_grid_theta(cfg: QuantizerConfig, theta: float) -> bool:
    x = theta / cfg.theta_b
    return abs(x - round(x)) < GRID_TOL


def on_grid(cfg: QuantizerConfig, y: PolarVec) -> bool:
    return on_grid_r(cfg, y.r) and on_grid_theta(cfg, y.theta)


def quantize(cfg: QuantizerConfig, y: PolarVec) -> PolarVec:
    return PolarVec(quantize_r(cfg, y.r), quantize_theta(cfg, y.theta))


def pc_holds(cfg: QuantizerConfig, y_true: PolarVec, y_hat: PolarVec) -> bool:
    """Whether the perceived value quantizes onto the (on-grid) true value."""
    if not on_grid(cfg, y_true):
        raise ValueError(f"true position {y_true} is not on the quantizer grid")
    k_r = round(math.log(y_true.r) / cfg.log_a)
    k_t = round(y_true.theta / cfg.theta_b) % cfg.M
    return index_r(cfg, y_hat.r) == k_r and index_theta(cfg, y_hat.theta) == k_t
