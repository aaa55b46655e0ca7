"""Fit quantizer step radius and sector count to observed perception error.

Errors are measured as ``|ln(r_hat / r)|`` radially and as the wrapped
absolute angle difference.  Quantiles are conservative order statistics,
so a fit at level ``p`` always covers at least a fraction ``p`` of the
samples it was fitted on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import PolarVec, signed_angle_diff
from .quantizer import QuantizerConfig

A_FLOOR = 1.0 + 1e-6
M_MAX = 1 << 16

SAMPLE_FIELDS = ("true_r", "true_theta", "est_r", "est_theta", "env")
FIT_FIELDS = ("env", "p", "a", "M", "coverage_r", "coverage_theta", "n_used", "degenerate")


class FitError(ValueError):
    """The samples admit no valid quantizer at the requested level."""


@dataclass(frozen=True)
class SampleRecord:
    """A true relative position and its perceived counterpart.

    The true position must be valid; the estimate is kept verbatim (it may be
    non-finite or non-positive after a perception breakdown) and such values
    count as bound violations.
    """

    true_r: float
    true_theta: float
    est_r: float
    est_theta: float
    env: str = ""

    def __post_init__(self) -> None:
        for name in ("true_r", "true_theta", "est_r", "est_theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "env", str(self.env))
        PolarVec(self.true_r, self.true_theta)

    @classmethod
    def from_polar(cls, true_pos: PolarVec, est_pos: PolarVec, env: str = "") -> SampleRecord:
        return cls(true_pos.r, true_pos.theta, est_pos.r, est_pos.theta, env)

    @property
    def true_pos(self) -> PolarVec:
        return PolarVec(self.true_r, self.true_theta)

    @property
    def est_valid(self) -> bool:
        return (math.isfinite(self.est_r) and self.est_r > 0.0
                and math.isfinite(self.est_theta))

    @property
    def est_pos(self) -> PolarVec:
        return PolarVec.wrapped(self.est_r, self.est_theta)


@dataclass(frozen=True)
class FitResult:
    """Fitted step radius and sector count.

    Either channel may be infeasible on its own; it is then ``None`` and
    named in ``infeasible``.
    """

    a: float | None
    M: int | None
    coverage_r: float | None
    coverage_theta: float | None
    n_used: int
    degenerate: bool
    infeasible: tuple[str, ...] = ()

    def config(self, omega: float = 0.618) -> QuantizerConfig:
        if self.a is None or self.M is None:
            raise FitError(f"no quantizer: infeasible channels {self.infeasible}")
        return QuantizerConfig(self.a, self.M, omega)


def radial_errors(samples: Sequence[SampleRecord]) -> np.ndarray:
    """``|ln(r_hat/r)|`` per sample, ``inf`` for unusable estimates."""
    out = np.full(len(samples), np.inf)
    for k, s in enumerate(samples):
        if math.isfinite(s.est_r) and s.est_r > 0.0:
            out[k] = abs(math.log(s.est_r / s.true_r))
    return out


def angular_errors(samples: Sequence[SampleRecord]) -> np.ndarray:
    out = np.full(len(samples), np.inf)
    for k, s in enumerate(samples):
        if s.est_valid:
            out[k] = abs(signed_angle_diff(s.est_theta, s.true_theta))
    return out


def _order_stat(err: np.ndarray, p: float) -> float:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"percentile must lie in (0, 1], got {p!r}")
    if len(err) == 0:
        raise FitError("no valid samples")
    k = max(1, math.ceil(p * len(err) - 1e-12))
    return float(np.partition(err, k - 1)[k - 1])


def _step_radius(e: float) -> tuple[float, bool]:
    if not math.isfinite(e):
        raise FitError("radial error quantile is unbounded; too many failed estimates")
    a = math.exp(2.0 * e)
    # make sure the half-step really covers e after rounding
    while 0.5 * math.log(a) < e:
        a = math.nextafter(a, math.inf)
    if a < A_FLOOR:
        return A_FLOOR, True
    return a, False


def _sector_count(e: float, m_max: int) -> tuple[int, bool]:
    if not math.isfinite(e):
        raise FitError("angular error quantile is unbounded; too many failed estimates")
    if e <= math.pi / m_max:
        return m_max, True
    M = int(math.floor(math.pi / e))
    while M >= 2 and math.pi / M < e:
        M -= 1
    if M < 2:
        raise FitError(f"angular error {e:.4g} rad needs fewer than 2 sectors")
    return M, False


def fit_step_radius(samples: Sequence[SampleRecord], p: float) -> float:
    """Smallest step radius whose half-cell covers a fraction ``p`` of radial errors."""
    return _step_radius(_order_stat(radial_errors(samples), p))[0]


def fit_sector_count(samples: Sequence[SampleRecord], p: float, m_max: int = M_MAX) -> int:
    """Largest sector count whose half-sector covers a fraction ``p`` of angular errors."""
    return _sector_count(_order_stat(angular_errors(samples), p), m_max)[0]


def coverage_of(samples: Sequence[SampleRecord], cfg: QuantizerConfig) -> tuple[float, float]:
    """Fractions of samples inside the radial and angular half-cells (closed bounds)."""
    if not samples:
        raise ValueError("no samples")
    er = radial_errors(samples)
    et = angular_errors(samples)
    return (float(np.mean(er <= 0.5 * cfg.log_a)),
            float(np.mean(et <= 0.5 * cfg.theta_b)))


def fit(samples: Sequence[SampleRecord], p: float, m_max: int = M_MAX) -> FitResult:
    """Independent radial and angular fits plus their coverage on the same samples.

    Raises :class:`FitError` only if both channels are infeasible.
    """
    samples = list(samples)
    er = radial_errors(samples)
    et = angular_errors(samples)
    a = M = cov_r = cov_t = None
    degenerate = False
    bad = []
    try:
        a, deg = _step_radius(_order_stat(er, p))
        cov_r = float(np.mean(er <= 0.5 * math.log(a)))
        degenerate |= deg
    except FitError:
        bad.append("r")
    try:
        M, deg = _sector_count(_order_stat(et, p), m_max)
        cov_t = float(np.mean(et <= math.pi / M))
        degenerate |= deg
    except FitError:
        bad.append("theta")
    if len(bad) == 2:
        raise FitError("neither the radial nor the angular error admits a quantizer")
    return FitResult(a, M, cov_r, cov_t, len(samples), degenerate, tuple(bad))


def group_by_env(samples: Iterable[SampleRecord]) -> dict[str, list[SampleRecord]]:
    out: dict[str, list[SampleRecord]] = {}
    for s in samples:
        out.setdefault(s.env, []).append(s)
    return out


def sweep_environments(groups: Mapping[str, Sequence[SampleRecord]],
                       p_list: Sequence[float], m_max: int = M_MAX
                       ) -> dict[tuple[str, float], FitResult | FitError]:
    """One fit per ``(env, p)``; infeasible fits are returned as their error."""
    table: dict[tuple[str, float], FitResult | FitError] = {}
    for env, rows in groups.items():
        for p in p_list:
            try:
                table[(env, p)] = fit(rows, p, m_max)
            except FitError as exc:
                table[(env, p)] = exc
    return table


def _cell(v) -> str:
    return "" if v is None else repr(v)


def fits_to_csv(table: Mapping[tuple[str, float], FitResult | FitError]) -> str:
    """Fit table; infeasible channels leave their cells empty."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_FIELDS)
    for (env, p), res in table.items():
        if isinstance(res, FitError):
            w.writerow([env, repr(p), "", "", "", "", "", ""])
            continue
        w.writerow([env, repr(p), _cell(res.a), _cell(res.M), _cell(res.coverage_r),
                    _cell(res.coverage_theta), res.n_used, int(res.degenerate)])
    return buf.getvalue()


def samples_to_csv(samples: Iterable[SampleRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SAMPLE_FIELDS)
    for s in samples:
        w.writerow([repr(s.true_r), repr(s.true_theta), repr(s.est_r), repr(s.est_theta), s.env])
    return buf.getvalue()


@dataclass
class LoadResult:
    samples: list[SampleRecord]
    skipped: int


def parse_samples(text: str) -> LoadResult:
    """Parse sample CSV text; rows with unusable true positions or bad fields are skipped."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:4]] != list(SAMPLE_FIELDS[:4]):
        raise ValueError(f"sample CSV must start with header {','.join(SAMPLE_FIELDS)}")
    samples, skipped = [], 0
    for row in reader:
        if not row:
            continue
        try:
            if len(row) not in (4, 5):
                raise ValueError("wrong field count")
            tr, tt, er, et = (float(v) for v in row[:4])
            samples.append(SampleRecord(tr, tt, er, et, row[4] if len(row) == 5 else ""))
        except ValueError:
            skipped += 1
    return LoadResult(samples, skipped)


def load_samples(path: str | Path) -> LoadResult:
    return parse_samples(Path(path).read_text(encoding="utf-8"))


def write_samples(path: str | Path, samples: Iterable[SampleRecord]) -> None:
    Path(path).write_text(samples_to_csv(samples), encoding="utf-8", newline="")


__all__ = [
    "A_FLOOR", "M_MAX", "FitError", "FitResult", "LoadResult", "SampleRecord",
    "angular_errors", "coverage_of", "fit", "fit_sector_count", "fit_step_radius",
    "fits_to_csv", "group_by_env", "load_samples", "parse_samples", "radial_errors",
    "samples_to_csv", "sweep_environments", "write_samples",
]
