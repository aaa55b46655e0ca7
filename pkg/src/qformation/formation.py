"""Quantized formation controller in relative polar coordinates.

Two engines iterate the controller:

* ``"reference"`` composes :func:`step_y` and :func:`perceive` exactly as the
  update rule is written, one Python call per step.  It supports every
  perception model.
* ``"kernel"`` runs the same arithmetic in log-radius space inside
  :mod:`qformation.kernels` and supports the models whose error is an affine
  function of the log-radius (exact, bounded quantizer noise, lognormal).

Given the same :class:`Streams`, both engines consume identical edge picks
and noise draws.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import TWO_PI, FormationState, PolarVec, wrap_angle
from .gossip import EdgeStream, GossipGraph, derive_rng
from .quantizer import (
    GRID_TOL,
    QuantizerConfig,
    angle_at,
    diff_r,
    diff_theta,
    index_r,
    index_theta,
    mean_omega_r,
    mean_omega_theta,
    on_grid_r,
    on_grid_theta,
    quantize_r,
    quantize_theta,
    radius_at,
)

# relative slack on the strict safe-distance inequalities, so a grid radius
# that coincides with d_min or d_max counts as unsafe despite rounding
SAFE_RTOL = 1e-12

ANGULAR_LIFTS = ("canonical", "signed")


class OffGridTargetWarning(UserWarning):
    pass


class OffGridTargetError(ValueError):
    pass


def validate_targets(
    targets: FormationState | Sequence[PolarVec], cfg: QuantizerConfig, *, snap: bool = False
) -> FormationState:
    """Check every target lies on the quantizer grid, snapping with a warning if asked."""
    targets = FormationState(targets)
    out = []
    for k, t in enumerate(targets):
        if on_grid_r(cfg, t.r) and on_grid_theta(cfg, t.theta):
            out.append(_snap(cfg, t))
            continue
        if not snap:
            raise OffGridTargetError(
                f"target {k + 1} ({t.r}, {t.theta}) is not on the grid a={cfg.a}, M={cfg.M}"
            )
        s = PolarVec(quantize_r(cfg, t.r), quantize_theta(cfg, t.theta))
        warnings.warn(
            f"target {k + 1} ({t.r:.6g}, {t.theta:.6g}) snapped to grid ({s.r:.6g}, {s.theta:.6g})",
            OffGridTargetWarning,
            stacklevel=2,
        )
        out.append(s)
    return FormationState(out)


def _snap(cfg: QuantizerConfig, v: PolarVec) -> PolarVec:
    kr = round(math.log(v.r) / cfg.log_a)
    kt = round(v.theta / cfg.theta_b)
    return PolarVec(radius_at(cfg, kr), angle_at(cfg, kt))


def _canonical(cfg: QuantizerConfig, v: PolarVec) -> PolarVec:
    """Replace on-grid coordinates by their exact grid representation."""
    r = radius_at(cfg, round(math.log(v.r) / cfg.log_a)) if on_grid_r(cfg, v.r) else v.r
    t = angle_at(cfg, round(v.theta / cfg.theta_b)) if on_grid_theta(cfg, v.theta) else v.theta
    return PolarVec(r, t)


def _update_entry(cfg: QuantizerConfig, own: PolarVec, other: PolarVec,
                  own_t: PolarVec, other_t: PolarVec) -> PolarVec:
    r = quantize_r(cfg, mean_omega_r(
        cfg, quantize_r(cfg, own.r),
        diff_r(quantize_r(cfg, other.r), diff_r(other_t.r, own_t.r))))
    theta = quantize_theta(cfg, mean_omega_theta(
        cfg, quantize_theta(cfg, own.theta),
        diff_theta(quantize_theta(cfg, other.theta), diff_theta(other_t.theta, own_t.theta))))
    return PolarVec(r, theta)


def step_y(y: FormationState, i: int, j: int, cfg: QuantizerConfig,
           targets: FormationState) -> FormationState:
    """One controller update of the pair ``(i, j)``; outputs lie on the grid."""
    n = len(y)
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"invalid gossip pair ({i}, {j}) for {n} entries")
    if len(targets) != n:
        raise ValueError("targets and state differ in length")
    new_i = _update_entry(cfg, y[i], y[j], targets[i], targets[j])
    new_j = _update_entry(cfg, y[j], y[i], targets[j], targets[i])
    return y.replace({i: new_i, j: new_j})


def lift_angle(d: int, M: int, lift: str = "canonical") -> int:
    if lift == "canonical":
        return d % M
    if lift == "signed":
        v = d % M
        return v - M if v > M / 2 else v
    raise ValueError(f"unknown angular lift {lift!r}")


def embed_to_z(y: FormationState, targets: FormationState, cfg: QuantizerConfig,
               lift: str = "canonical") -> tuple[list[int], list[int]]:
    """Index differences ``(I(r_i) - I(r_i*), I(theta_i) - I(theta_i*))``."""
    if len(y) != len(targets):
        raise ValueError("targets and state differ in length")
    z_r = [index_r(cfg, v.r) - index_r(cfg, t.r) for v, t in zip(y, targets)]
    z_t = [lift_angle(index_theta(cfg, v.theta) - index_theta(cfg, t.theta), cfg.M, lift)
           for v, t in zip(y, targets)]
    return z_r, z_t


# ---------------------------------------------------------------- perception

PERCEPTION_KINDS = ("exact", "bounded_quantizer_noise", "lognormal", "pinhole")

# keeps bounded noise strictly inside the cell, well clear of the tie tolerance
_BOUNDED_SHRINK = 1.0 - 1e-6


@dataclass(frozen=True)
class PerceptionModel:
    """How a true relative position turns into a perceived one.

    ``bounded_quantizer_noise`` needs ``a`` and ``M`` in ``params``;
    ``lognormal`` takes ``sigma``, ``sigma2``, ``r0`` and ``sigma_theta``;
    ``pinhole`` takes :class:`qformation.pinhole.PinholeScenario` fields.
    """

    kind: str = "exact"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PERCEPTION_KINDS:
            raise ValueError(f"unknown perception kind {self.kind!r}")
        p = self.params
        if self.kind == "bounded_quantizer_noise":
            QuantizerConfig(float(p["a"]), int(p["M"]))
        if self.kind == "lognormal":
            for key in ("sigma", "sigma2", "sigma_theta"):
                if float(p.get(key, 0.0)) < 0:
                    raise ValueError(f"{key} must be non-negative")
            if float(p.get("r0", 1.0)) <= 0:
                raise ValueError("r0 must be positive")

    @classmethod
    def exact(cls) -> PerceptionModel:
        return cls("exact")

    @classmethod
    def bounded(cls, cfg: QuantizerConfig) -> PerceptionModel:
        return cls("bounded_quantizer_noise", {"a": cfg.a, "M": cfg.M})

    @property
    def affine(self) -> bool:
        return self.kind != "pinhole"

    def coefficients(self) -> tuple[float, float, float]:
        """``(c0, c1, ref)`` with perceived log-radius ``lr + g*(c0 + c1*(lr - ref))``."""
        p = self.params
        if self.kind == "bounded_quantizer_noise":
            return math.log(float(p["a"])), 0.0, 0.0
        if self.kind == "lognormal":
            return (float(p.get("sigma", 0.0)), float(p.get("sigma2", 0.0)),
                    math.log(float(p.get("r0", 1.0))))
        return 0.0, 0.0, 0.0

    def draw(self, rng: np.random.Generator, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Standardized draws for ``k`` steps: radial ``g`` and angular offsets, shape ``(k, 2)``."""
        p = self.params
        if self.kind == "bounded_quantizer_noise":
            g_r = (rng.random((k, 2)) - 0.5) * _BOUNDED_SHRINK
            g_t = (rng.random((k, 2)) - 0.5) * _BOUNDED_SHRINK * (TWO_PI / int(p["M"]))
            return g_r, g_t
        if self.kind == "lognormal":
            g_r = rng.standard_normal((k, 2))
            g_t = rng.standard_normal((k, 2)) * float(p.get("sigma_theta", 0.0))
            return g_r, g_t
        return np.zeros((k, 2)), np.zeros((k, 2))


class NoiseStream:
    """Block-drawn perception noise, independent of how it is consumed."""

    BLOCK = 4096

    def __init__(self, model: PerceptionModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self._r = np.zeros((0, 2))
        self._t = np.zeros((0, 2))
        self._pos = 0

    def take(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        out_r = np.empty((k, 2))
        out_t = np.empty((k, 2))
        filled = 0
        while filled < k:
            if self._pos >= len(self._r):
                self._r, self._t = self.model.draw(self.rng, self.BLOCK)
                self._pos = 0
            m = min(k - filled, len(self._r) - self._pos)
            out_r[filled:filled + m] = self._r[self._pos:self._pos + m]
            out_t[filled:filled + m] = self._t[self._pos:self._pos + m]
            self._pos += m
            filled += m
        return out_r, out_t


def perceive(y_true: PolarVec, model: PerceptionModel,
             draw: tuple[float, float] | None = None,
             rng: np.random.Generator | None = None) -> PolarVec:
    """Perceived value of ``y_true``.

    ``draw`` is the ``(g_r, g_theta)`` pair from :meth:`PerceptionModel.draw`;
    when omitted a fresh one is taken from ``rng``.
    """
    if model.kind == "exact":
        return y_true
    if model.kind == "pinhole":
        from .pinhole import PinholeScenario, perceive_polar

        if rng is None:
            raise ValueError("pinhole perception needs an rng")
        return perceive_polar(y_true, PinholeScenario.from_dict(model.params), rng)
    if draw is None:
        if rng is None:
            raise ValueError("noisy perception needs a draw or an rng")
        g_r, g_t = model.draw(rng, 1)
        draw = (float(g_r[0, 0]), float(g_t[0, 0]))
    c0, c1, ref = model.coefficients()
    lr = math.log(y_true.r)
    lr_hat = lr + draw[0] * (c0 + c1 * (lr - ref))
    return PolarVec(math.exp(lr_hat), wrap_angle(y_true.theta + draw[1]))


# ---------------------------------------------------------------- runs


@dataclass
class Streams:
    """Edge picks and perception randomness for one run."""

    edges: EdgeStream
    perception: np.random.Generator

    @classmethod
    def from_seed(cls, graph: GossipGraph, seed: int, run_index: int = 0) -> Streams:
        return cls(EdgeStream(graph, derive_rng(seed, run_index, "edges")),
                   derive_rng(seed, run_index, "perception"))


@dataclass
class FormationRun:
    """Trace of a formation run.

    ``r[t]``, ``theta[t]`` hold the state after ``t`` steps (only the initial
    and final rows when not recorded); ``picks[t]`` is the edge used by step
    ``t + 1``.  ``first_violation`` is the first state index outside the safe
    set, if a safety spec was supplied.
    """

    r: np.ndarray
    theta: np.ndarray
    picks: np.ndarray
    t_con: int | None
    steps: int
    first_violation: int | None
    graph: GossipGraph = field(repr=False)
    cfg: QuantizerConfig = field(repr=False)
    targets: FormationState = field(repr=False)

    @property
    def recorded(self) -> bool:
        return len(self.r) == self.steps + 1

    def state(self, t: int) -> FormationState:
        return FormationState(PolarVec(float(r), float(th))
                              for r, th in zip(self.r[t], self.theta[t]))

    @property
    def final(self) -> FormationState:
        return self.state(-1)

    def radial_indices(self) -> np.ndarray:
        return np.rint(np.log(self.r) / self.cfg.log_a).astype(np.int64)

    def angular_indices(self) -> np.ndarray:
        return np.rint(self.theta / self.cfg.theta_b).astype(np.int64) % self.cfg.M

    def pairs(self) -> np.ndarray:
        ei, ej = self.graph.edge_arrays()
        return np.stack([ei[self.picks], ej[self.picks]], axis=1)

    def wrap_events(self) -> np.ndarray:
        """Step numbers where some angular index jumped across the 0/2pi seam."""
        if not self.recorded:
            raise ValueError("trace was not recorded")
        k = self.angular_indices()
        jumps = np.abs(np.diff(k, axis=0)) > self.cfg.M / 2
        return np.nonzero(jumps.any(axis=1))[0] + 1

    def to_csv(self, spec=None) -> str:
        """Rows ``step, i, j, r_1, theta_1, ..., r_N, theta_N, safe``."""
        from .analysis import is_safe_radii

        if not self.recorded:
            raise ValueError("trace was not recorded")
        n = self.r.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["step", "i", "j"]
        for k in range(1, n + 1):
            head += [f"r_{k}", f"theta_{k}"]
        w.writerow(head + ["safe"])
        pairs = self.pairs()
        for t in range(self.steps + 1):
            if t == 0:
                row = [0, "", ""]
            else:
                row = [t, int(pairs[t - 1, 0]) + 1, int(pairs[t - 1, 1]) + 1]
            for r, th in zip(self.r[t].tolist(), self.theta[t].tolist()):
                row += [repr(r), repr(th)]
            safe = 1 if spec is None or is_safe_radii(self.r[t], spec) else 0
            w.writerow(row + [safe])
        return buf.getvalue()


def _at_target(cfg: QuantizerConfig, v: PolarVec, t: PolarVec) -> bool:
    return (abs(math.log(v.r) - math.log(t.r)) <= GRID_TOL * cfg.log_a
            and abs(v.theta - t.theta) <= GRID_TOL * cfg.theta_b)


def _log_bounds(spec) -> tuple[float, float]:
    if spec is None:
        return -math.inf, math.inf
    return (math.log(spec.d_min) + SAFE_RTOL, math.log(spec.d_max) - SAFE_RTOL)


def run_formation(
    y0: FormationState,
    targets: FormationState,
    cfg: QuantizerConfig,
    graph: GossipGraph,
    model: PerceptionModel,
    streams: Streams,
    max_steps: int,
    *,
    spec=None,
    record: bool = True,
    stop_at_target: bool = True,
    engine: str = "auto",
    backend=None,
) -> FormationRun:
    """Iterate the controller with perception in the loop.

    At each step an edge ``(i, j)`` is drawn, both entries are perceived, and
    :func:`step_y` runs on the perceived values.  ``t_con`` is the first state
    index equal to ``targets`` (grid equality).
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    y0 = FormationState(y0)
    targets = validate_targets(targets, cfg)
    if len(y0) != len(targets) or len(y0) != graph.n:
        raise ValueError("state, targets and graph sizes differ")
    y0 = FormationState(_canonical(cfg, v) for v in y0)
    if engine == "auto":
        engine = "kernel" if model.affine else "reference"
    if engine == "kernel":
        if not model.affine:
            raise ValueError(f"kernel engine cannot run {model.kind!r} perception")
        return _run_kernel(y0, targets, cfg, graph, model, streams, max_steps, spec,
                           record, stop_at_target, backend or kernels)
    if engine == "reference":
        return _run_reference(y0, targets, cfg, graph, model, streams, max_steps, spec,
                              record, stop_at_target)
    raise ValueError(f"unknown engine {engine!r}")


def _initial_violation(y0: FormationState, spec) -> int | None:
    from .analysis import is_safe

    if spec is not None and not is_safe(y0, spec):
        return 0
    return None


def _run_kernel(y0, targets, cfg, graph, model, streams, max_steps, spec, record,
                stop_at_target, k) -> FormationRun:
    n = graph.n
    lr = np.array([math.log(v.r) for v in y0])
    th = np.array([v.theta for v in y0])
    lr_t = np.array([math.log(v.r) for v in targets])
    th_t = np.array([v.theta for v in targets])
    # targets are canonical grid values; use their exact log form
    lr_t = np.rint(lr_t / cfg.log_a) * cfg.log_a
    lo, hi = _log_bounds(spec)
    ei, ej = graph.edge_arrays()
    has_noise = model.kind != "exact"
    c0, c1, ref = model.coefficients()
    noise = NoiseStream(model, streams.perception) if has_noise else None
    dummy2 = np.zeros((1, 2))
    dummy_n = np.zeros((1, n))
    tr_lr = [lr.copy()[None, :]]
    tr_th = [th.copy()[None, :]]
    picks_all = []
    first_violation = _initial_violation(y0, spec)
    t_con = 0 if all(_at_target(cfg, v, t) for v, t in zip(y0, targets)) else None
    done = 0
    if not (stop_at_target and t_con is not None):
        pending = np.zeros(0, np.int64)
        pend_r = pend_t = dummy2
        while done < max_steps:
            if len(pending) == 0:
                block = min(EdgeStream.BLOCK, max_steps - done)
                pending = streams.edges.take(block)
                if has_noise:
                    pend_r, pend_t = noise.take(block)
            m = len(pending)
            buf_lr = np.empty((m, n)) if record else dummy_n
            buf_th = np.empty((m, n)) if record else dummy_n
            applied, hit, fv = k.y_steps(
                lr, th, lr_t, th_t, cfg.log_a, cfg.M, cfg.omega, cfg.angle_mean == "signed",
                ei, ej, pending,
                pend_r if has_noise else dummy2, pend_t if has_noise else dummy2,
                has_noise, c0, c1, ref, lo, hi,
                buf_lr, buf_th, record, stop_at_target or t_con is None)
            picks_all.append(pending[:applied])
            if record:
                tr_lr.append(buf_lr[:applied])
                tr_th.append(buf_th[:applied])
            if fv >= 0 and first_violation is None:
                first_violation = done + fv + 1
            pending = pending[applied:]
            if has_noise:
                pend_r = pend_r[applied:]
                pend_t = pend_t[applied:]
            done += applied
            if hit and t_con is None:
                t_con = done
            if hit and stop_at_target:
                break
    if not record:
        tr_lr.append(lr.copy()[None, :])
        tr_th.append(th.copy()[None, :])
    picks = np.concatenate(picks_all) if picks_all else np.zeros(0, np.int64)
    r = np.exp(np.concatenate(tr_lr))
    return FormationRun(r, np.concatenate(tr_th), picks, t_con, done, first_violation,
                        graph, cfg, targets)


def _run_reference(y0, targets, cfg, graph, model, streams, max_steps, spec, record,
                   stop_at_target) -> FormationRun:
    from .analysis import is_safe_radii

    n = graph.n
    y = y0
    rows_r = [y.radii]
    rows_t = [y.angles]
    picks = []
    noise = NoiseStream(model, streams.perception) if model.kind not in ("exact", "pinhole") else None
    first_violation = _initial_violation(y0, spec)
    matched = [_at_target(cfg, v, t) for v, t in zip(y, targets)]
    t_con = 0 if all(matched) else None
    done = 0
    while done < max_steps and not (stop_at_target and t_con is not None):
        e = int(streams.edges.take(1)[0])
        i, j = graph.edges[e]
        if noise is not None:
            g_r, g_t = noise.take(1)
            pi = perceive(y[i], model, (g_r[0, 0], g_t[0, 0]))
            pj = perceive(y[j], model, (g_r[0, 1], g_t[0, 1]))
        else:
            pi = perceive(y[i], model, rng=streams.perception)
            pj = perceive(y[j], model, rng=streams.perception)
        stepped = step_y(y.replace({i: pi, j: pj}), i, j, cfg, targets)
        y = y.replace({i: stepped[i], j: stepped[j]})
        matched[i] = _at_target(cfg, y[i], targets[i])
        matched[j] = _at_target(cfg, y[j], targets[j])
        done += 1
        picks.append(e)
        if record:
            rows_r.append(y.radii)
            rows_t.append(y.angles)
        if first_violation is None and spec is not None and not is_safe_radii(
                [y[i].r, y[j].r], spec):
            first_violation = done
        if t_con is None and all(matched):
            t_con = done
    if not record:
        rows_r.append(y.radii)
        rows_t.append(y.angles)
    return FormationRun(np.array(rows_r, dtype=float).reshape(-1, n),
                        np.array(rows_t, dtype=float).reshape(-1, n),
                        np.array(picks, dtype=np.int64), t_con, done, first_violation,
                        graph, cfg, targets)
