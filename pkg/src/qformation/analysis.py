"""Safety and convergence analysis of the quantized formation controller.

All set-membership tests work on integer quantizer indices, never on
floating ratios.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .formation import (
    SAFE_RTOL,
    FormationRun,
    PerceptionModel,
    Streams,
    embed_to_z,
    run_formation,
    validate_targets,
)
from .geometry import FormationState, PolarVec, wrap_angle
from .gossip import GossipGraph, derive_rng
from .quantizer import QuantizerConfig, index_r, index_theta, radius_at


@dataclass(frozen=True)
class SafetySpec:
    d_min: float
    d_max: float

    def __post_init__(self) -> None:
        if not (0.0 < self.d_min < self.d_max and math.isfinite(self.d_max)):
            raise ValueError(f"need 0 < d_min < d_max, got ({self.d_min}, {self.d_max})")


def is_safe_radii(radii: Sequence[float], spec: SafetySpec) -> bool:
    lo = spec.d_min * (1.0 + SAFE_RTOL)
    hi = spec.d_max * (1.0 - SAFE_RTOL)
    return all(lo < float(r) < hi for r in radii)


def is_safe(y: FormationState, spec: SafetySpec) -> bool:
    """Every relative distance strictly inside ``(d_min, d_max)``."""
    return is_safe_radii([v.r for v in y], spec)


def in_Y0(y0: FormationState, targets: FormationState, cfg: QuantizerConfig,
          lift: str = "canonical", strict: bool = False) -> bool:
    """Index sums of the initial state match the target.

    The plain test requires the radial index differences to sum to zero and
    the angular ones to sum to zero modulo ``M``.  ``strict`` additionally
    requires the angular differences, lifted to ``(-M/2, M/2]``, to sum to
    zero as integers and to span less than half a turn; only then does the
    angular channel provably settle on the target rather than on another
    point of the same residue class.
    """
    z_r, z_t = embed_to_z(y0, targets, cfg, lift)
    if sum(z_r) != 0 or sum(z_t) % cfg.M != 0:
        return False
    if strict:
        _, s = embed_to_z(y0, targets, cfg, "signed")
        if sum(s) != 0 or max(s) - min(s) > max_angular_spread(cfg.M):
            return False
    return True


def max_angular_spread(M: int) -> int:
    """Largest lifted angular spread that stays below half a turn."""
    return math.ceil(M / 2) - 1


def s0_window(cfg: QuantizerConfig, spec: SafetySpec,
              targets: FormationState) -> tuple[int, int]:
    """Exclusive bounds ``(lo, hi)`` on radial index differences inside the safe initial set."""
    k_star = [index_r(cfg, t.r) for t in targets]
    lo = index_r(cfg, spec.d_min) - min(k_star)
    hi = index_r(cfg, spec.d_max) - max(k_star)
    return lo, hi


def in_S0(y0: FormationState, targets: FormationState, cfg: QuantizerConfig,
          spec: SafetySpec) -> bool:
    lo, hi = s0_window(cfg, spec, targets)
    z_r, _ = embed_to_z(y0, targets, cfg)
    return all(lo < z < hi for z in z_r)


def in_S0_ratio(y0: FormationState, targets: FormationState, cfg: QuantizerConfig,
                spec: SafetySpec) -> bool:
    """Safe-initial-set test written with real-valued ratios of quantized radii."""
    from .quantizer import quantize_r

    lo = quantize_r(cfg, spec.d_min) / min(t.r for t in targets)
    hi = quantize_r(cfg, spec.d_max) / max(t.r for t in targets)
    return all(lo < quantize_r(cfg, v.r) / t.r < hi for v, t in zip(y0, targets))


def quantizer_feasible(cfg: QuantizerConfig, spec: SafetySpec, targets: FormationState,
                       mode: str = "nonempty") -> bool:
    """Whether the step radius leaves any safe initial state.

    ``"nonempty"`` asks for an integer strictly inside the radial window;
    ``"literal"`` only compares the window ends.
    """
    lo, hi = s0_window(cfg, spec, targets)
    if mode == "literal":
        return lo < hi
    if mode == "nonempty":
        return hi - lo >= 2
    raise ValueError(f"unknown feasibility mode {mode!r}")


def delta_variants(cfg: QuantizerConfig, spec: SafetySpec,
                   targets: FormationState | None = None) -> dict[str, int]:
    """Index ranges feeding the convergence-time bound.

    ``range`` uses the full safe-distance range; ``s0`` (when targets are
    given) uses the tighter range of radial differences allowed initially.
    """
    d_r = index_r(cfg, spec.d_max) - index_r(cfg, spec.d_min)
    out = {"range": max(d_r, cfg.M - 1)}
    if targets is not None:
        lo, hi = s0_window(cfg, spec, targets)
        out["s0"] = max(max(hi - lo - 2, 0), cfg.M - 1)
    return out


def time_bound_from_delta(n_agents: int, delta: int) -> float:
    n = n_agents
    return delta * delta / 8.0 * n * (n * n - 1) * (n - 1) / 4.0


def convergence_time_bound(n_agents: int, cfg: QuantizerConfig, spec: SafetySpec,
                           *, graph: GossipGraph | None = None,
                           targets: FormationState | None = None,
                           delta: str = "range") -> float:
    """Upper bound on the expected convergence time over a chain of ``n_agents``."""
    if n_agents < 1:
        raise ValueError("need at least one agent")
    if graph is not None and not graph.is_chain:
        raise ValueError("the convergence-time bound only holds on chain graphs")
    if targets is not None and not quantizer_feasible(cfg, spec, targets):
        raise ValueError("quantizer feasibility fails: no safe initial state exists")
    d = delta_variants(cfg, spec, targets)[delta]
    if d <= 0:
        raise ValueError("degenerate index range")
    return time_bound_from_delta(n_agents, d)


def monitor_trace(trace, spec: SafetySpec) -> int | None:
    """First state index of a formation trace outside the safe set."""
    radii = trace.r if isinstance(trace, FormationRun) else np.asarray(trace, dtype=float)
    if radii.ndim == 1:
        radii = radii[None, :]
    lo = spec.d_min * (1.0 + SAFE_RTOL)
    hi = spec.d_max * (1.0 - SAFE_RTOL)
    bad = ~((radii > lo) & (radii < hi)).all(axis=1)
    idx = np.nonzero(bad)[0]
    return int(idx[0]) if len(idx) else None


# ------------------------------------------------------------ initial states


def _repair_sum(z: list[int], lo: int, hi: int, rng: np.random.Generator,
                extreme_first: bool) -> list[int]:
    """Shift entries inside ``[lo, hi]`` until the sum is zero."""
    z = list(z)
    s = sum(z)
    while s != 0:
        step = -1 if s > 0 else 1
        movable = [k for k, v in enumerate(z) if lo <= v + step <= hi]
        if not movable:
            raise ValueError("cannot reach a zero index sum inside the window")
        if extreme_first:
            # nudge the entry closest to zero so the extremes survive
            best = min(abs(z[k]) for k in movable)
            movable = [k for k in movable if abs(z[k]) == best]
        k = movable[int(rng.integers(len(movable)))]
        z[k] += step
        s += step
    return z


def _angular_window(M: int, rng: np.random.Generator, centered: bool = False
                    ) -> tuple[int, int]:
    w = max_angular_spread(M)
    if centered:
        lo = -(w // 2) - int(rng.integers(0, 2)) * (w % 2)
    else:
        lo = -int(rng.integers(0, w + 1))
    return lo, lo + w


def _state_from_z(z_r, z_t, targets, cfg, rng, jitter) -> FormationState:
    out = []
    for zr, zt, t in zip(z_r, z_t, targets):
        ur = ut = 0.0
        if jitter:
            ur, ut = (rng.random(2) - 0.5) * 0.98
        kr = index_r(cfg, t.r) + zr
        kt = index_theta(cfg, t.theta) + zt
        out.append(PolarVec(radius_at(cfg, kr) * math.exp(ur * cfg.log_a),
                            wrap_angle(((kt % cfg.M) + ut) * cfg.theta_b)))
    return FormationState(out)


def random_initial_state(targets: FormationState, cfg: QuantizerConfig, spec: SafetySpec,
                         rng: np.random.Generator, *, jitter: bool = True) -> FormationState:
    """Uniformly drawn state satisfying the strict initial-set conditions and safety."""
    lo, hi = s0_window(cfg, spec, targets)
    if hi - lo < 2:
        raise ValueError("safe initial set is empty")
    n = len(targets)
    z_r = _repair_sum(rng.integers(lo + 1, hi, size=n).tolist(), lo + 1, hi - 1, rng, False)
    tlo, thi = _angular_window(cfg.M, rng)
    z_t = _repair_sum(rng.integers(tlo, thi + 1, size=n).tolist(), tlo, thi, rng, False)
    return _state_from_z(z_r, z_t, targets, cfg, rng, jitter)


def worst_case_initial_state(targets: FormationState, cfg: QuantizerConfig,
                             spec: SafetySpec, rng: np.random.Generator) -> FormationState:
    """Alternating extreme indices, repaired to a zero sum, in both channels."""
    lo, hi = s0_window(cfg, spec, targets)
    if hi - lo < 2:
        raise ValueError("safe initial set is empty")
    n = len(targets)
    phase = int(rng.integers(2))
    z_r = [(hi - 1) if (k + phase) % 2 == 0 else (lo + 1) for k in range(n)]
    z_r = _repair_sum(z_r, lo + 1, hi - 1, rng, True)
    tlo, thi = _angular_window(cfg.M, rng, centered=True)
    phase = int(rng.integers(2))
    z_t = [thi if (k + phase) % 2 == 0 else tlo for k in range(n)]
    z_t = _repair_sum(z_t, tlo, thi, rng, True)
    return _state_from_z(z_r, z_t, targets, cfg, rng, False)


# ------------------------------------------------------------ Monte Carlo


@dataclass
class Scenario:
    cfg: QuantizerConfig
    targets: FormationState
    spec: SafetySpec
    graph: GossipGraph | None = None
    perception: PerceptionModel = field(default_factory=PerceptionModel.exact)
    max_steps: int = 1_000_000
    init: str | FormationState = "worst_case"

    def __post_init__(self) -> None:
        self.targets = validate_targets(self.targets, self.cfg)
        if self.graph is None:
            self.graph = GossipGraph.chain(len(self.targets))

    def initial_state(self, seed: int, run_index: int) -> FormationState:
        if isinstance(self.init, FormationState):
            return self.init
        rng = derive_rng(seed, run_index, "init")
        if self.init == "worst_case":
            return worst_case_initial_state(self.targets, self.cfg, self.spec, rng)
        if self.init == "random":
            return random_initial_state(self.targets, self.cfg, self.spec, rng)
        raise ValueError(f"unknown initial-state mode {self.init!r}")

    def run(self, seed: int, run_index: int, record: bool = False) -> FormationRun:
        y0 = self.initial_state(seed, run_index)
        return run_formation(y0, self.targets, self.cfg, self.graph, self.perception,
                             Streams.from_seed(self.graph, seed, run_index), self.max_steps,
                             spec=self.spec, record=record)


@dataclass
class ConvStats:
    runs: int
    converged: int
    mean_t: float
    quantiles: dict[int, float]
    bound: float | None
    violations: int
    exceeds_bound_99: bool
    t_samples: list[int] = field(repr=False, default_factory=list)

    def summary(self) -> dict:
        q = self.quantiles
        return {
            "bound": self.bound,
            "mean_t": self.mean_t,
            "q50": q.get(50),
            "q90": q.get(90),
            "q99": q.get(99),
            "runs": self.runs,
            "converged": self.converged,
            "violations": self.violations,
            "mean_exceeds_bound_99": self.exceeds_bound_99,
        }


def order_statistic(values: Sequence[float], p: float) -> float:
    """Empirical ``p``-quantile taken as the ``ceil(p*n)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("no values")
    k = max(1, math.ceil(p * len(v)))
    return float(v[k - 1])


def aggregate(t_samples: Sequence[int | None], violations: int,
              bound: float | None) -> ConvStats:
    """Order-insensitive summary of convergence times (``None`` = not converged)."""
    done = sorted(int(t) for t in t_samples if t is not None)
    runs = len(t_samples)
    if done:
        arr = np.asarray(done, dtype=float)
        mean = float(arr.mean())
        quants = {p: order_statistic(arr, p / 100) for p in (50, 90, 99)}
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    else:
        mean, quants, sd = math.nan, {}, 0.0
    exceeds = False
    if bound is not None and done:
        z = NormalDist().inv_cdf(0.99)
        exceeds = (mean - bound) > z * sd / math.sqrt(len(done))
    return ConvStats(runs, len(done), mean, quants, bound, violations, exceeds, done)


def _run_one(args) -> tuple[int | None, bool]:
    scenario, seed, idx = args
    res = scenario.run(seed, idx)
    return res.t_con, res.first_violation is not None


def estimate_convergence_time(scenario: Scenario, n_runs: int, seed: int = 0,
                              workers: int = 1) -> ConvStats:
    """Run ``n_runs`` seeded simulations and summarize their convergence times."""
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    jobs = [(scenario, seed, k) for k in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs, chunksize=max(1, n_runs // (4 * workers))))
    else:
        results = [_run_one(j) for j in jobs]
    try:
        bound = convergence_time_bound(len(scenario.targets), scenario.cfg, scenario.spec,
                                       graph=scenario.graph)
    except ValueError:
        bound = None
    violations = sum(v for _, v in results)
    return aggregate([t for t, _ in results], violations, bound)
