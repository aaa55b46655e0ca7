"""Cross-checks between the formation controller and its integer embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import SafetySpec, random_initial_state
from .formation import PerceptionModel, Streams, embed_to_z, run_formation
from .geometry import FormationState
from .gossip import EdgeStream, GossipGraph, derive_rng, run_z
from .quantizer import QuantizerConfig, index_r, index_theta


@dataclass
class LockstepResult:
    steps: int
    radial_ok: bool
    angular_ok: bool
    first_mismatch: int | None

    @property
    def ok(self) -> bool:
        return self.radial_ok and self.angular_ok


def lockstep(y0: FormationState, targets: FormationState, cfg: QuantizerConfig,
             graph: GossipGraph, seed: int, run_index: int, steps: int,
             backend=None) -> LockstepResult:
    """Run the controller and the index dynamics on the same edge sequence and compare.

    The angular index dynamics start from the lift in ``(-M/2, M/2]`` and are
    compared modulo ``M``.
    """
    y_run = run_formation(y0, targets, cfg, graph, PerceptionModel.exact(),
                          Streams.from_seed(graph, seed, run_index), steps,
                          stop_at_target=False, backend=backend)
    z_r0, _ = embed_to_z(y0, targets, cfg)
    _, z_t0 = embed_to_z(y0, targets, cfg, "signed")
    zr = run_z(z_r0, graph, cfg.omega, EdgeStream(graph, derive_rng(seed, run_index, "edges")),
               steps, stop_at_equilibrium=False, backend=backend)
    zt = run_z(z_t0, graph, cfg.omega, EdgeStream(graph, derive_rng(seed, run_index, "edges")),
               steps, stop_at_equilibrium=False, backend=backend)
    k_r = np.array([index_r(cfg, t.r) for t in targets])
    k_t = np.array([index_theta(cfg, t.theta) for t in targets])
    emb_r = y_run.radial_indices() - k_r
    emb_t = (y_run.angular_indices() - k_t) % cfg.M
    bad_r = np.nonzero((emb_r != zr.trace).any(axis=1))[0]
    bad_t = np.nonzero((emb_t != zt.trace % cfg.M).any(axis=1))[0]
    firsts = [int(b[0]) for b in (bad_r, bad_t) if len(b)]
    return LockstepResult(steps, len(bad_r) == 0, len(bad_t) == 0,
                          min(firsts) if firsts else None)


def pc_invariant(y0: FormationState, targets: FormationState, cfg: QuantizerConfig,
                 graph: GossipGraph, seed: int, run_index: int, max_steps: int,
                 backend=None) -> bool:
    """Whether in-cell perception noise leaves the trace identical to exact perception."""
    runs = [run_formation(y0, targets, cfg, graph, model,
                          Streams.from_seed(graph, seed, run_index), max_steps, backend=backend)
            for model in (PerceptionModel.exact(), PerceptionModel.bounded(cfg))]
    a, b = runs
    return (a.steps == b.steps and np.array_equal(a.picks, b.picks)
            and np.array_equal(a.r, b.r) and np.array_equal(a.theta, b.theta))


@dataclass
class VerifyReport:
    lockstep_pass: int
    lockstep_fail: int
    pc_pass: int
    pc_fail: int

    @property
    def ok(self) -> bool:
        return self.lockstep_fail == 0 and self.pc_fail == 0

    def to_dict(self) -> dict:
        return {"lockstep": {"pass": self.lockstep_pass, "fail": self.lockstep_fail},
                "pc_invariance": {"pass": self.pc_pass, "fail": self.pc_fail},
                "ok": self.ok}


def verify_suite(cfg: QuantizerConfig, targets: FormationState, spec: SafetySpec,
                 graph: GossipGraph, seed: int, n_seeds: int, steps: int,
                 max_steps: int = 1_000_000) -> VerifyReport:
    """Lockstep and PC-invariance checks over ``n_seeds`` random admissible initial states."""
    counts = [0, 0, 0, 0]
    for k in range(n_seeds):
        # on-grid start: perception noise is only invisible for on-grid truth
        y0 = random_initial_state(targets, cfg, spec, derive_rng(seed, k, "init"), jitter=False)
        counts[0 if lockstep(y0, targets, cfg, graph, seed, k, steps).ok else 1] += 1
        counts[2 if pc_invariant(y0, targets, cfg, graph, seed, k, max_steps) else 3] += 1
    return VerifyReport(*counts)
