"""Integer quantized-averaging dynamics and randomized edge selection.

Randomness
----------
Every stream is a numpy ``PCG64`` generator seeded from
``SeedSequence(seed, spawn_key=(run_index, crc32(purpose)))``; see
:func:`derive_rng`.  Edge picks are drawn in fixed blocks of
``EdgeStream.BLOCK`` so that the pick sequence does not depend on how a
consumer slices it.
"""

from __future__ import annotations

import csv
import io
import zlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .quantizer import round_half_away


def derive_rng(seed: int, run_index: int = 0, purpose: str = "edges") -> np.random.Generator:
    """Independent generator for ``(seed, run_index, purpose)``."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index), tag))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GossipGraph:
    """Undirected connected graph over entries ``0..n-1``."""

    n: int
    edges: tuple[tuple[int, int], ...]
    topology: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        norm = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))
        if self.n > 1 and not norm:
            raise ValueError("graph with more than one node needs edges")
        if not self._connected():
            raise ValueError("gossip graph must be connected")
        if self.topology == "custom" and self._is_chain():
            object.__setattr__(self, "topology", "chain")

    @classmethod
    def chain(cls, n: int) -> GossipGraph:
        return cls(n, tuple((k, k + 1) for k in range(n - 1)), "chain")

    def _connected(self) -> bool:
        adj: dict[int, list[int]] = {k: [] for k in range(self.n)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        todo = deque([0])
        while todo:
            u = todo.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return len(seen) == self.n

    def _is_chain(self) -> bool:
        return set(self.edges) == {(k, k + 1) for k in range(self.n - 1)}

    @property
    def is_chain(self) -> bool:
        return self._is_chain()

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.edges:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        e = np.asarray(self.edges, dtype=np.int64)
        return np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1])


class EdgeStream:
    """Reproducible uniform-over-edges pick sequence."""

    BLOCK = 4096

    def __init__(self, graph: GossipGraph, rng: np.random.Generator):
        if not graph.edges:
            raise ValueError("cannot gossip on a graph without edges")
        self.graph = graph
        self.rng = rng
        self._buf = np.zeros(0, np.int64)
        self._pos = 0

    def _refill(self) -> None:
        self._buf = self.rng.integers(0, len(self.graph.edges), size=self.BLOCK, dtype=np.int64)
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        """Next ``k`` edge indices."""
        out = np.empty(k, np.int64)
        filled = 0
        while filled < k:
            if self._pos >= len(self._buf):
                self._refill()
            m = min(k - filled, len(self._buf) - self._pos)
            out[filled:filled + m] = self._buf[self._pos:self._pos + m]
            self._pos += m
            filled += m
        return out

    def next_edge(self) -> tuple[int, int]:
        return self.graph.edges[int(self.take(1)[0])]


def select_edge(graph: GossipGraph, stream: EdgeStream) -> tuple[int, int]:
    if stream.graph != graph:
        raise ValueError("edge stream was built for a different graph")
    return stream.next_edge()


def step_z(z: Sequence[int], i: int, j: int, omega: float) -> list[int]:
    n = len(z)
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"invalid gossip pair ({i}, {j}) for {n} entries")
    out = [int(v) for v in z]
    zi, zj = out[i], out[j]
    out[i] = zi + round_half_away(omega * (zj - zi))
    out[j] = zj + round_half_away(omega * (zi - zj))
    return out


def is_equilibrium(z: Iterable[int]) -> bool:
    z = list(z)
    return max(z) - min(z) <= 1


@dataclass
class ZRun:
    """Result of :func:`run_z`.

    ``trace[t]`` is the state after ``t`` steps and ``picks[t]`` the edge index
    used for step ``t + 1``.  Without recording, ``trace`` holds the initial
    and final states only.
    """

    trace: np.ndarray
    picks: np.ndarray
    t_con: int | None
    steps: int
    graph: GossipGraph = field(repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.trace[-1]

    def pairs(self) -> np.ndarray:
        ei, ej = self.graph.edge_arrays()
        return np.stack([ei[self.picks], ej[self.picks]], axis=1)

    def to_csv(self) -> str:
        """Trace rows ``step, i, j, z_1..z_N`` with 1-based pair indices."""
        if len(self.trace) != self.steps + 1:
            raise ValueError("trace was not recorded")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.trace.shape[1]
        w.writerow(["step", "i", "j"] + [f"z_{k + 1}" for k in range(n)])
        w.writerow([0, "", ""] + self.trace[0].tolist())
        for t, (i, j) in enumerate(self.pairs(), start=1):
            w.writerow([t, int(i) + 1, int(j) + 1] + self.trace[t].tolist())
        return buf.getvalue()


def run_z(
    z0: Sequence[int],
    graph: GossipGraph,
    omega: float,
    stream: EdgeStream,
    max_steps: int,
    *,
    stop_at_equilibrium: bool = True,
    record: bool = True,
    backend=None,
) -> ZRun:
    """Iterate :func:`step_z` on edges drawn from ``stream``.

    ``t_con`` is the first trace index at equilibrium (possibly 0).  With
    ``stop_at_equilibrium`` the run ends there; otherwise it runs all
    ``max_steps`` and ``t_con`` is still reported.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    if len(z0) != graph.n:
        raise ValueError(f"state has {len(z0)} entries, graph has {graph.n}")
    k = backend or kernels
    z = np.array([int(v) for v in z0], dtype=np.int64)
    ei, ej = graph.edge_arrays()
    t_con = 0 if is_equilibrium(z.tolist()) else None
    chunks = [z.copy()[None, :]]
    picks_all = []
    done = 0
    if not (stop_at_equilibrium and t_con is not None):
        dummy = np.zeros((1, graph.n), np.int64)
        pending = np.zeros(0, np.int64)
        while done < max_steps:
            if len(pending) == 0:
                pending = stream.take(min(EdgeStream.BLOCK, max_steps - done))
            trace = np.empty((len(pending), graph.n), np.int64) if record else dummy
            applied, hit = k.z_steps(z, ei, ej, float(omega), pending, trace,
                                     record, stop_at_equilibrium or t_con is None)
            picks_all.append(pending[:applied])
            if record:
                chunks.append(trace[:applied])
            pending = pending[applied:]
            done += applied
            if hit and t_con is None:
                t_con = done
            if hit and stop_at_equilibrium:
                break
    if not record:
        chunks.append(z.copy()[None, :])
    picks_arr = np.concatenate(picks_all) if picks_all else np.zeros(0, np.int64)
    return ZRun(np.concatenate(chunks), picks_arr, t_con, done, graph)
