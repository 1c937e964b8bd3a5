"""Solution landscape construction.

Starting from the highest-index saddle reachable from an initial point, a
breadth-first search perturbs each saddle along its unstable directions and
runs lower-index searches, deduplicating results into a directed graph whose
edges point from parent (higher index) to child.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import eigen
from .dynamics import SearchConfig, SearchOutcome, Trajectory, hisd_search, sd_search, verify_operator
from .system import SystemSpec

log = logging.getLogger(__name__)

DEFAULT_SEED = 1121
DEFAULT_SAME_TOL = 1e-3
NO_SADDLE_MESSAGE = "No more saddle points found in the search area!"


def euclidean_judgement(tol: float = DEFAULT_SAME_TOL) -> Callable:
    def same(x, y) -> bool:
        return bool(np.linalg.norm(np.asarray(x) - np.asarray(y)) <= tol)

    same.tol = tol
    return same


@dataclass
class LandscapeConfig:
    max_index: int = 1
    max_index_gap: int = 1
    same_judgement: Callable | None = None
    perturbation_method: str = "uniform"
    perturbation_radius: float = 1e-2
    perturbation_number: int = 1
    eigen_combination: str = "all"
    initial_eigen_vectors: np.ndarray | None = None
    rng_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.max_index < 0:
            raise ValueError("max_index must be >= 0")
        if self.max_index_gap < 1:
            raise ValueError("max_index_gap must be >= 1")
        if self.perturbation_method not in ("uniform", "gaussian"):
            raise ValueError("perturbation_method must be 'uniform' or 'gaussian'")
        if not self.perturbation_radius > 0:
            raise ValueError("perturbation_radius must be positive")
        if self.perturbation_number < 1:
            raise ValueError("perturbation_number must be >= 1")
        if self.eigen_combination not in ("all", "min"):
            raise ValueError("eigen_combination must be 'all' or 'min'")
        if self.same_judgement is None:
            self.same_judgement = euclidean_judgement()


@dataclass
class SaddleRecord:
    id: int
    position: np.ndarray
    morse_index: int
    unstable_basis: np.ndarray
    parents: list = field(default_factory=list)
    degenerate: bool = False


@dataclass
class DetailRecord:
    child: int
    parent: int
    trajectory: Trajectory | None = None
    search_id: int = -1


@dataclass
class LandscapeGraph:
    saddles: list = field(default_factory=list)
    detail_records: list = field(default_factory=list)

    def edges(self) -> list[tuple[int, int]]:
        """``(parent, child)`` pairs, excluding the initial-point pseudo-parent."""
        return [(p, s.id) for s in self.saddles for p in s.parents if p != -1]

    def counts_by_index(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.saddles:
            out[s.morse_index] = out.get(s.morse_index, 0) + 1
        return dict(sorted(out.items()))


def check_whether_exist(graph: LandscapeGraph, x, index: int, predicate: Callable) -> int | None:
    """First saddle id with equal index and ``predicate(x, position)`` true."""
    for s in graph.saddles:
        if s.morse_index == index and predicate(x, s.position):
            return s.id
    return None


def generate_perturbations(basis, method: str, radius: float, count: int, rng) -> list[np.ndarray]:
    """Random kicks of length ``radius`` inside span(basis), emitted as ``+p, -p`` pairs."""
    B = np.asarray(basis, dtype=float)
    d = B.shape[0]
    out = []
    for _ in range(count):
        if method == "gaussian":
            p = rng.standard_normal(d)
        else:
            p = rng.uniform(-1.0, 1.0, d)
        p = radius * p / max(np.linalg.norm(p), 1e-10)
        q = B @ (B.T @ p)
        q = radius * q / max(np.linalg.norm(q), 1e-10)
        out.append(q)
        out.append(-q)
    return out


class Landscape:
    """Mutable landscape state: graph, RNG stream and search bookkeeping."""

    def __init__(self, spec: SystemSpec, search_cfg: SearchConfig, cfg: LandscapeConfig, x0):
        self.spec = spec
        self.search_cfg = search_cfg
        self.cfg = cfg
        self.primary_x0 = np.asarray(x0, dtype=float).reshape(-1).copy()
        if self.primary_x0.shape[0] != spec.dim:
            raise ValueError(f"initial point has {self.primary_x0.shape[0]} entries, system dim is {spec.dim}")
        self.max_index = cfg.max_index
        self.graph = LandscapeGraph()
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.boundary = np.column_stack([self.primary_x0, self.primary_x0])
        self.search_log: list[dict] = []
        self.merges: list[dict] = []

    # -- bookkeeping ---------------------------------------------------------

    @property
    def saddles(self) -> list[SaddleRecord]:
        return self.graph.saddles

    def _search(self, target: int, x_start, V0, parent: int) -> SearchOutcome:
        cfg = replace(self.search_cfg, saddle_index=target)
        if target == 0:
            out = sd_search(self.spec, cfg, x_start, origin=self.primary_x0)
        else:
            out = hisd_search(self.spec, cfg, x_start, V0, origin=self.primary_x0, rng=self.rng)
        sid = len(self.search_log)
        self.search_log.append({
            "search_id": sid,
            "parent": parent,
            "target_index": target,
            "status": out.status,
            "iterations": out.iterations,
            "found_index": out.morse_index,
            "result_id": None,
            "gnorm_history": [float(v) for v in out.gnorm_history],
        })
        out.search_id = sid
        if out.converged and out.boundary is not None:
            self.boundary[:, 0] = np.minimum(self.boundary[:, 0], out.boundary[:, 0])
            self.boundary[:, 1] = np.maximum(self.boundary[:, 1], out.boundary[:, 1])
        return out

    def _register(self, out: SearchOutcome, parent: int) -> tuple[int, bool]:
        """Merge ``out`` into the graph; returns ``(id, is_new)``."""
        x = out.x_final
        index = out.morse_index
        # edges only point downhill in index; a restart may land on its own seed or higher
        if parent != -1 and index >= self.graph.saddles[parent].morse_index:
            parent = -1
        found = check_whether_exist(self.graph, x, index, self.cfg.same_judgement)
        traj = out.trajectory
        if found is not None:
            rec = self.graph.saddles[found]
            self.merges.append({"id": found, "position": x.copy(), "index": index, "search_id": out.search_id})
            if np.linalg.norm(self.spec.force(rec.position)) > np.linalg.norm(self.spec.force(x)):
                rec.position = x.copy()
            if parent != -1 and parent not in rec.parents:
                rec.parents.append(parent)
                self.graph.detail_records.append(DetailRecord(found, parent, traj, out.search_id))
            log.info("Search an existing saddle point (id %d).", found)
            self.search_log[out.search_id]["result_id"] = found
            return found, False
        new_id = len(self.graph.saddles)
        rep = out.index_report
        self.graph.saddles.append(
            SaddleRecord(new_id, x.copy(), index, rep.neg_vectors.copy(), [parent], out.degenerate)
        )
        self.graph.detail_records.append(DetailRecord(new_id, parent, traj, out.search_id))
        self.search_log[out.search_id]["result_id"] = new_id
        log.info("New saddle point %d with Morse index %d.", new_id, index)
        return new_id, True

    # -- seed and BFS -------------------------------------------------------

    def initial_saddle_search(self, x0, begin_id: int = -1, continue_mode: bool = False,
                              subspace_point=None, queue: deque | None = None) -> int:
        """Search from ``x0`` for the highest index ``k <= max_index`` that converges.

        ``subspace_point`` is where initial directions are computed when no
        explicit initial vectors are configured (defaults to the start point).
        """
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        vop = verify_operator(self.spec, self.search_cfg)
        x_start = x0.copy()
        if np.linalg.norm(self.spec.force(x_start)) < self.search_cfg.tolerance:
            kick = self.rng.uniform(-1.0, 1.0, self.spec.dim)
            x_start = x_start + self.cfg.perturbation_radius * kick / max(np.linalg.norm(kick), 1e-10)
        sub_at = x_start if subspace_point is None else np.asarray(subspace_point, dtype=float).reshape(-1)
        for k in range(self.max_index, -1, -1):
            log.info("From initial point search index-%d", k)
            V0 = None
            if k > 0:
                if self.cfg.initial_eigen_vectors is not None:
                    V0 = eigen.gram_schmidt(np.asarray(self.cfg.initial_eigen_vectors, dtype=float)[:, :k])
                else:
                    V0 = eigen.give_initial_eigenvectors(vop, sub_at, k, self.rng).V
            out = self._search(k, x_start, V0, begin_id)
            if not out.converged:
                continue
            sid, is_new = self._register(out, begin_id)
            if queue is not None and (is_new or continue_mode):
                queue.append(sid)
            if out.morse_index > self.max_index:
                self.max_index = out.morse_index
                log.warning("'MaxIndex' updated due to a larger saddle point index.")
            return sid
        raise RuntimeError(NO_SADDLE_MESSAGE)

    def _expand(self, rec: SaddleRecord, queue: deque):
        k = rec.morse_index
        B = rec.unstable_basis
        for j in range(k - 1, max(0, k - self.cfg.max_index_gap) - 1, -1):
            if j > 0:
                combos = eigen.column_combinations(B.shape[1], j, self.cfg.eigen_combination)
            else:
                combos = [()]
            for combo in combos:
                perts = generate_perturbations(B, self.cfg.perturbation_method, self.cfg.perturbation_radius,
                                               self.cfg.perturbation_number, self.rng)
                V0 = B[:, list(combo)] if j > 0 else None
                for p in perts:
                    out = self._search(j, rec.position + p, V0, rec.id)
                    if not out.converged:
                        continue
                    if out.morse_index > j:
                        log.info("Relaxed stopping reached a saddle of higher index (%d > %d); discarded.",
                                 out.morse_index, j)
                        continue
                    sid, is_new = self._register(out, rec.id)
                    if is_new:
                        queue.append(sid)

    def bfs(self, queue: deque):
        while queue:
            self._expand(self.graph.saddles[queue.popleft()], queue)

    def run(self) -> LandscapeGraph:
        queue: deque = deque()
        self.initial_saddle_search(self.primary_x0, -1, False, queue=queue)
        self.bfs(queue)
        return self.graph

    # -- restarts -----------------------------------------------------------

    def restart_from_point(self, x_new, max_index: int) -> LandscapeGraph:
        saved = self.max_index
        self.max_index = max_index
        try:
            queue: deque = deque()
            self.initial_saddle_search(x_new, -1, True, queue=queue)
            self.bfs(queue)
        finally:
            self.max_index = saved
        return self.graph

    def restart_from_saddle(self, begin_id: int, perturbation, max_index: int) -> LandscapeGraph:
        if begin_id < 0 or begin_id >= len(self.graph.saddles):
            raise ValueError("Invalid saddle ID")
        rec = self.graph.saddles[begin_id]
        start = rec.position + np.asarray(perturbation, dtype=float).reshape(-1)
        saved = self.max_index
        self.max_index = max_index
        try:
            queue: deque = deque()
            self.initial_saddle_search(start, begin_id, True, subspace_point=rec.position, queue=queue)
            self.bfs(queue)
        finally:
            self.max_index = saved
        return self.graph


def run_landscape(spec: SystemSpec, search_cfg: SearchConfig, cfg: LandscapeConfig, x0) -> Landscape:
    land = Landscape(spec, search_cfg, cfg, x0)
    land.run()
    return land


def initial_saddle_search(spec: SystemSpec, search_cfg: SearchConfig, cfg: LandscapeConfig, x0) -> SaddleRecord:
    land = Landscape(spec, search_cfg, cfg, x0)
    sid = land.initial_saddle_search(land.primary_x0)
    return land.graph.saddles[sid]
