"""Index-k saddle search: reflected-field iteration with optional momentum,
Barzilai-Borwein steps, and the plain descent path for minima."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import eigen
from .eigen import IndexReport, SubspaceBasis
from .hessian import HessianOperator
from .system import SystemSpec

log = logging.getLogger(__name__)

BB_CAP = 0.5
ACCELERATIONS = ("none", "heavyball", "nesterov")
EIGEN_METHODS = ("auto", "euler", "power", "lobpcg")


@dataclass
class SearchConfig:
    saddle_index: int = 1
    time_step: float = 1e-2
    max_iter: int = 1000
    tolerance: float = 1e-6
    search_area: float = 1000.0
    bb_step: bool = False
    bb_cap: float = BB_CAP
    acceleration: str = "none"
    momentum: float = 0.0
    nesterov_choice: int = 1
    nesterov_restart: int | None = None
    verbose: bool = False
    report_interval: int = 100
    save_trajectory: bool = True
    eigen_method: str = "auto"
    eigen_max_iter: int = 10
    eigen_step_size: float = 1e-2
    precision_tol: float = 1e-5
    hessian_dimer_length: float = 1e-5
    exact_hessian: bool = False
    eigvec_unified: bool = False

    def __post_init__(self):
        if self.saddle_index < 0:
            raise ValueError("saddle_index must be >= 0")
        if not self.time_step > 0:
            raise ValueError("time_step must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.search_area > 0:
            raise ValueError("search_area must be positive")
        if not self.bb_cap > 0:
            raise ValueError("bb_cap must be positive")
        if self.acceleration not in ACCELERATIONS:
            raise ValueError(f"acceleration must be one of {ACCELERATIONS}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.nesterov_choice not in (1, 2):
            raise ValueError("nesterov_choice must be 1 or 2")
        if self.nesterov_restart is not None and self.nesterov_restart < 1:
            raise ValueError("nesterov_restart must be >= 1")
        if self.report_interval < 1:
            raise ValueError("report_interval must be >= 1")
        if self.eigen_method not in EIGEN_METHODS:
            raise ValueError(f"eigen_method must be one of {EIGEN_METHODS}")
        if self.eigen_max_iter < 1:
            raise ValueError("eigen_max_iter must be >= 1")
        if not self.eigen_step_size > 0:
            raise ValueError("eigen_step_size must be positive")


@dataclass
class Trajectory:
    points: np.ndarray  # (n, d)
    times: np.ndarray  # (n,), cumulative pseudo-time, times[0] == 0


@dataclass
class SearchOutcome:
    status: str  # converged | diverged | max_iter_no_convergence
    x_final: np.ndarray
    iterations: int
    morse_index: int = -1
    degenerate: bool = False
    index_report: IndexReport | None = None
    trajectory: Trajectory | None = None
    gnorm_history: list = field(default_factory=list)
    cumulative_steps: list = field(default_factory=list)
    loop_hvp_evals: int = 0
    note: str = ""
    boundary: np.ndarray | None = None  # (d, 2) min/max of visited points
    search_id: int = -1

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def bb2_step(dx, dg, g, tau: float = BB_CAP, fallback: float | None = None) -> float:
    """``min(tau / |g|, |<dx, dg> / <dg, dg>|)``; a degenerate quotient falls back."""
    dx, dg, g = (np.asarray(a, dtype=float) for a in (dx, dg, g))
    gg = float(dg @ dg)
    gn = float(np.linalg.norm(g))
    if gg == 0.0 or gn == 0.0:
        if fallback is None:
            raise ValueError("BB2 step undefined for zero gradient difference or zero gradient")
        return fallback
    bb = abs(float(dx @ dg) / gg)
    if bb == 0.0 and fallback is not None:
        return min(tau / gn, fallback)
    return min(tau / gn, bb)


def accelerate_heavyball(x, x_prev, r, dt: float, alpha: float) -> np.ndarray:
    return x + dt * r + alpha * (x - x_prev)


class NesterovSchedule:
    """Extrapolation coefficients for Nesterov steps.

    Schedule 1 uses ``(n - base) / (n - base + 3)`` where ``base`` jumps to the
    current step at every restart; schedule 2 follows the theta recursion
    ``theta <- (1 + sqrt(1 + 4 theta^2)) / 2`` and is reset at restarts.
    """

    def __init__(self, choice: int = 1, restart: int | None = None):
        self.choice = choice
        self.restart = restart
        self.base = 0
        self.theta = self._theta_start()

    @staticmethod
    def _advance(theta: float) -> float:
        return (1.0 + math.sqrt(1.0 + 4.0 * theta * theta)) / 2.0

    def _theta_start(self) -> float:
        return self._advance(1.0)

    def gamma(self, n: int) -> float:
        """Coefficient for step ``n`` (1-based); call once per step in order."""
        if self.choice == 2:
            new = self._advance(self.theta)
            g = (self.theta - 1.0) / new
            self.theta = new
            return g
        m = n - self.base
        return m / (m + 3.0)

    def after_step(self, n: int):
        if self.restart is not None and n % self.restart == 0:
            if self.choice == 2:
                self.theta = self._theta_start()
            else:
                self.base = n


def theta_step(theta: float) -> tuple[float, float]:
    """One theta-recursion step: returns ``(theta_new, (theta - 1) / theta_new)``."""
    new = NesterovSchedule._advance(theta)
    return new, (theta - 1.0) / new


def nesterov_gamma(n: int, choice: int = 1, restart: int | None = None) -> float:
    """Stateless coefficient at step ``n`` of a fresh schedule (``n = 0`` gives 0)."""
    if n <= 0:
        return 0.0
    sched = NesterovSchedule(choice, restart)
    g = 0.0
    for j in range(1, n + 1):
        g = sched.gamma(j)
        if j < n:
            sched.after_step(j)
    return g


def accelerate_nesterov(spec: SystemSpec, x, x_prev, gamma_n: float, dt: float, V) -> tuple[np.ndarray, np.ndarray]:
    """Extrapolate to ``w`` and take the reflected step from there."""
    w = x + gamma_n * (x - x_prev)
    gw = spec.force(w)
    return w, w - dt * reflect(gw, V)


def reflect(g, V) -> np.ndarray:
    """``g - 2 V V^T g``: the field with its unstable components reversed."""
    if V is None or V.shape[1] == 0:
        return g
    return g - 2.0 * V @ (V.T @ g)


def _resolve_method(cfg: SearchConfig, spec: SystemSpec) -> str:
    if cfg.eigen_method == "auto":
        return "lobpcg" if spec.is_gradient else "power"
    if cfg.eigen_method == "lobpcg" and not spec.is_gradient:
        raise ValueError("eigen_method 'lobpcg' requires a gradient system")
    return cfg.eigen_method


def search_operator(spec: SystemSpec, cfg: SearchConfig) -> HessianOperator:
    """Operator used inside the loop (solver dimer length)."""
    return HessianOperator(spec, "exact" if cfg.exact_hessian else "dimer", spec.dimer_length)


def verify_operator(spec: SystemSpec, cfg: SearchConfig) -> HessianOperator:
    """Operator used for index checks and dense reconstruction."""
    return HessianOperator(spec, "exact" if cfg.exact_hessian else "dimer", cfg.hessian_dimer_length)


def update_subspace(method: str, op: HessianOperator, x, V, cfg: SearchConfig, rng=None):
    if method == "lobpcg":
        return eigen.lobpcg_smallest(op, x, V, cfg.eigen_max_iter, precision_tol=cfg.precision_tol, rng=rng)
    if method == "power":
        return eigen.power_update(op, x, V, cfg.eigen_step_size, cfg.eigen_max_iter, cfg.precision_tol, rng)
    return eigen.euler_update(op, x, V, cfg.eigen_step_size, cfg.eigen_max_iter, op.spec.is_gradient, cfg.precision_tol, rng)


def _loop(spec: SystemSpec, cfg: SearchConfig, x0, V0, origin, rng) -> SearchOutcome:
    k = cfg.saddle_index
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    d = x.shape[0]
    origin = x.copy() if origin is None else np.asarray(origin, dtype=float).reshape(-1)
    V = None if k == 0 else eigen._as_basis(V0).copy()
    if V is not None and V.shape != (d, k):
        raise ValueError(f"initial subspace must be {d}x{k}, got {V.shape}")
    method = _resolve_method(cfg, spec) if k else None
    op = search_operator(spec, cfg)
    vop = verify_operator(spec, cfg)
    hvp_start = spec.counter.hvp_evals

    x_prev = x.copy()
    g = spec.force(x)
    g_prev = g
    gnorms = [float(np.linalg.norm(g))]
    steps = [0.0]
    points = [x.copy()] if cfg.save_trajectory else None
    lo, hi = x.copy(), x.copy()
    nesterov = NesterovSchedule(cfg.nesterov_choice, cfg.nesterov_restart) if cfg.acceleration == "nesterov" else None
    dt = cfg.time_step
    stopped = False
    j = 0

    def fail(status, msg):
        log.warning(msg)
        return SearchOutcome(status, x, j, gnorm_history=gnorms, cumulative_steps=list(np.cumsum(steps)),
                             loop_hvp_evals=spec.counter.hvp_evals - hvp_start, note=msg)

    for j in range(1, cfg.max_iter + 1):
        if cfg.bb_step and j > 1:
            dt = bb2_step(x - x_prev, g - g_prev, g, cfg.bb_cap, cfg.time_step)
        steps.append(dt)
        if nesterov is not None:
            _, x_new = accelerate_nesterov(spec, x, x_prev, nesterov.gamma(j), dt, V)
        else:
            alpha = cfg.momentum if cfg.acceleration == "heavyball" else 0.0
            x_new = accelerate_heavyball(x, x_prev, -reflect(g, V), dt, alpha)
        x_prev, x = x, x_new
        g_prev = g
        flag = True
        if V is not None:
            basis, flag = update_subspace(method, op, x, V, cfg, rng)
            V = basis.V
        g = spec.force(x)
        gn = float(np.linalg.norm(g))
        if cfg.verbose and j % cfg.report_interval == 0:
            print(f"Iteration: {j}|| Norm of gradient: {gn:.6f}")
        if points is not None:
            points.append(x.copy())
        if not np.all(np.isfinite(x)) or not np.isfinite(gn):
            return fail("diverged", "Iteration diverged: non-finite value encountered. Skipping to next search.")
        if np.linalg.norm(x - origin) > cfg.search_area:
            return fail("diverged", "Iteration diverged: Search point exceeds feasible region. Skipping to next search.")
        np.minimum(lo, x, out=lo)
        np.maximum(hi, x, out=hi)
        gnorms.append(gn)
        if gn < cfg.tolerance:
            if flag:
                stopped = True
                break
            if j == 1 or gnorms[-2] >= cfg.tolerance:
                if eigen.check_index_k(vop, x, k, cfg.precision_tol):
                    stopped = True
                    break
        if nesterov is not None:
            nesterov.after_step(j)

    loop_hvps = spec.counter.hvp_evals - hvp_start
    note = ""
    report = eigen.find_index(vop, x, cfg.precision_tol, canonical=cfg.eigvec_unified)
    if not stopped:
        if gnorms[-1] >= cfg.tolerance or report.neg + report.zero < k:
            out = fail("max_iter_no_convergence",
                       "Iteration not converged: Maximum iterations reached without convergence. Skipping to next search.")
            out.loop_hvp_evals = loop_hvps
            return out
        note = "eigenvalue approximation may have hidden a qualifying saddle during iteration"
        log.info(note)
    if report.zero:
        log.warning("Degenerate saddle point detected under precision tol=%g: negative=%d, zero=%d, positive=%d",
                    cfg.precision_tol, report.neg, report.zero, report.pos)
    else:
        log.info("Non-degenerate saddle point identified: Morse index =%d", report.neg)
    traj = None
    times = np.cumsum(steps)
    if points is not None:
        traj = Trajectory(np.array(points), times)
    return SearchOutcome(
        "converged", x, j, report.neg, report.zero > 0, report, traj, gnorms, list(times),
        loop_hvps, note, np.column_stack([lo, hi]),
    )


def hisd_search(spec: SystemSpec, cfg: SearchConfig, x0, V0, origin=None, rng=None) -> SearchOutcome:
    """Search for an index-``cfg.saddle_index`` saddle starting at ``x0``.

    ``origin`` is the centre of the feasible ball of radius ``search_area``
    (the landscape's primary initial point); it defaults to ``x0``.
    """
    if cfg.saddle_index < 1:
        raise ValueError("hisd_search needs saddle_index >= 1; use sd_search for minima")
    V0 = V0.V if isinstance(V0, SubspaceBasis) else V0
    return _loop(spec, cfg, x0, V0, origin, rng)


def sd_search(spec: SystemSpec, cfg: SearchConfig, x0, origin=None) -> SearchOutcome:
    """Plain (optionally accelerated) descent on ``G`` for index-0 points."""
    if cfg.saddle_index != 0:
        raise ValueError("sd_search requires saddle_index == 0")
    return _loop(spec, cfg, x0, None, origin, None)
