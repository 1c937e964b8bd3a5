"""System definitions normalized to one internal field.

Every system is reduced to a :class:`SystemSpec` whose ``force`` evaluates the
normalized field ``G``: ``G = grad E`` for gradient systems, and ``G = -F``
for a general autonomous system ``dx/dt = F(x)``.  All downstream code reads
only ``G``, so "descent" always means moving along ``-G``.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import (
    Expr,
    ExpressionError,
    compile_gradient,
    compile_scalar,
    max_var_index,
    parse_expression,
)

log = logging.getLogger(__name__)

DEFAULT_DIMER_LENGTH = 1e-5
PROBE_SAMPLES = 10
PROBE_TOL = 1e-6


class EvalCounter:
    """Thread-safe tallies of force evaluations and Hessian-vector products."""

    def __init__(self):
        self._lock = threading.Lock()
        self.force_evals = 0
        self.hvp_evals = 0

    def add_force(self, n: int = 1):
        with self._lock:
            self.force_evals += n

    def add_hvp(self, n: int = 1):
        with self._lock:
            self.hvp_evals += n

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.force_evals, self.hvp_evals


class _CountingForce:
    def __init__(self, fn: Callable, dim: int, counter: EvalCounter):
        self.fn = fn
        self.dim = dim
        self.counter = counter

    def __call__(self, x) -> np.ndarray:
        self.counter.add_force()
        out = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float).reshape(-1)
        if out.shape[0] != self.dim:
            raise ValueError(f"force returned {out.shape[0]} components, expected {self.dim}")
        return out


@dataclass
class SystemSpec:
    dim: int
    force: Callable[[np.ndarray], np.ndarray]
    energy: Callable[[np.ndarray], float] | None = None
    is_gradient: bool = True
    dimer_length: float = DEFAULT_DIMER_LENGTH
    expr: Expr | None = None
    counter: EvalCounter = field(default_factory=EvalCounter)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.dimer_length > 0:
            raise ValueError("dimer_length must be positive")
        if self.energy is not None and not self.is_gradient:
            raise ValueError("a system with an energy must be a gradient system")

    def grad(self, x) -> np.ndarray:
        return self.force(x)


def numerical_gradient(energy: Callable, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient ``(E(x+h e_i) - E(x-h e_i)) / 2h``."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty(x.shape[0])
    step = np.zeros_like(x)
    for i in range(x.shape[0]):
        step[i] = h
        g[i] = (energy(x + step) - energy(x - step)) / (2 * h)
        step[i] = 0.0
    return g


def _warn(spec_warnings: list[str], message: str):
    spec_warnings.append(message)
    log.warning(message)


def build_from_energy(
    energy,
    dim: int,
    *,
    numerical_grad: bool = False,
    grad_step: float = 1e-6,
    dimer_length: float = DEFAULT_DIMER_LENGTH,
    counter: EvalCounter | None = None,
    check_points: int = 3,
    seed: int = 0,
) -> SystemSpec:
    """Build a gradient system from an energy (text, :class:`Expr` or callable).

    Text and trees are differentiated symbolically unless ``numerical_grad``
    is set; plain callables always fall back to central differences.
    """
    counter = counter or EvalCounter()
    expr = None
    if isinstance(energy, str):
        energy = parse_expression(energy, dim)
    if isinstance(energy, Expr):
        expr = energy
        used = max_var_index(expr)
        if used > dim:
            raise ExpressionError(f"expression uses x{used} but dim is {dim}")
        energy_fn = compile_scalar(expr, dim)
    else:
        energy_fn = energy

    if expr is not None and not numerical_grad:
        grad_fn = compile_gradient(expr, dim)
    else:
        def grad_fn(x, _e=energy_fn, _h=grad_step):
            return numerical_gradient(_e, x, _h)

    spec = SystemSpec(
        dim=dim,
        force=_CountingForce(grad_fn, dim, counter),
        energy=energy_fn,
        is_gradient=True,
        dimer_length=dimer_length,
        expr=expr,
        counter=counter,
    )
    if check_points and expr is not None and not numerical_grad:
        _check_gradient(spec, energy_fn, grad_fn, check_points, seed)
    return spec


def _check_gradient(spec, energy_fn, grad_fn, n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        x = rng.uniform(-1.0, 1.0, spec.dim)
        g = grad_fn(x)
        fd = numerical_gradient(energy_fn, x, 1e-6)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(fd))):
            continue
        err = np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(g))
        if err > 1e-4:
            _warn(spec.warnings, f"symbolic gradient disagrees with finite differences (rel err {err:.2e})")
            return


def symmetry_probe(
    spec: SystemSpec,
    samples: int = PROBE_SAMPLES,
    tol: float = PROBE_TOL,
    center=None,
    seed: int = 0,
) -> bool:
    """Test whether the Jacobian of the field is symmetric at random points.

    Draws points in the box ``center + [-1, 1]^d`` and unit vectors ``u, v``;
    compares ``<u, J v>`` with ``<v, J u>`` using dimer products.
    """
    rng = np.random.default_rng(seed)
    d = spec.dim
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(-1)
    L = spec.dimer_length
    worst = 0.0
    for _ in range(samples):
        x = center + rng.uniform(-1.0, 1.0, d)
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        jv = (spec.force(x + L * v) - spec.force(x - L * v)) / (2 * L)
        ju = (spec.force(x + L * u) - spec.force(x - L * u)) / (2 * L)
        a, b = float(u @ jv), float(v @ ju)
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
    return worst <= tol


def build_from_force(
    force_fn: Callable,
    dim: int,
    claimed_gradient: bool | None = None,
    *,
    symmetry_check: bool = True,
    dimer_length: float = DEFAULT_DIMER_LENGTH,
    probe_samples: int = PROBE_SAMPLES,
    probe_tol: float = PROBE_TOL,
    probe_center=None,
    seed: int = 0,
    counter: EvalCounter | None = None,
) -> SystemSpec:
    """Wrap a user field.  ``force_fn`` must already follow the sign
    convention: it returns ``grad E`` or, for non-gradient systems, ``-F``.
    """
    counter = counter or EvalCounter()
    spec = SystemSpec(
        dim=dim,
        force=_CountingForce(force_fn, dim, counter),
        is_gradient=bool(claimed_gradient) if claimed_gradient is not None else True,
        dimer_length=dimer_length,
        counter=counter,
    )
    if not symmetry_check:
        if claimed_gradient is None:
            _warn(spec.warnings, "symmetry check disabled and no gradient flag given; assuming a gradient system")
        return spec
    probed = symmetry_probe(spec, probe_samples, probe_tol, probe_center, seed)
    if claimed_gradient is None:
        spec.is_gradient = probed
    elif probed != claimed_gradient:
        _warn(
            spec.warnings,
            f"gradient_system={claimed_gradient} contradicts symmetry probe ({probed}); keeping the declared value",
        )
    log.info("%s system detected", "gradient" if spec.is_gradient else "non-gradient")
    return spec

