"""Built-in benchmark systems with reference configurations and oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .system import SystemSpec, build_from_energy, build_from_force

BUTTERFLY_ENERGY = "x1**4 -1.5*x1**2*x2**2+ x2**4 - 2*x2**3 + x2**2 + x1**2*x2 - 2*x1**2"

MB_A = (-200.0, -100.0, -170.0, 15.0)
MB_a = (-1.0, -1.0, -6.5, 0.7)
MB_b = (0.0, 0.0, 11.0, 0.6)
MB_c = (-10.0, -10.0, -6.5, 0.7)
MB_XBAR = (1.0, 0.0, -0.5, -1.0)
MB_YBAR = (0.0, 0.5, 1.5, 1.0)


@dataclass
class GallerySystem:
    name: str
    factory: Callable[[], SystemSpec]
    config: dict
    oracle: dict = field(default_factory=dict)

    def build(self) -> SystemSpec:
        return self.factory()


def mueller_brown_expression() -> str:
    terms = []
    for A, a, b, c, xb, yb in zip(MB_A, MB_a, MB_b, MB_c, MB_XBAR, MB_YBAR):
        dx = f"(x1 - ({xb}))"
        dy = f"(x2 - ({yb}))"
        terms.append(f"({A})*exp(({a})*{dx}**2 + ({b})*{dx}*{dy} + ({c})*{dy}**2)")
    return " + ".join(terms)


def cubic_expression(n: int) -> str:
    return " + ".join(f"{j}*(x{j}**2 - 1)**2" for j in range(1, n + 1))


def cubic_stationary_points(n: int) -> list[tuple[np.ndarray, int]]:
    """Every point of {-1, 0, 1}^n with its index (number of zero coordinates)."""
    return [(np.array(p, dtype=float), sum(1 for v in p if v == 0)) for p in itertools.product((-1, 0, 1), repeat=n)]


def cubic_projection() -> np.ndarray:
    """Linear map to the plane used for plotting the 3-D cubic landscape."""
    return np.array([[1.0, 1.5, 0.0], [1.0, 0.0, 2.5]])


def butterfly() -> GallerySystem:
    config = {
        "energy_expression": BUTTERFLY_ENERGY,
        "initial_point": [0.1, 0.1],
        "time_step": 1e-2,
        "max_index": 2,
        "eigen_method": "euler",
        "eigen_max_iter": 1,
        "max_iter": 10000,
        "eigen_combination": "all",
        "perturbation_number": 1,
        "perturbation_radius": 1e-2,
        "report_interval": 100,
        "export": {"grid_n": 100},
    }
    return GallerySystem("butterfly", lambda: build_from_energy(BUTTERFLY_ENERGY, 2), config,
                         {"seed_index": 2, "seed_iterations": 1300})


def mueller_brown() -> GallerySystem:
    expr = mueller_brown_expression()
    config = {
        "energy_expression": expr,
        "initial_point": [0.15, 0.25],
        "time_step": 1e-4,
        "max_iter": 20000,
        "max_index": 1,
        "restarts": [{"type": "saddle", "id": 1, "perturbation": [-0.01, 0.0], "max_index": 1}],
        "export": {"grid_n": 100},
    }
    oracle = {
        "minima": [(-0.558224, 1.441726), (0.623499, 0.028038), (-0.050011, 0.466694)],
        "index1": [(-0.822002, 0.624313), (0.212487, 0.292988)],
    }
    return GallerySystem("mueller_brown", lambda: build_from_energy(expr, 2), config, oracle)


def cubic(n: int = 3) -> GallerySystem:
    expr = cubic_expression(n)
    config = {
        "energy_expression": expr,
        "initial_point": [0.1] * n,
        "time_step": 2e-2,
        "max_iter": 10000,
        "max_index": n,
        "max_index_gap": 1,
        "eigen_combination": "all",
        "perturbation_number": 2,
        "perturbation_radius": 1e-2,
        "rng_seed": 1121,
    }
    if n == 3:
        config["export"] = {"projection": cubic_projection().tolist()}
    counts = {m: int(np.prod([2] * (n - m)) * len(list(itertools.combinations(range(n), m)))) for m in range(n + 1)}
    return GallerySystem(f"cubic{n}", lambda: build_from_energy(expr, n), config,
                         {"stationary": cubic_stationary_points(n), "counts": counts})


# -- phase field ---------------------------------------------------------------

def periodic_laplacian(phi: np.ndarray, h: float) -> np.ndarray:
    """Five-point Laplacian with periodic wrap on a square grid."""
    return (np.roll(phi, 1, 0) + np.roll(phi, -1, 0) + np.roll(phi, 1, 1) + np.roll(phi, -1, 1) - 4.0 * phi) / (h * h)


def phase_field_force(n_grid: int, kappa: float) -> Callable:
    """Normalized field ``-(kappa Lap(phi) + phi - phi^3)`` on the flattened grid."""
    h = 1.0 / n_grid

    def force(x):
        phi = np.asarray(x, dtype=float).reshape(n_grid, n_grid)
        return -(kappa * periodic_laplacian(phi, h) + phi - phi**3).reshape(-1)

    return force


def phase_field_energy(n_grid: int, kappa: float) -> Callable:
    """Discrete energy whose gradient (per cell) is :func:`phase_field_force`."""
    h = 1.0 / n_grid

    def energy(x):
        phi = np.asarray(x, dtype=float).reshape(n_grid, n_grid)
        gx = (np.roll(phi, -1, 0) - phi) / h
        gy = (np.roll(phi, -1, 1) - phi) / h
        return float(np.sum(0.5 * kappa * (gx**2 + gy**2) + 0.25 * (phi**2 - 1.0) ** 2))

    return energy


def phase_field_hessian(phi, n_grid: int, kappa: float) -> np.ndarray:
    """Exact dense Hessian ``-kappa Lap - I + 3 diag(phi^2)``."""
    d = n_grid * n_grid
    h = 1.0 / n_grid
    lap = np.empty((d, d))
    eye = np.eye(d)
    for i in range(d):
        lap[:, i] = periodic_laplacian(eye[i].reshape(n_grid, n_grid), h).reshape(-1)
    phi = np.asarray(phi, dtype=float).reshape(-1)
    return -kappa * lap - np.eye(d) + 3.0 * np.diag(phi**2)


def translation_match(shape, eps: float = 0.05) -> Callable:
    """Equal up to a circular shift, compared in max-norm."""
    shape = tuple(shape)

    def same(x, y) -> bool:
        a = np.asarray(x, dtype=float).reshape(shape)
        b = np.asarray(y, dtype=float).reshape(shape)
        for s0 in range(shape[0]):
            for s1 in range(shape[1]):
                if np.max(np.abs(a - np.roll(b, (s0, s1), axis=(0, 1)))) <= eps:
                    return True
        return False

    return same


def translation_match_fft(shape, threshold: float = 0.99) -> Callable:
    """Equal up to a circular shift, by peak normalized cross-correlation."""
    shape = tuple(shape)

    def same(x, y) -> bool:
        a = np.asarray(x, dtype=float).reshape(shape)
        b = np.asarray(y, dtype=float).reshape(shape)
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < 1e-12 or nb < 1e-12:
            return bool(na < 1e-12 and nb < 1e-12)
        corr = np.fft.ifft2(np.fft.fft2(a) * np.conj(np.fft.fft2(b))).real
        return bool(corr.max() / (na * nb) > threshold)

    return same


def phase_field_spec(n_grid: int = 16, kappa: float = 0.05, dimer_length: float = 1e-3) -> SystemSpec:
    spec = build_from_force(phase_field_force(n_grid, kappa), n_grid * n_grid, True,
                            symmetry_check=False, dimer_length=dimer_length)
    spec.warnings.clear()
    return spec


def phase_field_initial_point(n_grid: int, seed: int = 7, amplitude: float = 0.5) -> np.ndarray:
    """Smooth single-mode pattern plus small noise."""
    rng = np.random.default_rng(seed)
    s = np.arange(n_grid) / n_grid
    base = amplitude * np.cos(2 * np.pi * s)[:, None] * np.ones(n_grid)[None, :]
    return (base + 0.01 * rng.standard_normal((n_grid, n_grid))).reshape(-1)


def phase_field(n_grid: int = 16, kappa: float = 0.05) -> GallerySystem:
    config = {
        "gallery_system": {"name": "phase_field", "n_grid": n_grid, "kappa": kappa},
        "initial_point": phase_field_initial_point(n_grid).tolist(),
        "gradient_system": True,
        "symmetry_check": False,
        "dimer_length": 1e-3,
        "hessian_dimer_length": 1e-3,
        "time_step": 1e-2,
        "max_iter": 5000,
        "max_index": 1,
        "max_index_gap": 3,
        "eigen_method": "lobpcg",
        "eigen_max_iter": 2,
        "acceleration": "heavyball",
        "momentum": 0.8,
        "perturbation_radius": 0.1,
        "save_trajectory": False,
        "same_judgement": {"method": "translation", "shape": [n_grid, n_grid], "tol": 0.05},
    }
    return GallerySystem("phase_field", lambda: phase_field_spec(n_grid, kappa), config,
                         {"n_grid": n_grid, "kappa": kappa})


GALLERY = {
    "butterfly": butterfly,
    "mueller_brown": mueller_brown,
    "cubic": cubic,
    "phase_field": phase_field,
}


def get(name: str, **kwargs) -> GallerySystem:
    try:
        return GALLERY[name](**kwargs)
    except KeyError:
        raise KeyError(f"unknown gallery system {name!r}; choose from {sorted(GALLERY)}") from None
